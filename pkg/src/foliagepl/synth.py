"""Reproducible synthetic forest scenes.

A scene is a terrain grid, a LiDAR canopy-top grid, trunk locations drawn
from a clustered (Thomas) point process, and receiver tracks whose path
loss is generated by one of the models plus Gaussian noise.  The same seed
always gives the same files.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geodata
from .geodata import (MeasurementRecord, RasterGrid, SiteGeometry, TrunkSet,
                      extract_foliage_mask)
from .geometry import compute_features_many
from .models import (FEATURE_OF, excess_loss, fspl, params_class,
                     params_to_dict)
from .table import FeatureTable

__all__ = ['SceneSpec', 'Scene', 'make_scene', 'write_scene']

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 2018
    n_records: int = 1000
    n_tracks: int = 10
    model: str = 'B'
    params: dict = field(default_factory=dict)
    noise_sigma_db: float = 2.0
    cell_size: float = 1.0
    width_m: float = 240.0
    height_m: float = 240.0
    edge_offset_m: float = 15.0
    parent_density: float = 0.003     # clusters per m^2
    mean_children: float = 7.0
    cluster_spread_m: float = 4.0
    crown_radius_m: tuple = (1.5, 3.5)
    tree_height_m: tuple = (8.0, 25.0)
    carrier_frequency_ghz: float = 28.0
    height_threshold_m: float = 2.0
    samples_per_cell: int = 4
    min_distance_m: float = 3.0


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    terrain: RasterGrid
    lidar: RasterGrid
    mask: RasterGrid
    trunks: TrunkSet
    geometry: SiteGeometry
    records: list
    table: FeatureTable


def _terrain(spec, rng):
    ny = int(round(spec.height_m / spec.cell_size))
    nx = int(round(spec.width_m / spec.cell_size))
    x = (np.arange(nx) + 0.5) * spec.cell_size
    y = (ny - np.arange(ny) - 0.5) * spec.cell_size
    X, Y = np.meshgrid(x, y)
    a, b = rng.uniform(-0.02, 0.02, 2)
    phase = rng.uniform(0, 2 * np.pi)
    z = 1600.0 + a * X + b * Y + 1.5 * np.sin(X / 35.0 + phase) * np.cos(
        Y / 50.0)
    return RasterGrid(0.0, 0.0, spec.cell_size, z)


def _trunks(spec, rng, x_min):
    area_w = spec.width_m - x_min
    n_par = rng.poisson(spec.parent_density * area_w * spec.height_m)
    parents = np.column_stack([rng.uniform(x_min, spec.width_m, n_par),
                               rng.uniform(0, spec.height_m, n_par)])
    pts = []
    for p in parents:
        k = rng.poisson(spec.mean_children)
        pts.append(p + rng.normal(0.0, spec.cluster_spread_m, (k, 2)))
    xy = np.vstack(pts) if pts else np.empty((0, 2))
    keep = ((xy[:, 0] >= x_min) & (xy[:, 0] < spec.width_m) &
            (xy[:, 1] >= 0) & (xy[:, 1] < spec.height_m))
    return xy[keep]


def _canopy(spec, rng, terrain, xy):
    """Conical crowns around every trunk; canopy = terrain + crown height."""
    cs = spec.cell_size
    canopy = np.zeros(terrain.shape)
    radii = rng.uniform(*spec.crown_radius_m, xy.shape[0])
    heights = rng.uniform(*spec.tree_height_m, xy.shape[0])
    cx, cy = terrain.cell_centers()
    for (x, y), r, h in zip(xy, radii, heights):
        row, col = terrain.index_of(x, y)
        w = int(np.ceil(r / cs)) + 1
        r0, r1 = max(row - w, 0), min(row + w + 1, terrain.n_rows)
        c0, c1 = max(col - w, 0), min(col + w + 1, terrain.n_cols)
        dist = np.hypot(cx[r0:r1, c0:c1] - x, cy[r0:r1, c0:c1] - y)
        crown = np.where(dist < r, h * (1.0 - 0.5 * dist / r), 0.0)
        np.maximum(canopy[r0:r1, c0:c1], crown, out=canopy[r0:r1, c0:c1])
    return terrain.with_values(terrain.values + canopy)


def _receivers(spec, rng, terrain, tx):
    """Straight walking tracks fanning out from the TX into the forest."""
    per_track = np.full(spec.n_tracks, spec.n_records // spec.n_tracks)
    per_track[:spec.n_records % spec.n_tracks] += 1
    margin = 2.0 * spec.cell_size
    max_r = min(spec.width_m - tx[0], spec.height_m / 2) - margin
    pts, ids = [], []
    for t, k in enumerate(per_track):
        ang = rng.uniform(-1.0, 1.0, 2)
        dist = np.sort(rng.uniform(spec.min_distance_m, max_r, 2))
        if t % 3 == 0:
            dist[0] = spec.min_distance_m
        ends = [(tx[0] + d * np.cos(a), tx[1] + d * np.sin(a))
                for a, d in zip(ang, dist)]
        s = np.sort(rng.uniform(0.0, 1.0, k))
        x = ends[0][0] + s * (ends[1][0] - ends[0][0])
        y = ends[0][1] + s * (ends[1][1] - ends[0][1])
        pts.append(np.column_stack([x, y]))
        ids += ['T{:02d}'.format(t + 1)] * k
    xy = np.vstack(pts)
    # keep a minimum horizontal separation from the TX
    d = np.hypot(xy[:, 0] - tx[0], xy[:, 1] - tx[1])
    scale = np.maximum(spec.min_distance_m / np.maximum(d, 1e-9), 1.0)
    xy = tx[:2] + (xy - tx[:2]) * scale[:, None]
    row, col = terrain.index_of(xy[:, 0], xy[:, 1])
    z = terrain.values[row, col] + 1.5
    return xy, z, ids


def make_scene(spec=SceneSpec()):
    rng = np.random.default_rng(spec.seed)
    terrain = _terrain(spec, rng)
    tx_xy = np.array([3.0 * spec.cell_size + 0.5, spec.height_m / 2 + 0.25])
    trow, tcol = terrain.index_of(tx_xy[0], tx_xy[1])
    tx = np.array([tx_xy[0], tx_xy[1], terrain.values[trow, tcol] + 3.0])
    xy = _trunks(spec, rng, tx_xy[0] + spec.edge_offset_m)
    lidar = _canopy(spec, rng, terrain, xy)
    mask = extract_foliage_mask(lidar, terrain, spec.height_threshold_m)
    geometry = SiteGeometry(tuple(tx), spec.carrier_frequency_ghz,
                            spec.edge_offset_m)
    trunks = TrunkSet(xy)

    rx_xy, rx_z, ids = _receivers(spec, rng, terrain, tx)
    positions = [(float(x), float(y), float(z))
                 for (x, y), z in zip(rx_xy, rx_z)]
    feats = compute_features_many(geometry, positions, mask, trunks,
                                  spec.samples_per_cell)
    params = params_class(spec.model)(**spec.params)
    placeholder = [MeasurementRecord(i, p, 1.0)
                   for i, p in zip(ids, positions)]
    table = FeatureTable.from_features(placeholder, feats)
    x = table.column(FEATURE_OF[params.model])
    clean = fspl(table.column('d_m'), spec.carrier_frequency_ghz) + \
        excess_loss(params, x, spec.carrier_frequency_ghz, 'extrapolate')
    pl = clean + rng.normal(0.0, spec.noise_sigma_db, clean.shape)
    records = [MeasurementRecord(i, p, float(v))
               for i, p, v in zip(ids, positions, pl)]
    table = FeatureTable.from_features(records, feats)
    return Scene(spec, terrain, lidar, mask, trunks, geometry, records, table)


def write_scene(scene, directory):
    """Write scene inputs plus a ready-to-run config.json; return its path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    geodata.save_ascii_grid(scene.terrain, d / 'terrain.asc')
    geodata.save_ascii_grid(scene.lidar, d / 'lidar.asc')
    geodata.write_trunks(scene.trunks, d / 'trunks.csv')
    geodata.write_measurements(scene.records, d / 'measurements.csv')
    spec = scene.spec
    params = params_to_dict(params_class(spec.model)(**spec.params))
    config = {
        'paths': {
            'terrain': 'terrain.asc', 'lidar': 'lidar.asc',
            'trunks': 'trunks.csv', 'measurements': 'measurements.csv',
            'output_dir': 'out',
            },
        'tx_position': list(scene.geometry.tx_position),
        'carrier_frequency_ghz': spec.carrier_frequency_ghz,
        'woodland_edge_offset_m': spec.edge_offset_m,
        'foliage_height_threshold_m': spec.height_threshold_m,
        'samples_per_cell': spec.samples_per_cell,
        'window_width': 10.0,
        'wmed_mode': 'strict',
        'model_c_mode': 'continuous',
        'models': ['FSPL', 'AF', 'ITU', 'WMED', 'A1', 'A2', 'B', 'C'],
        'synthetic_truth': dict(params, noise_sigma_db=spec.noise_sigma_db,
                                seed=spec.seed),
        }
    path = d / 'config.json'
    path.write_text(json.dumps(config, indent=2) + '\n')
    return path
