"""Per-receiver blockage features.

Every feature is computed for a straight TX-RX link.  Along-path stations are
parametrised by the fraction ``t`` of the horizontal projection, so a station
at ``t`` sits ``t * d`` from the TX along the 3D path; lateral offsets are
measured in the horizontal plane.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geodata import TrunkSet

__all__ = [
    'SPEED_OF_LIGHT', 'SiteFeatures',
    'wavelength', 'fresnel_radius', 'distance_3d', 'woodland_depth',
    'count_trunks_in_fresnel', 'foliage_depth', 'foliage_area',
    'compute_features', 'compute_features_many',
    ]

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299792458.0
DEFAULT_SAMPLES_PER_CELL = 4


@dataclass(frozen=True)
class SiteFeatures:
    distance_3d: float
    woodland_depth: float
    foliage_depth: float
    foliage_area: float
    trunk_count: int

    @classmethod
    def missing(cls):
        nan = float('nan')
        return cls(nan, nan, nan, nan, -1)

    def is_finite(self):
        return (all(math.isfinite(v) for v in (
            self.distance_3d, self.woodland_depth, self.foliage_depth,
            self.foliage_area)) and self.trunk_count >= 0)


def wavelength(f_c):
    """Free-space wavelength in meters for a carrier in GHz."""
    if not f_c > 0:
        raise ValueError('carrier frequency must be positive, got {!r}'.format(
            f_c))
    return SPEED_OF_LIGHT / (f_c * 1e9)


def fresnel_radius(d1, d2, f_c):
    """First Fresnel zone radius at distances d1, d2 from the two ends."""
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    if np.any(d1 < 0) or np.any(d2 < 0):
        raise ValueError('distances must be non-negative')
    total = d1 + d2
    if np.any(total <= 0):
        raise ValueError('d1 + d2 must be positive')
    r = np.sqrt(wavelength(f_c) * d1 * d2 / total)
    return float(r) if r.ndim == 0 else r


def distance_3d(tx, rx):
    return math.dist(tuple(map(float, tx)), tuple(map(float, rx)))


def woodland_depth(distance, edge_offset):
    """Path length inside the woodland: distance minus TX-to-edge offset."""
    return max(0.0, float(distance) - float(edge_offset))


def _link(tx, rx):
    d = distance_3d(tx, rx)
    if d <= 0:
        raise ValueError('TX and RX coincide; link has zero length')
    return d, float(tx[0]), float(tx[1]), float(rx[0]), float(rx[1])


def count_trunks_in_fresnel(tx, rx, trunks, f_c):
    """Number of trunks (vertical lines) crossing the first Fresnel zone.

    A trunk counts when its horizontal distance to the link is below the
    zone radius at its along-path station, strictly between the ends.
    """
    d, ax, ay, bx, by = _link(tx, rx)
    xy = trunks.xy if isinstance(trunks, TrunkSet) else np.asarray(
        trunks, dtype=np.float64).reshape(-1, 2)
    if xy.shape[0] == 0:
        return 0
    return _kernels.trunk_count(np.ascontiguousarray(xy), ax, ay, bx, by, d,
                                wavelength(f_c))


def foliage_depth(tx, rx, mask, samples_per_cell=DEFAULT_SAMPLES_PER_CELL):
    """Foliage length along the line of sight, from a pixel ratio.

    The horizontal projection of the path is sampled at segment midpoints
    spaced at most ``cell_size / samples_per_cell`` apart; the fraction of
    samples falling on foliage cells scales the 3D distance.  Samples off
    the grid count as non-foliage.
    """
    if samples_per_cell < 2:
        raise ValueError('samples_per_cell must be >= 2')
    d, ax, ay, bx, by = _link(tx, rx)
    spacing = mask.cell_size / samples_per_cell
    n = max(1, int(math.ceil(math.hypot(bx - ax, by - ay) / spacing)))
    hits, outside = _kernels.mask_path_count(
        _mask_array(mask), mask.x_origin, mask.y_origin, mask.cell_size,
        ax, ay, bx, by, n)
    if outside:
        log.warning('%d of %d LoS samples fall outside the foliage grid',
                    outside, n)
    return hits / n * d


def foliage_area(tx, rx, mask, f_c):
    """Foliage area (m^2) inside the ground footprint of the Fresnel zone.

    Cells are included when their centers fall inside the footprint.
    """
    d, ax, ay, bx, by = _link(tx, rx)
    hits, _ = _kernels.footprint_count(
        _mask_array(mask), mask.x_origin, mask.y_origin, mask.cell_size,
        ax, ay, bx, by, d, wavelength(f_c))
    return hits * mask.cell_size ** 2


def _mask_array(mask):
    # nodata and NaN never equal 1.0, so the raw values work as-is
    return np.ascontiguousarray(mask.values, dtype=np.float64)


def compute_features(geometry, rx, mask, trunks,
                     samples_per_cell=DEFAULT_SAMPLES_PER_CELL):
    tx = geometry.tx_position
    f_c = geometry.carrier_frequency_ghz
    d = distance_3d(tx, rx)
    if d <= 0:
        raise ValueError('receiver coincides with the transmitter')
    return SiteFeatures(
        distance_3d=d,
        woodland_depth=woodland_depth(d, geometry.woodland_edge_offset_m),
        foliage_depth=foliage_depth(tx, rx, mask, samples_per_cell),
        foliage_area=foliage_area(tx, rx, mask, f_c),
        trunk_count=count_trunks_in_fresnel(tx, rx, trunks, f_c),
        )


def compute_features_many(geometry, receivers, mask, trunks,
                          samples_per_cell=DEFAULT_SAMPLES_PER_CELL, jobs=1):
    """Features for many receivers, in input order.

    Receivers that fail (e.g. coincide with the TX) yield
    ``SiteFeatures.missing()`` and a logged warning.
    """
    def one(rx):
        try:
            return compute_features(geometry, rx, mask, trunks,
                                    samples_per_cell)
        except ValueError as exc:
            log.warning('feature computation failed at %s: %s', tuple(rx), exc)
            return SiteFeatures.missing()

    receivers = list(receivers)
    if jobs > 1 and len(receivers) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, receivers))
    return [one(rx) for rx in receivers]
