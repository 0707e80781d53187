"""Raster grids, trunk inventories and measurement logs.

Grids are held north-up: ``values[0]`` is the northernmost row, matching the
order rows appear in an ASCII grid file.  Coordinates are planar meters
(UTM easting/northing); no reprojection is done anywhere in the package.
"""

import csv
import io
import logging
import math
import os
import time
import urllib.error
import urllib.parse
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    'DataFormatError', 'GridParseError', 'GridAlignmentError', 'FetchError',
    'RasterGrid', 'TrunkSet', 'MeasurementRecord', 'SiteGeometry',
    'MaskSummary',
    'parse_ascii_grid', 'write_ascii_grid', 'read_ascii_grid',
    'save_ascii_grid', 'check_alignment', 'resample_nearest',
    'extract_foliage_mask', 'summarize_mask',
    'load_trunks', 'write_trunks', 'load_measurements', 'write_measurements',
    'fetch_elevation_tiles',
    ]

log = logging.getLogger(__name__)

DEFAULT_NODATA = -9999.0
DEFAULT_HEIGHT_THRESHOLD = 2.0
ALIGN_TOL = 1e-6

_HEADER_KEYS = (
    'ncols', 'nrows', 'xllcorner', 'yllcorner', 'cellsize', 'nodata_value',
    )

TRUNK_COLUMNS = ('easting_m', 'northing_m')
MEASUREMENT_COLUMNS = (
    'track_id', 'easting_m', 'northing_m', 'altitude_m', 'path_loss_db',
    )


class DataFormatError(ValueError):
    """Malformed input document; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = 'line {}: {}'.format(line, message)
        super().__init__(message)
        self.line = line


class GridParseError(DataFormatError):
    pass


class GridAlignmentError(ValueError):
    pass


class FetchError(RuntimeError):

    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """Georeferenced square-cell raster, north-up.

    ``x_origin``/``y_origin`` are the lower-left corner of the grid, as in
    the ``xllcorner``/``yllcorner`` header fields.
    """

    x_origin: float
    y_origin: float
    cell_size: float
    values: np.ndarray
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError('grid values must be a non-empty 2D array')
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError('cell_size must be positive, got {!r}'.format(
                self.cell_size))
        vals.setflags(write=False)
        object.__setattr__(self, 'values', vals)
        object.__setattr__(self, 'x_origin', float(self.x_origin))
        object.__setattr__(self, 'y_origin', float(self.y_origin))
        object.__setattr__(self, 'cell_size', float(self.cell_size))
        object.__setattr__(self, 'nodata', float(self.nodata))

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def extent(self):
        """(xmin, ymin, xmax, ymax) of the grid's outer cell edges."""
        return (
            self.x_origin, self.y_origin,
            self.x_origin + self.n_cols * self.cell_size,
            self.y_origin + self.n_rows * self.cell_size,
            )

    def valid_mask(self):
        """Boolean array, True where the cell holds data."""
        v = self.values
        return ~(np.isnan(v) | (v == self.nodata))

    def is_binary(self):
        v = self.values[self.valid_mask()]
        return bool(np.all((v == 0) | (v == 1)))

    def cell_centers(self):
        """Return (x, y) arrays of cell-center coordinates, shape of grid."""
        cs = self.cell_size
        xs = self.x_origin + (np.arange(self.n_cols) + 0.5) * cs
        ys = self.y_origin + (self.n_rows - np.arange(self.n_rows) - 0.5) * cs
        return np.meshgrid(xs, ys)

    def index_of(self, x, y):
        """Row/column indices of the cells containing points (x, y).

        Out-of-grid points get indices outside ``[0, n)``; callers check.
        """
        col = np.floor((np.asarray(x) - self.x_origin) / self.cell_size)
        row = self.n_rows - 1 - np.floor(
            (np.asarray(y) - self.y_origin) / self.cell_size)
        return row.astype(np.int64), col.astype(np.int64)

    def with_values(self, values, nodata=None):
        return RasterGrid(
            self.x_origin, self.y_origin, self.cell_size, values,
            self.nodata if nodata is None else nodata,
            )

    def __eq__(self, other):
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (
            self.x_origin == other.x_origin and
            self.y_origin == other.y_origin and
            self.cell_size == other.cell_size and
            self.nodata == other.nodata and
            self.values.shape == other.values.shape and
            np.array_equal(self.values, other.values, equal_nan=True)
            )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrunkSet:
    """Tree trunk locations, each an (easting, northing) vertical line."""

    xy: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def __post_init__(self):
        xy = np.array(self.xy, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise ValueError('trunk coordinates must be finite')
        xy.setflags(write=False)
        object.__setattr__(self, 'xy', xy)

    def __len__(self):
        return self.xy.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TrunkSet):
            return NotImplemented
        return np.array_equal(self.xy, other.xy)

    __hash__ = None


@dataclass(frozen=True)
class MeasurementRecord:
    track_id: str
    position: tuple
    path_loss_db: float

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3 or not all(math.isfinite(v) for v in pos):
            raise ValueError('position must be three finite coordinates')
        pl = float(self.path_loss_db)
        if not (math.isfinite(pl) and pl > 0):
            raise ValueError('path_loss_db must be finite and > 0')
        object.__setattr__(self, 'track_id', str(self.track_id))
        object.__setattr__(self, 'position', pos)
        object.__setattr__(self, 'path_loss_db', pl)


@dataclass(frozen=True)
class SiteGeometry:
    tx_position: tuple
    carrier_frequency_ghz: float = 28.0
    woodland_edge_offset_m: float = 15.0

    def __post_init__(self):
        tx = tuple(float(v) for v in self.tx_position)
        if len(tx) != 3 or not all(math.isfinite(v) for v in tx):
            raise ValueError('tx_position must be three finite coordinates')
        if not self.carrier_frequency_ghz > 0:
            raise ValueError('carrier frequency must be positive')
        if not self.woodland_edge_offset_m >= 0:
            raise ValueError('woodland edge offset must be >= 0')
        object.__setattr__(self, 'tx_position', tx)


# ---------------------------------------------------------------------------
# ASCII grid

def parse_ascii_grid(text):
    """Parse an ASCII grid document into a :class:`RasterGrid`."""
    lines = text.splitlines()
    header = {}
    for i, key in enumerate(_HEADER_KEYS):
        if i >= len(lines):
            raise GridParseError('missing header keyword {!r}'.format(key),
                                 i + 1)
        parts = lines[i].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise GridParseError(
                'expected header keyword {!r}, got {!r}'.format(
                    key, lines[i].strip()), i + 1)
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise GridParseError(
                'non-numeric header value {!r}'.format(parts[1]), i + 1)

    ncols, nrows = header['ncols'], header['nrows']
    if ncols != int(ncols) or nrows != int(nrows) or ncols < 1 or nrows < 1:
        raise GridParseError('ncols/nrows must be positive integers', 1)
    ncols, nrows = int(ncols), int(nrows)
    if not header['cellsize'] > 0:
        raise GridParseError('cellsize must be positive', 5)

    values = np.empty((nrows, ncols), dtype=np.float64)
    row = 0
    for lineno in range(len(_HEADER_KEYS), len(lines)):
        parts = lines[lineno].split()
        if not parts:
            continue
        if row >= nrows:
            raise GridParseError(
                'more than nrows={} data rows'.format(nrows), lineno + 1)
        if len(parts) != ncols:
            raise GridParseError(
                'row has {} values, expected ncols={}'.format(
                    len(parts), ncols), lineno + 1)
        try:
            values[row] = [float(p) for p in parts]
        except ValueError:
            bad = next(p for p in parts if not _is_float(p))
            raise GridParseError('non-numeric cell {!r}'.format(bad),
                                 lineno + 1)
        row += 1
    if row != nrows:
        raise GridParseError(
            'found {} data rows, expected nrows={}'.format(row, nrows),
            len(lines))

    return RasterGrid(
        header['xllcorner'], header['yllcorner'], header['cellsize'],
        values, header['nodata_value'],
        )


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _fmt_number(v):
    # shortest repr that round-trips; integral values without the '.0'
    v = float(v)
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def write_ascii_grid(grid):
    """Serialize ``grid`` to ASCII grid text (6 header lines + rows)."""
    out = [
        'ncols {}'.format(grid.n_cols),
        'nrows {}'.format(grid.n_rows),
        'xllcorner {}'.format(_fmt_number(grid.x_origin)),
        'yllcorner {}'.format(_fmt_number(grid.y_origin)),
        'cellsize {}'.format(_fmt_number(grid.cell_size)),
        'NODATA_value {}'.format(_fmt_number(grid.nodata)),
        ]
    for row in grid.values:
        out.append(' '.join(_fmt_number(v) for v in row))
    return '\n'.join(out) + '\n'


def read_ascii_grid(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError('grid file not found: {}'.format(path))
    return parse_ascii_grid(path.read_text())


def save_ascii_grid(grid, path):
    Path(path).write_text(write_ascii_grid(grid))


# ---------------------------------------------------------------------------
# alignment, resampling, foliage extraction

def check_alignment(a, b, tol=ALIGN_TOL):
    return (
        a.n_rows == b.n_rows and a.n_cols == b.n_cols and
        abs(a.x_origin - b.x_origin) <= tol and
        abs(a.y_origin - b.y_origin) <= tol and
        abs(a.cell_size - b.cell_size) <= tol
        )


def resample_nearest(src, template):
    """Nearest-neighbour resample of ``src`` onto the lattice of ``template``.

    Template cells whose centers fall outside ``src`` become nodata (the
    template's sentinel).
    """
    sx0, sy0, sx1, sy1 = src.extent
    tx0, ty0, tx1, ty1 = template.extent
    if min(sx1, tx1) <= max(sx0, tx0) or min(sy1, ty1) <= max(sy0, ty0):
        raise GridAlignmentError('source and template grids do not overlap')

    cx, cy = template.cell_centers()
    row, col = src.index_of(cx, cy)
    inside = (row >= 0) & (row < src.n_rows) & (col >= 0) & (col < src.n_cols)
    out = np.full(template.shape, template.nodata, dtype=np.float64)
    picked = src.values[row[inside], col[inside]]
    # carry source nodata over as template nodata
    picked = np.where(
        np.isnan(picked) | (picked == src.nodata), template.nodata, picked)
    out[inside] = picked
    return template.with_values(out)


def extract_foliage_mask(lidar, terrain,
                         height_threshold=DEFAULT_HEIGHT_THRESHOLD):
    """Binary foliage mask: 1 where ``lidar - terrain > height_threshold``.

    Cells with nodata in either input are 0.  The two grids must already
    share a lattice; use :func:`resample_nearest` first if they do not.
    """
    if not height_threshold > 0:
        raise ValueError('height_threshold must be positive')
    if not check_alignment(lidar, terrain):
        raise GridAlignmentError(
            'lidar and terrain grids are not aligned; resample one onto the '
            'other with resample_nearest() first')
    valid = lidar.valid_mask() & terrain.valid_mask()
    with np.errstate(invalid='ignore'):
        diff = lidar.values - terrain.values
    mask = (valid & (diff > height_threshold)).astype(np.float64)
    n_missing = int(valid.size - np.count_nonzero(valid))
    if n_missing:
        log.warning('%d of %d cells lack lidar or terrain data; treated as '
                    'non-foliage', n_missing, valid.size)
    return RasterGrid(lidar.x_origin, lidar.y_origin, lidar.cell_size, mask,
                      DEFAULT_NODATA)


@dataclass(frozen=True)
class MaskSummary:
    foliage: int
    total: int
    nodata: int


def summarize_mask(mask, lidar=None, terrain=None):
    """Cell counts for a foliage mask; nodata counted from the inputs."""
    foliage = int(np.count_nonzero(mask.values == 1))
    nodata = 0
    if lidar is not None and terrain is not None:
        nodata = int(np.count_nonzero(
            ~(lidar.valid_mask() & terrain.valid_mask())))
    return MaskSummary(foliage, int(mask.values.size), nodata)


# ---------------------------------------------------------------------------
# CSV documents

def _text_source(source):
    if hasattr(source, 'read'):
        return source.read()
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError('file not found: {}'.format(path))
    return path.read_text()


def _read_rows(source, columns):
    reader = csv.reader(io.StringIO(_text_source(source)))
    header = next(reader, None)
    if header is None:
        raise DataFormatError('empty document, expected header', 1)
    header = [h.strip() for h in header]
    missing = [c for c in columns if c not in header]
    if missing:
        raise DataFormatError(
            'missing column(s): {}'.format(', '.join(missing)), 1)
    idx = [header.index(c) for c in columns]
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise DataFormatError(
                'expected {} fields, got {}'.format(len(header), len(row)),
                lineno)
        yield lineno, [row[i].strip() for i in idx]


def _finite(text, name, lineno):
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError('{}: not a number: {!r}'.format(name, text),
                              lineno)
    if not math.isfinite(v):
        raise DataFormatError('{}: non-finite value {!r}'.format(name, text),
                              lineno)
    return v


def load_trunks(source):
    """Read a ``trunks.csv`` document (path or text stream)."""
    pts = []
    for lineno, (e, n) in _read_rows(source, TRUNK_COLUMNS):
        pts.append((_finite(e, 'easting_m', lineno),
                    _finite(n, 'northing_m', lineno)))
    return TrunkSet(np.array(pts, dtype=np.float64).reshape(-1, 2))


def write_trunks(trunks, dest=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(TRUNK_COLUMNS)
    for x, y in trunks.xy:
        w.writerow((_fmt_number(x), _fmt_number(y)))
    return _emit(buf.getvalue(), dest)


def load_measurements(source):
    """Read a ``measurements.csv`` document into MeasurementRecords."""
    records = []
    for lineno, row in _read_rows(source, MEASUREMENT_COLUMNS):
        tid = row[0]
        e, n, a, pl = (_finite(v, c, lineno)
                       for v, c in zip(row[1:], MEASUREMENT_COLUMNS[1:]))
        if pl <= 0:
            raise DataFormatError('path_loss_db must be > 0', lineno)
        records.append(MeasurementRecord(tid, (e, n, a), pl))
    return records


def write_measurements(records, dest=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(MEASUREMENT_COLUMNS)
    for r in records:
        w.writerow([r.track_id] + [_fmt_number(v) for v in r.position] +
                   [_fmt_number(r.path_loss_db)])
    return _emit(buf.getvalue(), dest)


def _emit(text, dest):
    if dest is None:
        return text
    if hasattr(dest, 'write'):
        dest.write(text)
    else:
        Path(dest).write_text(text)
    return text


# ---------------------------------------------------------------------------
# tile fetching

def fetch_elevation_tiles(url_template, bounding_box, destination_dir,
                          zoom=0, retries=3, timeout=10.0, jobs=4,
                          backoff=0.5):
    """Download every tile of an inclusive tile-index bounding box.

    ``url_template`` is formatted with ``x``, ``y`` and ``z`` fields, e.g.
    ``https://example.org/dem/{z}/{x}/{y}.asc``.  ``bounding_box`` is
    ``(x_min, y_min, x_max, y_max)`` in tile indices.  Files already on
    disk are not fetched again.  Returns the paths of all tiles in the box,
    row by row.
    """
    if not all(k in url_template for k in ('{x}', '{y}')):
        raise ValueError('url_template must contain {x} and {y} placeholders')
    x0, y0, x1, y1 = (int(v) for v in bounding_box)
    if x1 < x0 or y1 < y0:
        raise ValueError('empty tile bounding box')
    dest = Path(destination_dir)
    dest.mkdir(parents=True, exist_ok=True)

    suffix = os.path.splitext(urllib.parse.urlparse(url_template).path)[1]
    tiles = []
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            url = url_template.format(x=x, y=y, z=zoom)
            tiles.append((url, dest / '{}_{}_{}{}'.format(zoom, x, y,
                                                          suffix or '.bin')))

    todo = [(u, p) for u, p in tiles if not p.exists()]
    log.info('%d tiles requested, %d already present', len(tiles),
             len(tiles) - len(todo))

    def fetch(item):
        url, path = item
        err = None
        for attempt in range(retries + 1):
            try:
                with urllib.request.urlopen(url, timeout=timeout) as resp:
                    data = resp.read()
                tmp = path.with_name(path.name + '.part')
                tmp.write_bytes(data)
                tmp.replace(path)
                return None
            except (urllib.error.URLError, OSError) as exc:
                err = exc
                log.warning('fetch %s failed (attempt %d/%d): %s', url,
                            attempt + 1, retries + 1, exc)
                if attempt < retries and backoff:
                    time.sleep(backoff * 2 ** attempt)
        return '{} ({})'.format(url, err)

    if todo:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            failed = [f for f in pool.map(fetch, todo) if f is not None]
        if failed:
            raise FetchError(
                '{} tile(s) failed after {} retries: {}'.format(
                    len(failed), retries, '; '.join(failed)), failed)
    return [p for _, p in tiles]
