"""Column store for measurements joined with their site features."""

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geodata import DataFormatError, _emit, _text_source
from .geometry import SiteFeatures

__all__ = ['FEATURE_COLUMNS', 'FeatureTable', 'read_features',
           'write_features']

log = logging.getLogger(__name__)

FEATURE_COLUMNS = (
    'track_id', 'easting_m', 'northing_m', 'altitude_m', 'path_loss_db',
    'd_m', 'dw_m', 'df_m', 'af_m2', 'n_trunks',
    )
_NUMERIC = FEATURE_COLUMNS[1:]

# axis aliases accepted by evaluation and the CLI
AXIS_COLUMNS = {
    'd': 'd_m', 'd_w': 'dw_m', 'd_f': 'df_m', 'a_f': 'af_m2', 'n': 'n_trunks',
    }


def axis_column(axis):
    if axis in _NUMERIC:
        return axis
    try:
        return AXIS_COLUMNS[axis]
    except KeyError:
        raise ValueError('unknown feature axis {!r}'.format(axis))


@dataclass(frozen=True, eq=False)
class FeatureTable:
    track_id: tuple
    data: np.ndarray    # shape (n, 9), columns in _NUMERIC order

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64).reshape(-1, len(_NUMERIC))
        if len(self.track_id) != data.shape[0]:
            raise ValueError('track_id length does not match data rows')
        data.setflags(write=False)
        object.__setattr__(self, 'track_id', tuple(map(str, self.track_id)))
        object.__setattr__(self, 'data', data)

    def __len__(self):
        return self.data.shape[0]

    def column(self, name):
        return self.data[:, _NUMERIC.index(axis_column(name))]

    @property
    def measured(self):
        return self.column('path_loss_db')

    def take(self, index):
        index = np.asarray(index)
        ids = np.asarray(self.track_id, dtype=object)[index]
        return FeatureTable(tuple(ids), self.data[index])

    def finite(self):
        """Rows whose features and measurement are all finite."""
        ok = np.all(np.isfinite(self.data[:, 3:]), axis=1)
        ok &= self.column('n_trunks') >= 0
        if not np.all(ok):
            for i in np.flatnonzero(~ok):
                log.warning('dropping record %d (track %s): non-finite '
                            'features', i, self.track_id[i])
        return self.take(np.flatnonzero(ok))

    def features(self, i):
        row = self.data[i]
        n = row[8]
        return SiteFeatures(row[4], row[5], row[6], row[7],
                            int(n) if math.isfinite(n) else -1)

    @classmethod
    def from_features(cls, records, features):
        rows = []
        for r, f in zip(records, features, strict=True):
            rows.append(list(r.position) + [
                r.path_loss_db, f.distance_3d, f.woodland_depth,
                f.foliage_depth, f.foliage_area,
                f.trunk_count if f.trunk_count >= 0 else math.nan])
        return cls(tuple(r.track_id for r in records),
                   np.array(rows, dtype=np.float64).reshape(-1, len(_NUMERIC)))

    @classmethod
    def from_columns(cls, path_loss_db, d_m, dw_m=None, df_m=None, af_m2=None,
                     n_trunks=None, track_id=None, position=None):
        """Build a table directly from feature arrays (synthetic data)."""
        pl = np.asarray(path_loss_db, dtype=np.float64)
        n = pl.shape[0]

        def col(v):
            return np.zeros(n) if v is None else np.broadcast_to(
                np.asarray(v, dtype=np.float64), (n,))
        pos = np.zeros((n, 3)) if position is None else np.asarray(
            position, dtype=np.float64).reshape(n, 3)
        data = np.column_stack([pos, pl, col(d_m), col(dw_m), col(df_m),
                                col(af_m2), col(n_trunks)])
        ids = track_id if track_id is not None else ['0'] * n
        return cls(tuple(ids), data)


def _fmt4(v, integer=False):
    if not math.isfinite(v):
        return 'nan'
    if integer:
        return str(int(v))
    s = '{:.4f}'.format(v)
    return '0.0000' if s == '-0.0000' else s


def write_features(table, dest=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(FEATURE_COLUMNS)
    for tid, row in zip(table.track_id, table.data):
        w.writerow([tid] + [_fmt4(v) for v in row[:-1]] +
                   [_fmt4(row[-1], integer=True)])
    return _emit(buf.getvalue(), dest)


def read_features(source):
    """Parse a features.csv document; 'nan' marks failed records."""
    reader = csv.reader(io.StringIO(_text_source(source)))
    header = next(reader, None)
    if header is None:
        raise DataFormatError('empty document, expected header', 1)
    header = [h.strip() for h in header]
    missing = [c for c in FEATURE_COLUMNS if c not in header]
    if missing:
        raise DataFormatError('missing column(s): {}'.format(
            ', '.join(missing)), 1)
    idx = [header.index(c) for c in FEATURE_COLUMNS]
    ids, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) < len(header):
            raise DataFormatError('expected {} fields, got {}'.format(
                len(header), len(row)), lineno)
        vals = [row[i].strip() for i in idx]
        try:
            rows.append([float(v) for v in vals[1:]])
        except ValueError:
            raise DataFormatError('non-numeric field', lineno)
        ids.append(vals[0])
    return FeatureTable(tuple(ids), np.array(rows, dtype=np.float64).reshape(
        -1, len(_NUMERIC)))


def load_features(path):
    return read_features(Path(path))
