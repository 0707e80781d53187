"""Overall and windowed (regional) RMSE reports, and CSV exports for plots."""

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geodata import DataFormatError, _emit, _text_source
from .models import FEATURE_OF, predict_arrays
from .table import axis_column

__all__ = [
    'LOW_CONFIDENCE_COUNT', 'RegionalWindow', 'EvalReport', 'ComparisonRow',
    'RegionalComparison', 'ScatterData', 'evaluate_overall',
    'evaluate_regional', 'compare_models', 'scatter_data', 'export_plot_data',
    'write_scatter', 'read_scatter', 'write_regional', 'read_regional',
    'write_comparison', 'write_overall',
    ]

log = logging.getLogger(__name__)

LOW_CONFIDENCE_COUNT = 3

SCATTER_COLUMNS = ('axis_value', 'measured_db', 'predicted_db', 'residual_db')
REGIONAL_COLUMNS = ('window_start', 'window_end', 'sample_count', 'rmse_db')
OVERALL_COLUMNS = ('model', 'overall_rmse_db', 'mean_error_db',
                   'sample_count')


@dataclass(frozen=True)
class RegionalWindow:
    window_start: float
    window_end: float
    sample_count: int
    rmse_db: float = None       # None for an empty window

    @property
    def low_confidence(self):
        return self.sample_count < LOW_CONFIDENCE_COUNT


@dataclass(frozen=True)
class EvalReport:
    model_name: str
    overall_rmse_db: float
    mean_error_db: float
    sample_count: int
    regional: tuple = ()
    axis: str = None


@dataclass(frozen=True)
class ComparisonRow:
    window_start: float
    window_end: float
    sample_count: int
    baseline_rmse_db: float
    rmse_db: dict = field(default_factory=dict)
    improvement_db: dict = field(default_factory=dict)

    @property
    def window_center(self):
        return 0.5 * (self.window_start + self.window_end)


@dataclass(frozen=True)
class RegionalComparison:
    axis: str
    window_width: float
    baseline_model: str
    models: tuple
    rows: tuple


@dataclass(frozen=True)
class ScatterData:
    model_name: str
    axis: str
    axis_value: np.ndarray
    measured_db: np.ndarray
    predicted_db: np.ndarray


def _residuals(dataset, params, f_c, wmed_mode, model_c_mode):
    pred = predict_arrays(dataset, params, f_c, wmed_mode, model_c_mode)
    return pred, pred - dataset.measured


def evaluate_overall(dataset, params, f_c=28.0, wmed_mode='strict',
                     model_c_mode='continuous'):
    """RMSE and mean signed error (predicted - measured) over all records."""
    if len(dataset) == 0:
        raise ValueError('cannot evaluate on an empty dataset')
    _, res = _residuals(dataset, params, f_c, wmed_mode, model_c_mode)
    return EvalReport(params.model, float(np.sqrt(np.mean(res ** 2))),
                      float(np.mean(res)), int(res.size))


def _windows(x, width, step=None):
    """Yield (start, end, index array) for windows over x >= 0."""
    if not width > 0:
        raise ValueError('window width must be positive')
    ok = np.isfinite(x) & (x >= 0)
    if not np.all(ok):
        log.warning('%d records with negative or non-finite axis values left '
                    'out of regional windows', int(np.count_nonzero(~ok)))
    if not np.any(ok):
        return
    xmax = float(np.max(x[ok]))
    if step is None:
        k = np.full(x.shape, -1, dtype=np.int64)
        k[ok] = np.floor(x[ok] / width).astype(np.int64)
        for j in range(int(k.max()) + 1):
            yield j * width, (j + 1) * width, np.flatnonzero(k == j)
    else:
        if not step > 0:
            raise ValueError('window step must be positive')
        j = 0
        while j * step <= xmax:
            lo, hi = j * step, j * step + width
            yield lo, hi, np.flatnonzero(ok & (x >= lo) & (x < hi))
            j += 1


def evaluate_regional(dataset, params, axis, window_width, f_c=28.0,
                      wmed_mode='strict', model_c_mode='continuous',
                      step=None):
    """Per-window RMSE along a feature axis.

    Windows are half-open ``[k w, (k+1) w)`` starting at 0.  With ``step``
    they slide instead (overlapping, start every ``step`` units).
    """
    report = evaluate_overall(dataset, params, f_c, wmed_mode, model_c_mode)
    _, res = _residuals(dataset, params, f_c, wmed_mode, model_c_mode)
    x = dataset.column(axis_column(axis))
    windows = []
    for lo, hi, idx in _windows(x, window_width, step):
        r = float(np.sqrt(np.mean(res[idx] ** 2))) if idx.size else None
        windows.append(RegionalWindow(lo, hi, int(idx.size), r))
    return EvalReport(report.model_name, report.overall_rmse_db,
                      report.mean_error_db, report.sample_count,
                      tuple(windows), axis_column(axis))


def compare_models(dataset, fit_results, axis, window_width, baseline,
                   f_c=28.0, wmed_mode='strict', model_c_mode='continuous',
                   step=None):
    """Regional RMSE improvement of every fitted model over ``baseline``."""
    by_name = {r.model: r for r in fit_results if r.params is not None}
    if baseline not in by_name:
        raise ValueError('baseline model {!r} is not among the fitted models '
                         '({})'.format(baseline, ', '.join(by_name) or 'none'))
    names = [n for n in by_name if n != baseline]
    reports = {
        n: evaluate_regional(dataset, by_name[n].params, axis, window_width,
                             f_c, wmed_mode, model_c_mode, step)
        for n in [baseline] + names}
    rows = []
    for i, w in enumerate(reports[baseline].regional):
        base = w.rmse_db
        rm, imp = {}, {}
        for n in names:
            other = reports[n].regional[i].rmse_db
            rm[n] = other
            imp[n] = (base - other) if base is not None and other is not None \
                else None
        rows.append(ComparisonRow(w.window_start, w.window_end,
                                  w.sample_count, base, rm, imp))
    return RegionalComparison(axis_column(axis), float(window_width), baseline,
                              tuple(names), tuple(rows))


def scatter_data(dataset, params, axis=None, f_c=28.0, wmed_mode='strict',
                 model_c_mode='continuous'):
    """Feature vs measured/predicted series; axis defaults to the model's."""
    col = axis_column(axis) if axis else FEATURE_OF[params.model]
    pred, _ = _residuals(dataset, params, f_c, wmed_mode, model_c_mode)
    return ScatterData(params.model, col, dataset.column(col).copy(),
                       dataset.measured.copy(), pred)


# ---------------------------------------------------------------------------
# CSV

def _f4(v):
    if v is None or not math.isfinite(v):
        return ''
    s = '{:.4f}'.format(v)
    return '0.0000' if s == '-0.0000' else s


def _writer():
    buf = io.StringIO()
    return buf, csv.writer(buf, lineterminator='\n')


def write_scatter(data, dest=None):
    buf, w = _writer()
    w.writerow(SCATTER_COLUMNS)
    for x, m, p in zip(data.axis_value, data.measured_db, data.predicted_db):
        # residual from the rounded columns so a re-read file reproduces it
        m4, p4 = _f4(m), _f4(p)
        r = float(p4) - float(m4) if m4 and p4 else math.nan
        w.writerow((_f4(x), m4, p4, _f4(r)))
    return _emit(buf.getvalue(), dest)


def read_scatter(source, model_name='', axis=''):
    rows = _read_numeric(source, SCATTER_COLUMNS)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return ScatterData(model_name, axis, arr[:, 0], arr[:, 1], arr[:, 2])


def write_regional(report, dest=None):
    buf, w = _writer()
    w.writerow(REGIONAL_COLUMNS)
    for win in report.regional:
        w.writerow((_f4(win.window_start), _f4(win.window_end),
                    win.sample_count, _f4(win.rmse_db)))
    return _emit(buf.getvalue(), dest)


def read_regional(source):
    out = []
    for lo, hi, n, r in _read_numeric(source, REGIONAL_COLUMNS):
        out.append(RegionalWindow(lo, hi, int(n),
                                  None if math.isnan(r) else r))
    return tuple(out)


def write_comparison(comp, dest=None):
    buf, w = _writer()
    header = ['window_center', 'baseline_rmse_db']
    for n in comp.models:
        header += ['{}_rmse_db'.format(n), '{}_improvement_db'.format(n)]
    w.writerow(header)
    for row in comp.rows:
        line = [_f4(row.window_center), _f4(row.baseline_rmse_db)]
        for n in comp.models:
            line += [_f4(row.rmse_db[n]), _f4(row.improvement_db[n])]
        w.writerow(line)
    return _emit(buf.getvalue(), dest)


def write_overall(reports, dest=None):
    buf, w = _writer()
    w.writerow(OVERALL_COLUMNS)
    for r in reports:
        w.writerow((r.model_name, _f4(r.overall_rmse_db),
                    _f4(r.mean_error_db), r.sample_count))
    return _emit(buf.getvalue(), dest)


def export_plot_data(item, destination=None):
    """Write scatter, regional or comparison data as CSV text."""
    if isinstance(item, ScatterData):
        return write_scatter(item, destination)
    if isinstance(item, EvalReport):
        return write_regional(item, destination)
    if isinstance(item, RegionalComparison):
        return write_comparison(item, destination)
    raise TypeError('cannot export {!r}'.format(type(item).__name__))


def _read_numeric(source, columns):
    reader = csv.reader(io.StringIO(_text_source(source)))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != list(columns):
        raise DataFormatError('expected header {}'.format(','.join(columns)),
                              1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            rows.append([float(v) if v.strip() else math.nan for v in row])
        except ValueError:
            raise DataFormatError('non-numeric field', lineno)
        if len(rows[-1]) != len(columns):
            raise DataFormatError('expected {} fields'.format(len(columns)),
                                  lineno)
    return rows
