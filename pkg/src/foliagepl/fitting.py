"""RMSE fitting of model parameters to measured path loss.

Free parameters are found by an exhaustive coarse grid followed by bounded
Nelder-Mead refinement from the best grid point.  Everything is
deterministic: the grid is fixed and ties go to the first (lexicographically
smallest) grid vector.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import minimize

from . import models
from .models import (FEATURE_OF, fspl, normalize_name, params_class,
                     params_from_dict, params_to_dict, predict_arrays)

__all__ = [
    'DEFAULT_BOUNDS', 'DEFAULT_FIXED', 'FitSpec', 'FitResult', 'FitConfig',
    'FitBudgetError', 'rmse', 'fit_af_closed_form', 'fit_params', 'fit_all',
    'default_spec',
    ]

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = {
    'AF': {'loss_per_tree_db': (0.0, 20.0)},
    'ITU': {'max_attenuation_db': (1.0, 100.0),
            'specific_attenuation_db_per_m': (0.01, 20.0)},
    'B': {'max_attenuation_db': (1.0, 100.0),
          'specific_attenuation_db_per_m': (0.01, 20.0)},
    'A1': {'l1_db_per_m': (0.0, 20.0), 'l2_db_per_m': (0.0, 20.0),
           'breakpoint_m': (1.0, 100.0)},
    'A2': {'l1_db_per_m': (0.0, 20.0), 'breakpoint_m': (1.0, 100.0)},
    'C': {'jump_db': (0.0, 60.0), 'l1_db_per_m2': (0.0, 20.0),
          'l2_db_per_m2': (0.0, 20.0), 'breakpoint_m2': (1.0, 100.0)},
    }

DEFAULT_FIXED = {'A1': {'breakpoint_m': 14.0}}

GRID_POINTS = 17
IMPROVEMENT_TOL = 1e-4
MAX_EVALUATIONS = 500_000
_CHUNK = 2_000_000


class FitBudgetError(RuntimeError):
    pass


def rmse(predictions, measurements):
    p = np.asarray(predictions, dtype=np.float64)
    m = np.asarray(measurements, dtype=np.float64)
    if p.shape != m.shape:
        raise ValueError('length mismatch: {} predictions vs {} measurements'
                         .format(p.size, m.size))
    if p.size == 0:
        raise ValueError('rmse of empty input')
    return float(np.sqrt(np.mean((p - m) ** 2)))


@dataclass(frozen=True)
class FitSpec:
    model: str
    free_parameters: tuple      # ((name, lower, upper), ...)
    fixed_parameters: tuple     # ((name, value), ...)
    dataset: object             # FeatureTable
    f_c: float = 28.0
    wmed_mode: str = 'strict'
    model_c_mode: str = 'continuous'
    grid_points: int = GRID_POINTS
    max_evaluations: int = MAX_EVALUATIONS

    def __post_init__(self):
        object.__setattr__(self, 'model', normalize_name(self.model))
        free = tuple((str(n), float(lo), float(hi))
                     for n, lo, hi in self.free_parameters)
        fixed = tuple((str(n), float(v)) for n, v in self.fixed_parameters)
        object.__setattr__(self, 'free_parameters', free)
        object.__setattr__(self, 'fixed_parameters', fixed)
        names = [f.name for f in fields(params_class(self.model))]
        free_names = [n for n, _, _ in free]
        fixed_names = [n for n, _ in fixed]
        if sorted(free_names + fixed_names) != sorted(names):
            raise ValueError(
                '{}: parameters must be split exactly into free and fixed '
                '(expected {}, got free={} fixed={})'.format(
                    self.model, names, free_names, fixed_names))
        for n, lo, hi in free:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError('{}: bad bounds for {}: [{}, {}]'.format(
                    self.model, n, lo, hi))
        if len(self.dataset) == 0:
            raise ValueError('empty dataset')
        if self.grid_points < 17:
            raise ValueError('grid_points must be >= 17')


@dataclass(frozen=True)
class FitResult:
    params: object
    rmse_db: float
    objective_evaluations: int
    converged: bool
    warnings: tuple = ()
    model: str = ''
    error: str = None

    def __post_init__(self):
        if not self.model and self.params is not None:
            object.__setattr__(self, 'model', self.params.model)

    def to_dict(self):
        out = {'model': self.model}
        if self.params is not None:
            out = params_to_dict(self.params)
        out.update(rmse_db=self.rmse_db,
                   objective_evaluations=self.objective_evaluations,
                   converged=self.converged)
        if self.warnings:
            out['warnings'] = list(self.warnings)
        if self.error:
            out['error'] = self.error
        return out

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        meta = {k: doc.pop(k) for k in ('rmse_db', 'objective_evaluations',
                                        'converged', 'warnings', 'error')
                if k in doc}
        params = None if meta.get('error') else params_from_dict(doc)
        rm = meta.get('rmse_db')
        return cls(params, float('nan') if rm is None else float(rm),
                   int(meta.get('objective_evaluations', 0)),
                   bool(meta.get('converged', False)),
                   tuple(meta.get('warnings', ())),
                   normalize_name(doc['model']), meta.get('error'))


# ---------------------------------------------------------------------------

def _excess_fn(spec):
    """Return f(P) -> excess loss, P an (m, k) array of free parameters."""
    model = spec.model
    names = [f.name for f in fields(params_class(model))]
    free_idx = {n: i for i, (n, _, _) in enumerate(spec.free_parameters)}
    fixed = dict(spec.fixed_parameters)
    x = spec.dataset.column(FEATURE_OF[model])[np.newaxis, :]

    def full(P):
        return [P[:, free_idx[n]][:, np.newaxis] if n in free_idx
                else fixed[n] for n in names]

    if model == 'AF':
        return lambda P: x * full(P)[0]
    if model in ('ITU', 'B'):
        return lambda P: models.itu_law(x, *full(P))
    if model == 'A1':
        return lambda P: models.a1_law(x, *full(P))
    if model == 'A2':
        return lambda P: models.a2_law(x, *full(P))
    if model == 'C':
        return lambda P: models.c_law(x, *full(P), mode=spec.model_c_mode)
    raise ValueError('{} has no free parameters to fit'.format(model))


def _build_params(spec, vec):
    values = dict(spec.fixed_parameters)
    for (n, _, _), v in zip(spec.free_parameters, vec):
        values[n] = float(v)
    return params_class(spec.model)(**values)


def _result_rmse(spec, params):
    pred = predict_arrays(spec.dataset, params, spec.f_c, spec.wmed_mode,
                          spec.model_c_mode)
    return rmse(pred, spec.dataset.measured)


def fit_params(spec):
    """Minimise RMSE over the free parameters of ``spec``."""
    k = len(spec.free_parameters)
    if not 1 <= k <= 4:
        raise ValueError('fit_params supports 1 to 4 free parameters, got {}'
                         .format(k))
    lo = np.array([b[1] for b in spec.free_parameters])
    hi = np.array([b[2] for b in spec.free_parameters])
    span = hi - lo
    g = spec.grid_points
    n_grid = g ** k
    if n_grid > spec.max_evaluations:
        raise FitBudgetError(
            'evaluation budget {} is smaller than the {}-point coarse grid'
            .format(spec.max_evaluations, n_grid))

    excess = _excess_fn(spec)
    target = spec.dataset.measured - fspl(spec.dataset.column('d_m'), spec.f_c)
    n = target.size

    def objective_many(P):
        return np.sqrt(np.mean((excess(P) - target) ** 2, axis=1))

    # coarse grid, lexicographic order so argmin picks the smallest vector
    axes = [np.linspace(0.0, 1.0, g)] * k
    grid = np.array(list(itertools.product(*axes)))
    chunk = max(1, _CHUNK // n)
    best_val, best_u = np.inf, None
    for start in range(0, n_grid, chunk):
        U = grid[start:start + chunk]
        vals = objective_many(lo + U * span)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_u = float(vals[i]), U[i]
    evals = n_grid

    def objective(u):
        return float(objective_many((lo + np.clip(u, 0, 1) * span)[None])[0])

    # simplex refinement, restarted until a restart gains < IMPROVEMENT_TOL
    step = 1.0 / (g - 1)
    u, val = best_u.copy(), best_val
    converged = False
    while evals < spec.max_evaluations:
        simplex = np.vstack([u] + [
            u + np.where(np.arange(k) == j,
                         step if u[j] + step <= 1 else -step, 0.0)
            for j in range(k)])
        res = minimize(objective, u, method='Nelder-Mead',
                       bounds=[(0.0, 1.0)] * k,
                       options={'initial_simplex': simplex, 'xatol': 1e-9,
                                'fatol': 1e-9,
                                'maxfev': spec.max_evaluations - evals})
        evals += res.nfev
        gain = val - res.fun
        if res.fun < val:
            u, val = np.clip(res.x, 0.0, 1.0), float(res.fun)
        if gain < IMPROVEMENT_TOL:
            converged = True
            break
        step = max(step / 2, 1e-4)

    warnings = []
    if not converged:
        warnings.append('evaluation budget exhausted during refinement')
    names = [b[0] for b in spec.free_parameters]
    for j in range(k):
        if u[j] <= 1e-9 or u[j] >= 1 - 1e-9:
            warnings.append('{} at bound {:g}'.format(
                names[j], lo[j] + u[j] * span[j]))
        probe = np.tile(u, (2, 1))
        probe[0, j] = min(u[j] + 0.01, 1.0)
        probe[1, j] = max(u[j] - 0.01, 0.0)
        change = np.abs(objective_many(lo + probe * span) - val)
        evals += 2
        if np.all(change <= 1e-12 * max(1.0, val)):
            warnings.append('objective is flat in {}'.format(names[j]))
            converged = False
    for w in warnings:
        log.warning('%s fit: %s', spec.model, w)

    params = _build_params(spec, lo + u * span)
    return FitResult(params, _result_rmse(spec, params), evals, converged,
                     tuple(warnings))


def fit_af_closed_form(dataset, f_c=28.0):
    """Least-squares loss-per-tree: sum(N e) / sum(N^2), e = excess loss."""
    N = dataset.column('n_trunks')
    e = dataset.measured - fspl(dataset.column('d_m'), f_c)
    denom = float(np.sum(N * N))
    if denom == 0:
        raise ValueError('AF fit needs at least one record with trunks in '
                         'the Fresnel zone')
    l0 = float(np.sum(N * e)) / denom
    warnings = ()
    if l0 < 0:
        log.warning('AF fit: negative loss per tree %.4f dB clamped to 0', l0)
        warnings = ('negative loss per tree clamped to 0',)
        l0 = 0.0
    params = models.AFParams(l0)
    pred = predict_arrays(dataset, params, f_c)
    return FitResult(params, rmse(pred, dataset.measured), 1, True, warnings)


@dataclass(frozen=True)
class FitConfig:
    f_c: float = 28.0
    wmed_mode: str = 'strict'
    model_c_mode: str = 'continuous'
    bounds: dict = field(default_factory=dict)   # model -> {param: (lo, hi)}
    fixed: dict = field(default_factory=dict)    # model -> {param: value}
    grid_points: int = GRID_POINTS
    max_evaluations: int = MAX_EVALUATIONS


def default_spec(model, dataset, config=FitConfig()):
    """FitSpec with default bounds, overridden by ``config``."""
    model = normalize_name(model)
    bounds = dict(DEFAULT_BOUNDS.get(model, {}))
    fixed = dict(DEFAULT_FIXED.get(model, {}))
    for name in fixed:
        bounds.pop(name, None)
    for name, value in config.fixed.get(model, {}).items():
        fixed[name] = value
        bounds.pop(name, None)
    for name, b in config.bounds.get(model, {}).items():
        bounds[name] = tuple(b)
        fixed.pop(name, None)
    order = [f.name for f in fields(params_class(model))]
    free = tuple((n,) + tuple(bounds[n]) for n in order if n in bounds)
    fixed_t = tuple((n, fixed[n]) for n in order if n in fixed)
    return FitSpec(model, free, fixed_t, dataset, config.f_c,
                   config.wmed_mode, config.model_c_mode, config.grid_points,
                   config.max_evaluations)


def _fit_one(model, dataset, config):
    if model in ('FSPL', 'WMED'):
        params = params_class(model)()
        pred = predict_arrays(dataset, params, config.f_c, config.wmed_mode)
        return FitResult(params, rmse(pred, dataset.measured), 1, True)
    if model == 'AF' and 'AF' not in config.bounds and \
            'AF' not in config.fixed:
        return fit_af_closed_form(dataset, config.f_c)
    return fit_params(default_spec(model, dataset, config))


def fit_all(dataset, model_list, config=FitConfig()):
    """Fit each requested model independently.

    A model that fails yields a FitResult with ``params=None`` and
    ``error`` set; the other models are unaffected.
    """
    dataset = dataset.finite()
    if len(dataset) == 0:
        raise ValueError('no usable records to fit')
    results = []
    for name in model_list:
        model = normalize_name(name)
        try:
            res = _fit_one(model, dataset, config)
        except (ValueError, RuntimeError) as exc:
            log.error('%s fit failed: %s', model, exc)
            res = FitResult(None, float('nan'), 0, False, (), model, str(exc))
        results.append(res)
    return results
