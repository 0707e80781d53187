"""Path-loss predictors: free-space baseline plus seven excess-loss models.

Total loss is always ``fspl(d) + excess``.  The ``*_law`` functions are the
bare formulas and broadcast over both features and parameters, which is what
the fitting grid relies on; the ``epl_*`` functions take parameter objects.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar, Union

import numpy as np

from .geometry import SPEED_OF_LIGHT

__all__ = [
    'MODEL_NAMES', 'FEATURE_OF', 'WMED_MAX_DEPTH',
    'FSPLParams', 'AFParams', 'ITUParams', 'WMEDParams', 'A1Params',
    'A2Params', 'BParams', 'CParams', 'ModelParams', 'Prediction',
    'fspl', 'epl_af', 'epl_itu', 'epl_wmed', 'epl_a1', 'epl_a2', 'epl_b',
    'epl_c', 'itu_law', 'wmed_law', 'a1_law', 'a2_law', 'c_law',
    'excess_loss', 'predict', 'predict_arrays',
    'params_class', 'params_from_dict', 'params_to_dict', 'normalize_name',
    ]

log = logging.getLogger(__name__)

MODEL_NAMES = ('FSPL', 'AF', 'ITU', 'WMED', 'A1', 'A2', 'B', 'C')

# blockage feature each model reads, as named in features.csv
FEATURE_OF = {
    'FSPL': 'd_m', 'AF': 'n_trunks', 'ITU': 'dw_m', 'WMED': 'df_m',
    'A1': 'df_m', 'A2': 'df_m', 'B': 'df_m', 'C': 'af_m2',
    }

_ALIASES = {'A-I': 'A1', 'A-II': 'A2', 'AI': 'A1', 'AII': 'A2'}

WMED_MAX_DEPTH = 400.0
WMED_BREAK = 14.0
WMED_MODES = ('strict', 'extrapolate')
C_MODES = ('continuous', 'paper_literal')


def normalize_name(name):
    key = str(name).strip().upper()
    key = _ALIASES.get(key, key)
    if key not in MODEL_NAMES:
        raise ValueError('unknown model {!r}; expected one of {}'.format(
            name, ', '.join(MODEL_NAMES)))
    return key


class _Params:
    model: ClassVar[str]

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not math.isfinite(v) or v < 0:
                raise ValueError('{}.{} must be finite and >= 0, got {!r}'
                                 .format(self.model, f.name, v))
            object.__setattr__(self, f.name, v)
        self._check()

    def _check(self):
        pass

    def values(self):
        return tuple(getattr(self, f.name) for f in fields(self))


@dataclass(frozen=True)
class FSPLParams(_Params):
    model: ClassVar[str] = 'FSPL'


@dataclass(frozen=True)
class AFParams(_Params):
    model: ClassVar[str] = 'AF'
    loss_per_tree_db: float = 6.47


@dataclass(frozen=True)
class ITUParams(_Params):
    model: ClassVar[str] = 'ITU'
    max_attenuation_db: float = 34.5
    specific_attenuation_db_per_m: float = 6.0

    def _check(self):
        if self.max_attenuation_db <= 0 or \
                self.specific_attenuation_db_per_m <= 0:
            raise ValueError('{}: A_m and gamma must be positive'.format(
                self.model))


@dataclass(frozen=True)
class WMEDParams(_Params):
    model: ClassVar[str] = 'WMED'


@dataclass(frozen=True)
class A1Params(_Params):
    model: ClassVar[str] = 'A1'
    l1_db_per_m: float = 2.39
    l2_db_per_m: float = 0.12
    breakpoint_m: float = 14.0

    def _check(self):
        if self.breakpoint_m <= 0:
            raise ValueError('A1: breakpoint must be positive')


@dataclass(frozen=True)
class A2Params(_Params):
    model: ClassVar[str] = 'A2'
    l1_db_per_m: float = 2.09
    breakpoint_m: float = 17.87

    def _check(self):
        if self.breakpoint_m <= 0:
            raise ValueError('A2: breakpoint must be positive')


@dataclass(frozen=True)
class BParams(ITUParams):
    model: ClassVar[str] = 'B'
    max_attenuation_db: float = 38.04
    specific_attenuation_db_per_m: float = 4.47


@dataclass(frozen=True)
class CParams(_Params):
    model: ClassVar[str] = 'C'
    jump_db: float = 19.14
    l1_db_per_m2: float = 2.09
    l2_db_per_m2: float = 0.06
    breakpoint_m2: float = 18.02

    def _check(self):
        if self.breakpoint_m2 <= 0:
            raise ValueError('C: breakpoint must be positive')


ModelParams = Union[FSPLParams, AFParams, ITUParams, WMEDParams, A1Params,
                    A2Params, BParams, CParams]

_CLASSES = {c.model: c for c in (FSPLParams, AFParams, ITUParams, WMEDParams,
                                 A1Params, A2Params, BParams, CParams)}


def params_class(name):
    return _CLASSES[normalize_name(name)]


def params_to_dict(params):
    out = {'model': params.model}
    out.update(asdict(params))
    return out


def params_from_dict(doc):
    doc = dict(doc)
    cls = params_class(doc.pop('model'))
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ValueError('{}: unknown parameter(s) {}'.format(
            cls.model, ', '.join(sorted(unknown))))
    missing = names - set(doc)
    if missing:
        raise ValueError('{}: missing parameter(s) {}'.format(
            cls.model, ', '.join(sorted(missing))))
    return cls(**doc)


@dataclass(frozen=True)
class Prediction:
    fspl_db: float
    excess_db: float
    total_db: float


# ---------------------------------------------------------------------------
# formulas

def fspl(distance, f_c):
    """Free-space path loss in dB (Friis), distance in m, f_c in GHz."""
    d = np.asarray(distance, dtype=np.float64)
    if np.any(~(d > 0)):
        raise ValueError('distance must be positive')
    if not f_c > 0:
        raise ValueError('carrier frequency must be positive')
    out = 20.0 * np.log10(4.0 * np.pi * d * (f_c * 1e9) / SPEED_OF_LIGHT)
    return float(out) if out.ndim == 0 else out


def itu_law(x, a_m, gamma):
    """A_m (1 - exp(-x gamma / A_m)): saturating exponential."""
    x = np.asarray(x, dtype=np.float64)
    return a_m * -np.expm1(-x * gamma / a_m)


def wmed_law(d_f, f_c, mode='strict'):
    if mode not in WMED_MODES:
        raise ValueError('WMED mode must be one of {}'.format(WMED_MODES))
    d_f = np.asarray(d_f, dtype=np.float64)
    if np.any(d_f > WMED_MAX_DEPTH):
        if mode == 'strict':
            raise ValueError('WMED is defined for foliage depth <= {} m; got '
                             '{:g} m (use extrapolate mode)'.format(
                                 WMED_MAX_DEPTH, float(np.max(d_f))))
        log.warning('WMED extrapolated beyond %g m foliage depth',
                    WMED_MAX_DEPTH)
    scale = f_c ** 0.284
    return np.where(d_f <= WMED_BREAK,
                    0.45 * scale * d_f,
                    1.33 * scale * np.abs(d_f) ** 0.588)


def a1_law(d_f, l1, l2, breakpoint):
    d_f = np.asarray(d_f, dtype=np.float64)
    return np.where(d_f <= breakpoint, d_f * l1,
                    breakpoint * l1 + (d_f - breakpoint) * l2)


def a2_law(d_f, l1, breakpoint):
    return np.minimum(np.asarray(d_f, dtype=np.float64), breakpoint) * l1


def c_law(a_f, jump, l1, l2, breakpoint, mode='continuous'):
    if mode not in C_MODES:
        raise ValueError('model C mode must be one of {}'.format(C_MODES))
    a_f = np.asarray(a_f, dtype=np.float64)
    upper = breakpoint * l1 + (a_f - breakpoint) * l2
    if mode == 'continuous':
        upper = upper + jump
    return np.where(a_f <= 0, 0.0,
                    np.where(a_f <= breakpoint, a_f * l1 + jump, upper))


def _scalar(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def epl_af(n_trunks, params):
    return _scalar(np.asarray(n_trunks, dtype=np.float64) *
                   params.loss_per_tree_db)


def epl_itu(d_w, params):
    return _scalar(itu_law(d_w, params.max_attenuation_db,
                           params.specific_attenuation_db_per_m))


def epl_wmed(d_f, f_c, mode='strict'):
    return _scalar(wmed_law(d_f, f_c, mode))


def epl_a1(d_f, params):
    return _scalar(a1_law(d_f, params.l1_db_per_m, params.l2_db_per_m,
                          params.breakpoint_m))


def epl_a2(d_f, params):
    return _scalar(a2_law(d_f, params.l1_db_per_m, params.breakpoint_m))


def epl_b(d_f, params):
    return _scalar(itu_law(d_f, params.max_attenuation_db,
                           params.specific_attenuation_db_per_m))


def epl_c(a_f, params, continuity='continuous'):
    return _scalar(c_law(a_f, params.jump_db, params.l1_db_per_m2,
                         params.l2_db_per_m2, params.breakpoint_m2,
                         continuity))


def excess_loss(params, feature, f_c, wmed_mode='strict',
                model_c_mode='continuous'):
    """Excess loss of ``params`` for the model's own blockage feature."""
    m = params.model
    if m == 'FSPL':
        return _scalar(np.zeros_like(np.asarray(feature, dtype=np.float64)))
    if m == 'AF':
        return epl_af(feature, params)
    if m == 'ITU':
        return epl_itu(feature, params)
    if m == 'WMED':
        return epl_wmed(feature, f_c, wmed_mode)
    if m == 'A1':
        return epl_a1(feature, params)
    if m == 'A2':
        return epl_a2(feature, params)
    if m == 'B':
        return epl_b(feature, params)
    return epl_c(feature, params, model_c_mode)


_FEATURE_ATTR = {
    'd_m': 'distance_3d', 'n_trunks': 'trunk_count', 'dw_m': 'woodland_depth',
    'df_m': 'foliage_depth', 'af_m2': 'foliage_area',
    }


def predict(features, params, f_c, wmed_mode='strict',
            model_c_mode='continuous'):
    """Predicted loss for one :class:`SiteFeatures` record."""
    base = fspl(features.distance_3d, f_c)
    x = getattr(features, _FEATURE_ATTR[FEATURE_OF[params.model]])
    excess = float(excess_loss(params, x, f_c, wmed_mode, model_c_mode))
    return Prediction(base, excess, base + excess)


def predict_arrays(table, params, f_c, wmed_mode='strict',
                   model_c_mode='continuous'):
    """Total predicted loss for every row of a :class:`FeatureTable`."""
    base = fspl(table.column('d_m'), f_c)
    excess = excess_loss(params, table.column(FEATURE_OF[params.model]), f_c,
                         wmed_mode, model_c_mode)
    return base + excess
