"""Synthetic feature tables built straight from the model formulas."""

import numpy as np

from foliagepl.models import FEATURE_OF, excess_loss, fspl, params_class
from foliagepl.table import FeatureTable


def feature_values(model, n, rng, hi=40.0, zeros=0.1):
    """Feature samples for ``model`` covering [0, hi], some exactly zero."""
    if FEATURE_OF[model] == 'n_trunks':
        return rng.integers(0, 9, n).astype(float)
    x = rng.uniform(0.0, hi, n)
    x[rng.random(n) < zeros] = 0.0
    return x


def model_table(model, params, n=400, noise=0.0, seed=0, f_c=28.0, x=None):
    """Table whose path loss is FSPL + model excess (+ Gaussian noise)."""
    rng = np.random.default_rng(seed)
    p = params_class(model)(**params)
    if x is None:
        x = feature_values(model, n, rng)
    n = len(x)
    d = rng.uniform(5.0, 120.0, n)
    pl = fspl(d, f_c) + excess_loss(p, x, f_c, 'extrapolate')
    if noise:
        pl = pl + rng.normal(0.0, noise, n)
    cols = {'d_m': d}
    if FEATURE_OF[model] != 'd_m':
        cols[FEATURE_OF[model]] = x
    return FeatureTable.from_columns(pl, **cols)
