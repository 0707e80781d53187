import os
import subprocess
import sys

import numpy as np
import pytest

import oracles
from foliagepl import _kernels, _pykernels

ck = pytest.importorskip('foliagepl._ckernels')


def _cases(seed, n):
    rng = np.random.default_rng(seed)
    mask = np.ascontiguousarray(oracles.blob_mask(rng, (90, 110), 25))
    for _ in range(n):
        a = rng.uniform(-20, 130, 2)
        b = rng.uniform(-20, 130, 2)
        yield rng, mask, a, b


def test_mask_path_count_backends_agree():
    for rng, mask, a, b in _cases(1, 200):
        n = int(rng.integers(1, 2000))
        args = (mask, 0.0, -5.0, 1.25, a[0], a[1], b[0], b[1], n)
        assert ck.mask_path_count(*args) == _pykernels.mask_path_count(*args)


def test_footprint_count_backends_agree():
    for rng, mask, a, b in _cases(2, 200):
        d = float(np.hypot(*(b - a))) + rng.uniform(0, 5)
        args = (mask, 0.0, -5.0, 1.25, a[0], a[1], b[0], b[1], d, 0.0107)
        assert ck.footprint_count(*args) == _pykernels.footprint_count(*args)


def test_trunk_count_backends_agree():
    for rng, mask, a, b in _cases(3, 200):
        d = float(np.hypot(*(b - a)))
        # trunks clustered tightly around the link so some fall inside
        s = rng.uniform(-0.1, 1.1, 80)
        xy = a + np.outer(s, b - a) + rng.normal(0, 0.5, (80, 2))
        args = (np.ascontiguousarray(xy), a[0], a[1], b[0], b[1], d, 0.0107)
        assert ck.trunk_count(*args) == _pykernels.trunk_count(*args)


def test_degenerate_links():
    mask = np.ones((4, 4))
    assert ck.footprint_count(mask, 0, 0, 1, 1, 1, 1, 1, 2.0, 0.01) == (0, 0)
    assert _pykernels.footprint_count(mask, 0, 0, 1, 1, 1, 1, 1, 2.0,
                                      0.01) == (0, 0)
    xy = np.zeros((1, 2))
    assert ck.trunk_count(xy, 1, 1, 1, 1, 2.0, 0.01) == 0


def test_pure_backend_selected_by_env():
    env = dict(os.environ, FOLIAGEPL_PURE='1')
    out = subprocess.run(
        [sys.executable, '-c', 'import foliagepl; print(foliagepl.BACKEND)'],
        env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == 'python'
    assert _kernels.BACKEND in ('cython', 'python')


def _pipeline(dest, env):
    run = [sys.executable, '-m', 'foliagepl']
    subprocess.run(run + ['synth', '--dest', str(dest), '--records', '200',
                          '--seed', '3'], env=env, check=True,
                   capture_output=True)
    for cmd in ('foliage', 'features', 'fit', 'evaluate'):
        subprocess.run(run + ['--config', str(dest / 'config.json'), cmd],
                       env=env, check=True, capture_output=True)
    out = dest / 'out'
    return {p.name: p.read_bytes() for p in out.iterdir() if p.is_file()}


def test_pipeline_outputs_identical_across_backends(tmp_path):
    env = {k: v for k, v in os.environ.items() if k != 'FOLIAGEPL_PURE'}
    compiled = _pipeline(tmp_path / 'c', env)
    pure = _pipeline(tmp_path / 'py', dict(env, FOLIAGEPL_PURE='1'))
    assert len(compiled) > 10
    assert compiled == pure
