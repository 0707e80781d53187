"""Compare the compiled kernels with the pure-Python fallback.

Times each geometry kernel on a synthetic scene, checks the two backends
give identical counts, and reports the speed-up.

    python3 benchmarks/bench_kernels.py --links 2000
"""

import argparse
import time

import numpy as np

from foliagepl import _pykernels, synth
from foliagepl.geometry import wavelength

try:
    from foliagepl import _ckernels
except ImportError:
    _ckernels = None


def _links(scene, n, rng):
    g = scene.mask
    x0, y0, x1, y1 = g.extent
    tx = np.asarray(scene.geometry.tx_position)
    rx = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n),
                          np.full(n, tx[2])])
    d = np.linalg.norm(rx - tx, axis=1)
    keep = d > 1.0
    return tx, rx[keep], d[keep]


def _cases(scene, tx, rx, d, lam, samples_per_cell):
    g = scene.mask
    mask = np.ascontiguousarray(g.values, dtype=np.float64)
    xy = np.ascontiguousarray(scene.trunks.xy, dtype=np.float64)
    cs = g.cell_size
    for (bx, by, _), dist in zip(rx, d):
        lh = float(np.hypot(bx - tx[0], by - tx[1]))
        n = max(1, int(np.ceil(lh / (cs / samples_per_cell))))
        yield {
            'mask_path_count': (mask, g.x_origin, g.y_origin, cs, tx[0],
                                tx[1], bx, by, n),
            'footprint_count': (mask, g.x_origin, g.y_origin, cs, tx[0],
                                tx[1], bx, by, dist, lam),
            'trunk_count': (xy, tx[0], tx[1], bx, by, dist, lam),
            }


def _time(module, name, cases, repeat):
    fn = getattr(module, name)
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = [fn(*c[name]) for c in cases]
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument('--links', type=int, default=2000,
                   help='number of TX-RX links (default 2000)')
    p.add_argument('--repeat', type=int, default=3,
                   help='timing repeats, best is reported (default 3)')
    p.add_argument('--seed', type=int, default=1)
    args = p.parse_args(argv)

    scene = synth.make_scene(synth.SceneSpec(seed=args.seed, n_records=10))
    rng = np.random.default_rng(args.seed)
    tx, rx, d = _links(scene, args.links, rng)
    cases = list(_cases(scene, tx, rx, d, wavelength(28.0), 4))
    print('{} links, {} trunks, mask {}x{}'.format(
        len(cases), len(scene.trunks), *scene.mask.shape))
    if _ckernels is None:
        print('compiled kernels not built; timing the fallback only')

    print('{:<16} {:>11} {:>11} {:>8}'.format('kernel', 'python (s)',
                                              'cython (s)', 'speedup'))
    for name in ('mask_path_count', 'footprint_count', 'trunk_count'):
        t_py, out_py = _time(_pykernels, name, cases, args.repeat)
        if _ckernels is None:
            print('{:<16} {:>11.4f} {:>11} {:>8}'.format(name, t_py, '-',
                                                         '-'))
            continue
        t_c, out_c = _time(_ckernels, name, cases, args.repeat)
        if out_c != out_py:
            raise SystemExit('{}: backends disagree'.format(name))
        print('{:<16} {:>11.4f} {:>11.4f} {:>7.1f}x'.format(
            name, t_py, t_c, t_py / t_c))


if __name__ == '__main__':
    main()
