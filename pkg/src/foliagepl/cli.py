"""Command-line pipeline: foliage -> features -> fit -> evaluate.

Every command reads the project config (JSON) and materialises its output
in the output directory, so steps can be rerun or inspected independently.
"""

import argparse
import contextlib
import csv
import fcntl
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import BACKEND, __version__, evaluation, geodata
from .fitting import FitConfig, FitResult, fit_all
from .geodata import SiteGeometry
from .geometry import compute_features_many
from .models import MODEL_NAMES, normalize_name, predict_arrays
from .table import FeatureTable, read_features, write_features

log = logging.getLogger('foliagepl')

MASK_FILE = 'foliage_mask.asc'
FEATURES_FILE = 'features.csv'
FIT_FILE = 'fit_results.json'
LOCK_FILE = '.foliagepl.lock'

DEFAULT_BASELINES = (('ITU', 'd_w'), ('WMED', 'd_f'))


class CLIError(Exception):
    pass


@dataclass
class ProjectConfig:
    paths: dict = field(default_factory=dict)
    tx_position: tuple = None
    carrier_frequency_ghz: float = 28.0
    woodland_edge_offset_m: float = 15.0
    foliage_height_threshold_m: float = 2.0
    samples_per_cell: int = 4
    window_width: float = 10.0
    window_step: float = None
    wmed_mode: str = 'strict'
    model_c_mode: str = 'continuous'
    models: list = field(default_factory=lambda: list(MODEL_NAMES))
    fit_bounds: dict = field(default_factory=dict)
    fit_fixed: dict = field(default_factory=dict)
    baselines: list = None
    base_dir: Path = field(default=Path('.'), repr=False)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise CLIError('config file not found: {}'.format(path))
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CLIError('config {} is not valid JSON: {}'.format(path, exc))
        return cls.from_dict(doc, path.parent)

    @classmethod
    def from_dict(cls, doc, base_dir=Path('.')):
        known = {f.name for f in fields(cls)} - {'base_dir'}
        for key in sorted(set(doc) - known - {'synthetic_truth'}):
            log.warning('ignoring unknown config key %r', key)
        cfg = cls(**{k: v for k, v in doc.items() if k in known},
                  base_dir=Path(base_dir))
        cfg.validate()
        return cfg

    def validate(self):
        if not self.carrier_frequency_ghz > 0:
            raise CLIError('carrier_frequency_ghz must be positive')
        if not self.woodland_edge_offset_m >= 0:
            raise CLIError('woodland_edge_offset_m must be >= 0')
        if not self.foliage_height_threshold_m > 0:
            raise CLIError('foliage_height_threshold_m must be positive')
        if int(self.samples_per_cell) < 2:
            raise CLIError('samples_per_cell must be >= 2')
        if not self.window_width > 0:
            raise CLIError('window_width must be positive')
        self.models = [normalize_name(m) for m in self.models]

    def path(self, key, required=True):
        value = self.paths.get(key)
        if value is None:
            if required:
                raise CLIError('config is missing paths.{}'.format(key))
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self):
        return self.path('output_dir', required=False) or self.base_dir / 'out'

    def geometry(self):
        if self.tx_position is None:
            raise CLIError('config is missing tx_position')
        return SiteGeometry(tuple(self.tx_position),
                            self.carrier_frequency_ghz,
                            self.woodland_edge_offset_m)

    def fit_config(self):
        return FitConfig(
            f_c=self.carrier_frequency_ghz, wmed_mode=self.wmed_mode,
            model_c_mode=self.model_c_mode,
            bounds={normalize_name(k): v for k, v in self.fit_bounds.items()},
            fixed={normalize_name(k): v for k, v in self.fit_fixed.items()})


class _Counter(logging.Handler):

    def __init__(self):
        super().__init__(logging.WARNING)
        self.warnings = 0
        self.errors = 0

    def emit(self, record):
        if record.levelno >= logging.ERROR:
            self.errors += 1
        else:
            self.warnings += 1


@contextlib.contextmanager
def _locked(outdir):
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / LOCK_FILE, 'w') as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise CLIError('output directory {} is in use by another run'
                           .format(outdir))
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _read_grid(path, what):
    if not path.exists():
        raise CLIError('{} grid not found: {}'.format(what, path))
    return geodata.read_ascii_grid(path)


# ---------------------------------------------------------------------------
# commands

def cmd_foliage(cfg, args):
    terrain = _read_grid(cfg.path('terrain'), 'terrain')
    lidar = _read_grid(cfg.path('lidar'), 'lidar')
    if not geodata.check_alignment(lidar, terrain):
        if not args.resample:
            raise CLIError('lidar and terrain grids are not aligned; rerun '
                           'with --resample to resample lidar onto the '
                           'terrain grid')
        lidar = geodata.resample_nearest(lidar, terrain)
    mask = geodata.extract_foliage_mask(lidar, terrain,
                                        cfg.foliage_height_threshold_m)
    out = cfg.output_dir / MASK_FILE
    geodata.save_ascii_grid(mask, out)
    s = geodata.summarize_mask(mask, lidar, terrain)
    print('{} foliage cells / {} total / {} nodata -> {}'.format(
        s.foliage, s.total, s.nodata, out))


def cmd_features(cfg, args):
    mask_path = cfg.output_dir / MASK_FILE
    if not mask_path.exists():
        raise CLIError('foliage mask {} not found; run "foliage" first'
                       .format(mask_path))
    mask = geodata.read_ascii_grid(mask_path)
    trunks = geodata.load_trunks(cfg.path('trunks'))
    records = geodata.load_measurements(cfg.path('measurements'))
    feats = compute_features_many(
        cfg.geometry(), [r.position for r in records], mask, trunks,
        int(cfg.samples_per_cell), jobs=args.jobs)
    table = FeatureTable.from_features(records, feats)
    out = cfg.output_dir / FEATURES_FILE
    write_features(table, out)
    bad = sum(not f.is_finite() for f in feats)
    print('{} records ({} failed) -> {}'.format(len(records), bad, out))


def _load_table(cfg):
    path = cfg.output_dir / FEATURES_FILE
    if not path.exists():
        raise CLIError('features file {} not found; run "features" first'
                       .format(path))
    return read_features(path)


def cmd_fit(cfg, args):
    if not cfg.models:
        raise CLIError('no models configured')
    table = _load_table(cfg)
    results = fit_all(table, cfg.models, cfg.fit_config())
    out = cfg.output_dir / FIT_FILE
    out.write_text(json.dumps([r.to_dict() for r in results], indent=2) + '\n')
    print('{:<6} {:>10}  {}'.format('model', 'RMSE (dB)', 'parameters'))
    for r in results:
        if r.params is None:
            print('{:<6} {:>10}  error: {}'.format(r.model, '-', r.error))
            continue
        p = ', '.join('{}={:.4g}'.format(k, v)
                      for k, v in r.to_dict().items()
                      if k not in ('model', 'rmse_db', 'objective_evaluations',
                                   'converged', 'warnings'))
        print('{:<6} {:>10.2f}  {}'.format(r.model, r.rmse_db, p))


def _load_fits(path):
    if not path.exists():
        raise CLIError('fit results {} not found; run "fit" first'.format(
            path))
    return [FitResult.from_dict(d) for d in json.loads(path.read_text())]


def cmd_evaluate(cfg, args):
    table = _load_table(cfg).finite()
    fits = [f for f in _load_fits(Path(args.params) if args.params
                                  else cfg.output_dir / FIT_FILE)
            if f.params is not None and f.model in cfg.models]
    if not fits:
        raise CLIError('no usable fit results to evaluate')
    kw = dict(f_c=cfg.carrier_frequency_ghz, wmed_mode=cfg.wmed_mode,
              model_c_mode=cfg.model_c_mode)
    out = cfg.output_dir
    overall = [evaluation.evaluate_overall(table, f.params, **kw)
               for f in fits]
    evaluation.write_overall(overall, out / 'overall.csv')
    for r in overall:
        print('{:<6} RMSE {:8.2f} dB  mean error {:+8.2f} dB  n={}'.format(
            r.model_name, r.overall_rmse_db, r.mean_error_db, r.sample_count))
    if len(fits) == 1:
        return

    names = [f.model for f in fits]
    axes = ['d_w', 'd_f'] + (['a_f'] if 'C' in names else [])
    for f in fits:
        evaluation.export_plot_data(
            evaluation.scatter_data(table, f.params, **kw),
            out / 'scatter_{}.csv'.format(f.model))
        for axis in axes:
            rep = evaluation.evaluate_regional(
                table, f.params, axis, cfg.window_width,
                step=cfg.window_step, **kw)
            evaluation.export_plot_data(
                rep, out / 'regional_{}_{}.csv'.format(f.model, axis))

    explicit = cfg.baselines is not None
    baselines = [tuple(b) for b in cfg.baselines] if explicit \
        else DEFAULT_BASELINES
    for base, axis in baselines:
        base = normalize_name(base)
        if base not in names:
            if explicit:
                raise CLIError('baseline {} is not among the fitted models'
                               .format(base))
            log.info('default baseline %s not fitted; comparison skipped',
                     base)
            continue
        comp = evaluation.compare_models(table, fits, axis, cfg.window_width,
                                         base, step=cfg.window_step, **kw)
        evaluation.export_plot_data(
            comp, out / 'compare_{}_{}.csv'.format(base, axis))


def cmd_predict(cfg, args):
    fits = [f for f in _load_fits(Path(args.params) if args.params
                                  else cfg.output_dir / FIT_FILE)
            if f.params is not None and f.model in cfg.models]
    mask = geodata.read_ascii_grid(cfg.output_dir / MASK_FILE)
    trunks = geodata.load_trunks(cfg.path('trunks'))
    rx = _load_receivers(Path(args.rx))
    feats = compute_features_many(cfg.geometry(), [p for _, p in rx], mask,
                                  trunks, int(cfg.samples_per_cell),
                                  jobs=args.jobs)
    records = [geodata.MeasurementRecord(t, p, 1.0) for t, p in rx]
    table = FeatureTable.from_features(records, feats)
    cols = ['track_id', 'easting_m', 'northing_m', 'altitude_m'] + [
        '{}_db'.format(f.model) for f in fits]
    lines = [','.join(cols)]
    ok = np.array([f.is_finite() for f in feats], dtype=bool)
    good = table.take(np.flatnonzero(ok))
    preds = {}
    for f in fits:
        col = np.full(len(table), np.nan)
        if len(good):
            col[ok] = predict_arrays(good, f.params, cfg.carrier_frequency_ghz,
                                     cfg.wmed_mode, cfg.model_c_mode)
        preds[f.model] = col
    for i, (tid, pos) in enumerate(rx):
        row = [tid] + ['{:.4f}'.format(v) for v in pos]
        row += [_fmt(preds[f.model][i]) for f in fits]
        lines.append(','.join(row))
    out = Path(args.out) if args.out else cfg.output_dir / 'predictions.csv'
    out.write_text('\n'.join(lines) + '\n')
    print('{} receivers x {} models -> {}'.format(len(rx), len(fits), out))


def _fmt(v):
    return 'nan' if not math.isfinite(v) else '{:.4f}'.format(v)


def _load_receivers(path):
    if not path.exists():
        raise CLIError('receiver list not found: {}'.format(path))
    reader = csv.DictReader(io.StringIO(path.read_text()))
    need = ('track_id', 'easting_m', 'northing_m', 'altitude_m')
    if reader.fieldnames is None or any(c not in reader.fieldnames
                                        for c in need):
        raise CLIError('{}: expected columns {}'.format(path, ','.join(need)))
    out = []
    for row in reader:
        out.append((row['track_id'], tuple(float(row[c]) for c in need[1:])))
    return out


def cmd_fetch_dem(cfg, args):
    dest = Path(args.dest) if args.dest else cfg.output_dir / 'tiles'
    paths = geodata.fetch_elevation_tiles(
        args.url_template, args.bbox, dest, zoom=args.zoom,
        retries=args.retries, jobs=args.jobs, backoff=args.backoff)
    print('{} tiles in {}'.format(len(paths), dest))


def cmd_synth(args):
    from .synth import SceneSpec, make_scene, write_scene
    params = {}
    for item in args.param or ():
        key, _, value = item.partition('=')
        params[key] = float(value)
    spec = SceneSpec(seed=args.seed, n_records=args.records,
                     model=normalize_name(args.model), params=params,
                     noise_sigma_db=args.noise)
    path = write_scene(make_scene(spec), args.dest)
    print('synthetic scene -> {}'.format(path))


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog='foliagepl',
        description='Site-specific foliage path-loss modeling pipeline',
        allow_abbrev=False)
    p.add_argument('--config', default='config.json',
                   help='project config (JSON), default ./config.json')
    p.add_argument('--jobs', type=int, default=1,
                   help='parallel workers for feature computation')
    p.add_argument('--output', help='output directory (overrides config)')
    p.add_argument('--frequency', type=float, dest='carrier_frequency_ghz',
                   help='carrier frequency in GHz')
    p.add_argument('--threshold', type=float,
                   dest='foliage_height_threshold_m',
                   help='LiDAR-minus-terrain foliage threshold in m')
    p.add_argument('--window-width', type=float, dest='window_width')
    p.add_argument('--window-step', type=float, dest='window_step',
                   help='slide regional windows by this step')
    p.add_argument('--wmed-mode', choices=('strict', 'extrapolate'))
    p.add_argument('--model-c-mode', choices=('continuous', 'paper_literal'))
    p.add_argument('--models', help='comma-separated model list')
    p.add_argument('-v', '--verbose', action='store_true')
    p.add_argument('--version', action='version',
                   version='%(prog)s {} ({} kernels)'.format(__version__,
                                                             BACKEND))
    sub = p.add_subparsers(dest='command', required=True,
                           metavar='{foliage,features,fit,evaluate,predict,'
                                   'fetch-dem}')

    s = sub.add_parser('foliage', help='extract the foliage mask')
    s.add_argument('--resample', action='store_true',
                   help='resample lidar onto the terrain grid if misaligned')
    sub.add_parser('features', help='compute per-receiver features')
    sub.add_parser('fit', help='fit model parameters')
    s = sub.add_parser('evaluate', help='overall and regional RMSE reports')
    s.add_argument('--params', help='fit results document')
    s = sub.add_parser('predict', help='predict loss at new receivers')
    s.add_argument('--params', help='fit results document')
    s.add_argument('--rx', required=True, help='receiver list CSV')
    s.add_argument('--out', help='predictions CSV path')
    s = sub.add_parser('fetch-dem', help='download elevation tiles')
    s.add_argument('--url-template', required=True)
    s.add_argument('--bbox', type=int, nargs=4, required=True,
                   metavar=('XMIN', 'YMIN', 'XMAX', 'YMAX'))
    s.add_argument('--zoom', type=int, default=0)
    s.add_argument('--dest')
    s.add_argument('--retries', type=int, default=3)
    s.add_argument('--backoff', type=float, default=0.5)
    s = sub.add_parser('synth', help=argparse.SUPPRESS)
    s.add_argument('--dest', required=True)
    s.add_argument('--seed', type=int, default=2018)
    s.add_argument('--records', type=int, default=1000)
    s.add_argument('--model', default='B')
    s.add_argument('--param', action='append', metavar='NAME=VALUE')
    s.add_argument('--noise', type=float, default=2.0)
    return p


_OVERRIDES = ('carrier_frequency_ghz', 'foliage_height_threshold_m',
              'window_width', 'window_step', 'wmed_mode', 'model_c_mode')

COMMANDS = {
    'foliage': cmd_foliage, 'features': cmd_features, 'fit': cmd_fit,
    'evaluate': cmd_evaluate, 'predict': cmd_predict,
    'fetch-dem': cmd_fetch_dem,
    }


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    counter = _Counter()
    logging.getLogger().addHandler(counter)
    try:
        if args.command == 'synth':
            cmd_synth(args)
        else:
            cfg = _config(args)
            with _locked(cfg.output_dir):
                COMMANDS[args.command](cfg, args)
    except (CLIError, ValueError, OSError) as exc:
        print('error: {}'.format(exc), file=sys.stderr)
        counter.errors += 1
    finally:
        logging.getLogger().removeHandler(counter)
    print('{} warning(s), {} error(s)'.format(counter.warnings,
                                              counter.errors),
          file=sys.stderr)
    return 1 if counter.errors else 0


def _config(args):
    path = Path(args.config)
    if path.exists() or args.command != 'fetch-dem':
        cfg = ProjectConfig.load(path)
    else:
        cfg = ProjectConfig()
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if args.models is not None:
        cfg.models = [m for m in args.models.split(',') if m.strip()]
    if args.output:
        out = str(Path(args.output).resolve())
        cfg.paths = dict(cfg.paths, output_dir=out)
    cfg.validate()
    return cfg


if __name__ == '__main__':
    sys.exit(main())
