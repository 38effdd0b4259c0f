"""Un handler per sottocomando. Ogni handler legge il RunConfig (file + flag),
scrive la CSV (file o stdout), il manifest accanto alla CSV e registra
l'esecuzione nel database dei risultati."""
import argparse
import math
from dataclasses import astuple
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from analysis.geometry import (QuadraticObjective, constraint_contour, kappa_for_axis_radius, toy_lse_solve)
from analysis.kde import weight_kde
from analysis.pruning import prune_curve
from analysis.sparsity import sparsity
from config import Config
from data.cifar import load_cifar10
from data.dataset import LabeledDataset
from data.synthetic import make_synthetic_splits
from database.db import ResultsDatabase
from netcore.checkpoint import load_model, save_model
from netcore.model import Model, init_xavier_uniform, micro_resnet, mlp
from stable.density import StableParams, pdf_grid, sample
from stable.table import DerivTable, build_table, load_table, save_table, table_checksum
from training.grid import (GRID_COLUMNS, AblationRow, SweepRow, run_ablation, run_delta_sweep,
                           run_experiment_grid)
from training.priors import LaplacePrior
from training.trainer import train
from utils.exceptions import ConfigError
from utils.helpers import version_string, write_csv, write_manifest
from utils.logger import logger
from utils.run_config import RunConfig, load_run_config

command_logger = logger.getChild('commands')


# --- contesto comune ---

def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """File di config + flag 'sezione.chiave' (i flag vincono), validato per intero"""
    overrides = {k: v for k, v in vars(args).items() if '.' in k}
    return load_run_config(getattr(args, 'config', None)).apply_overrides(overrides).validate()


def _out(rc: RunConfig) -> str:
    return rc.get('output', 'out')


def _finish(command: str, rc: RunConfig, header: Sequence[str], rows: List[Sequence[Any]],
            table_checksum_used: Optional[str] = None, seed: Optional[int] = None,
            grid_rows: Optional[List[Dict[str, Any]]] = None,
            table_checksums: Optional[Dict[str, str]] = None) -> None:
    """table_checksums: una voce per tabella costruita dai comandi con più tabelle"""
    out = _out(rc)
    write_csv(header, rows, out or None)
    if table_checksums and table_checksum_used is None:
        table_checksum_used = ','.join(sorted(set(table_checksums.values())))
    if out:
        extra = {'table_checksums': table_checksums} if table_checksums is not None else None
        write_manifest(out, command, rc.to_dict(), table_checksum_used, seed, extra)
        command_logger.info(f"✅ {command}: {len(rows)} righe in {out}")
    if Config.RESULTS_DB:
        db = ResultsDatabase(Config.RESULTS_DB)
        run_id = db.record_run(command, rc.to_dict(), table_checksum_used, version_string(), seed, out)
        if run_id is not None and grid_rows:
            db.add_grid_cells(run_id, grid_rows)


def _recording_builder(rc: RunConfig, checksums: Dict[str, str],
                       key: Callable[[StableParams, int], str]) -> Callable[..., DerivTable]:
    """build_table che annota il checksum di ogni tabella costruita in checksums[key(params, n_grid)]"""
    quad = rc.quadrature()

    def builder(params: StableParams, epsilon: float, n_grid: int) -> DerivTable:
        table = build_table(params, epsilon, n_grid, quad)
        checksums[key(params, n_grid)] = table_checksum(table)
        return table

    return builder


def _load_data(rc: RunConfig) -> Tuple[LabeledDataset, LabeledDataset]:
    d = rc.sections['data']
    if d['source'] == 'cifar10':
        return load_cifar10(d['dir'], d['limit'] or None)
    return make_synthetic_splits(d['n_train'], d['n_test'], d['classes'], tuple(d['input_shape']),
                                 d['difficulty'], d['seed'])


def _build_model(rc: RunConfig, input_shape: Tuple[int, ...], num_classes: int,
                 batch_norm: Optional[bool] = None) -> Model:
    m = rc.sections['model']
    if m['arch'] == 'mlp':
        return mlp(input_shape, num_classes, tuple(m['hidden']))
    if len(input_shape) != 3:
        raise ConfigError('data.input_shape', "micro_resnet richiede (C, H, W)")
    head_pool = max(1, min(4, input_shape[1] // 2))
    bn = m['batch_norm'] if batch_norm is None else batch_norm
    return micro_resnet(input_shape, num_classes, batch_norm=bn, head_pool=head_pool)


def _table(rc: RunConfig) -> DerivTable:
    path = rc.get('table', 'path')
    if path:
        table = load_table(path)
        command_logger.info(f"Tabella caricata da {path} (checksum {table_checksum(table)})")
        return table
    return build_table(rc.stable_params(), rc.get('table', 'epsilon'), rc.get('table', 'n_grid'), rc.quadrature())


def _prior(rc: RunConfig):
    """(prior, checksum della tabella usata o None)"""
    kind = rc.get('prior', 'kind')
    if kind == 'none':
        return None, None
    if kind == 'laplace':
        return LaplacePrior(rc.get('prior', 'gamma')), None
    table = _table(rc)
    return table, table_checksum(table)


def _trained_model(rc: RunConfig) -> Model:
    path = rc.get('model', 'checkpoint')
    if not path:
        raise ConfigError('model.checkpoint', "serve un checkpoint (salvato da `train --save`)")
    return load_model(path)


# --- comandi ---

def cmd_density(args: argparse.Namespace) -> None:
    """Curva h(theta) su una griglia regolare"""
    rc = run_config_from_args(args)
    if args.points < 1:
        raise ConfigError('points', f"{args.points}: serve almeno un punto")
    if not args.hi >= args.lo:
        raise ConfigError('hi', f"intervallo [{args.lo}, {args.hi}] vuoto")
    thetas = np.linspace(args.lo, args.hi, args.points)
    values = pdf_grid(rc.stable_params(), thetas, rc.quadrature())
    _finish('density', rc, ['theta', 'density'], list(zip(thetas.tolist(), values.tolist())))


def cmd_sample(args: argparse.Namespace) -> None:
    """Rumore bianco SαS"""
    rc = run_config_from_args(args)
    if args.n < 1:
        raise ConfigError('n', f"{args.n}: serve almeno un campione")
    draws = sample(rc.stable_params(), args.n, args.seed)
    _finish('sample', rc, ['index', 'value'], list(enumerate(draws.tolist())), seed=args.seed)


def cmd_table_build(args: argparse.Namespace) -> None:
    rc = run_config_from_args(args)
    epsilon = rc.get('table', 'epsilon')
    n_grid = rc.get('table', 'n_grid')
    if args.delta is not None:
        if not args.delta > 0:
            raise ConfigError('delta', f"{args.delta} deve essere > 0")
        n_grid = int(round(epsilon / args.delta))
        rc.set('table.n_grid', n_grid)
    params = rc.stable_params()
    table = build_table(params, epsilon, n_grid, rc.quadrature())
    path = args.table_out or str(Path(rc.get('output', 'dir')) / f"table_a{params.alpha:g}_g{params.gamma:g}.sdrt")
    checksum = save_table(table, path)
    command_logger.info(f"✅ Tabella {path}: delta={table.delta:g} N_g={n_grid} checksum {checksum}")
    rows = [['path', path], ['checksum', checksum], ['alpha', params.alpha], ['gamma', params.gamma],
            ['epsilon', epsilon], ['n_grid', n_grid], ['delta', table.delta]]
    _finish('table-build', rc, ['field', 'value'], rows, checksum)


def cmd_table_inspect(args: argparse.Namespace) -> None:
    """Verifica il checksum e scarica i valori (chiave, theta_k, valore)"""
    rc = run_config_from_args(args)
    table = load_table(args.path)
    checksum = table_checksum(table)
    command_logger.info(
        f"Tabella {args.path}: alpha={table.params.alpha} gamma={table.params.gamma} "
        f"eps={table.epsilon} N_g={table.n_grid} checksum {checksum}"
    )
    keys = range(-table.n_grid, table.n_grid + 1)
    rows = [[k, k * table.delta, table.value_at(k)] for k in keys]
    _finish('table-inspect', rc, ['key', 'theta', 'value'], rows, checksum)


EPOCH_COLUMNS = ('epoch', 'train_accuracy', 'train_log_likelihood', 'test_accuracy', 'test_log_likelihood',
                 'saturation')


def cmd_train(args: argparse.Namespace) -> None:
    rc = run_config_from_args(args)
    config = rc.train_config()
    train_set, test_set = _load_data(rc)
    prior, checksum = _prior(rc)
    model = init_xavier_uniform(_build_model(rc, train_set.input_shape, train_set.num_classes), config.seed)
    report = train(model, train_set, prior, config, test_set)
    command_logger.info(f"Training completato in {report.wall_clock:.1f}s")
    if args.save:
        save_model(report.model, args.save)
    _finish('train', rc, EPOCH_COLUMNS, [astuple(e) for e in report.epochs], checksum, config.seed)


def cmd_grid(args: argparse.Namespace) -> None:
    rc = run_config_from_args(args)
    g = rc.sections['grid']
    train_set, test_set = _load_data(rc)
    model = _build_model(rc, train_set.input_shape, train_set.num_classes)
    checksums: Dict[str, str] = {}
    rows = run_experiment_grid(
        model, train_set, test_set, rc.train_config(), g['alphas'], g['gammas'], g['cs'], g['seeds'],
        rc.get('table', 'epsilon'), rc.get('table', 'n_grid'),
        table_builder=_recording_builder(rc, checksums, lambda p, n: f"alpha={p.alpha:g},gamma={p.gamma:g}"),
        include_gaussian=g['gaussian'], include_laplace=g['laplace'],
        sparsity_tau=rc.get('analysis', 'tau'), prune_fraction=rc.get('analysis', 'fraction'),
    )
    failed = sum(1 for r in rows if r.status != 'ok')
    if failed:
        command_logger.warning(f"⚠️ {failed} celle fallite su {len(rows)}")
    _finish('grid', rc, GRID_COLUMNS, [astuple(r) for r in rows],
            grid_rows=[r.as_dict() for r in rows], table_checksums=checksums)


def cmd_prune(args: argparse.Namespace) -> None:
    rc = run_config_from_args(args)
    model = _trained_model(rc)
    _, test_set = _load_data(rc)
    curve = prune_curve(model, test_set, rc.get('analysis', 'fractions'))
    report = sparsity(model, rc.get('analysis', 'tau'))
    command_logger.info(f"Sparsità prima della potatura: {report.fraction:.4f} (kurtosi {report.kurtosis:.3f})")
    _finish('prune', rc, ['fraction', 'accuracy'], curve)


def cmd_geometry(args: argparse.Namespace) -> None:
    """Contorno ln h(t1) + ln h(t2) = kappa"""
    rc = run_config_from_args(args)
    params = rc.stable_params()
    quad = rc.quadrature()
    kappa = rc.get('analysis', 'kappa')
    if kappa is None:
        kappa = kappa_for_axis_radius(params, rc.get('analysis', 'axis_radius'), quad)
    contour = constraint_contour(params, kappa, rc.get('analysis', 'resolution'), quad)
    angles = list(contour.angles) + [contour.angles[0] + 2.0 * math.pi]
    rows = [[a, p[0], p[1]] for a, p in zip(angles, contour.points.tolist())]
    _finish('geometry', rc, ['angle', 'theta1', 'theta2'], rows)


def cmd_kde(args: argparse.Namespace) -> None:
    rc = run_config_from_args(args)
    model = _trained_model(rc)
    curve = weight_kde(model, rc.get('analysis', 'bandwidth') or None)
    command_logger.info(f"KDE: banda {curve.bandwidth:.3g}, massa {curve.mass:.6f}")
    _finish('kde', rc, ['weight', 'density'], list(zip(curve.grid.tolist(), curve.density.tolist())))


def cmd_delta_sweep(args: argparse.Namespace) -> None:
    rc = run_config_from_args(args)
    train_set, test_set = _load_data(rc)
    model = _build_model(rc, train_set.input_shape, train_set.num_classes)
    checksums: Dict[str, str] = {}
    rows = run_delta_sweep(
        model, train_set, test_set, rc.train_config(), rc.stable_params(), rc.get('table', 'epsilon'),
        rc.get('grid', 'n_grids'), rc.get('grid', 'seeds'),
        table_builder=_recording_builder(rc, checksums, lambda p, n: f"n_grid={n}"),
        sparsity_tau=rc.get('analysis', 'tau'),
    )
    _finish('delta-sweep', rc, SweepRow.__dataclass_fields__, [astuple(r) for r in rows],
            table_checksums=checksums)


def cmd_ablation(args: argparse.Namespace) -> None:
    rc = run_config_from_args(args)
    train_set, test_set = _load_data(rc)
    table = _table(rc)

    def factory(batch_norm: bool) -> Model:
        return _build_model(rc, train_set.input_shape, train_set.num_classes, batch_norm=batch_norm)

    rows = run_ablation(
        factory, train_set, test_set, rc.train_config(), table, rc.get('grid', 'batch_sizes'),
        rc.get('grid', 'seeds'), dropout_rate=rc.get('grid', 'dropout_rate'),
        sparsity_tau=rc.get('analysis', 'tau'),
    )
    _finish('ablation', rc, AblationRow.__dataclass_fields__, [astuple(r) for r in rows], table_checksum(table))


def cmd_toy(args: argparse.Namespace) -> None:
    """Minimi vincolati del problema giocattolo 2-D per più alpha"""
    rc = run_config_from_args(args)
    a = rc.sections['analysis']
    objective = QuadraticObjective(centre=tuple(a['centre']), axis_radius=a['toy_axis_radius'])
    quad = rc.quadrature()
    rows = []
    for alpha in rc.get('grid', 'alphas'):
        params = StableParams(alpha=alpha, gamma=rc.get('prior', 'gamma'))
        theta1, theta2 = toy_lse_solve(objective, params, resolution=max(a['resolution'], 8), quad=quad)
        rows.append([alpha, theta1, theta2])
    _finish('toy', rc, ['alpha', 'theta1', 'theta2'], rows)
