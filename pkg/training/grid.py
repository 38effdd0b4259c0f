"""Griglie di esperimenti: prior x gamma x c x seed, sweep del passo delta, ablazioni.

Ogni cella che fallisce viene registrata con il suo stato e la griglia prosegue.
"""
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from analysis.pruning import magnitude_prune
from analysis.sparsity import sparsity
from data.augment import AugmentFlags
from data.dataset import LabeledDataset
from netcore.model import Model, init_xavier_uniform
from stable.density import StableParams
from stable.table import build_table
from training.priors import LaplacePrior
from training.trainer import TrainConfig, evaluate, train
from utils.exceptions import SoftDiamondError
from utils.logger import logger

grid_logger = logger.getChild('grid')

NAN = float('nan')


@dataclass(frozen=True)
class GridRow:
    prior: str
    alpha: float
    gamma: float
    c: float
    seed: str
    train_accuracy: float = NAN
    test_accuracy: float = NAN
    test_log_likelihood: float = NAN
    sparsity: float = NAN
    pruned_accuracy: float = NAN
    status: str = 'ok'

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


GRID_COLUMNS = tuple(GridRow.__dataclass_fields__)


def log_spaced_cs(lo: float = 1e-4, hi: float = 100.0, count: int = 15) -> List[float]:
    return [float(c) for c in np.geomspace(lo, hi, count)]


def _run_cell(model: Model, train_set: LabeledDataset, test_set: Optional[LabeledDataset], prior,
              config: TrainConfig, label: Dict[str, object], sparsity_tau: float, prune_fraction: float) -> GridRow:
    scored_on = test_set if test_set is not None else train_set
    try:
        report = train(init_xavier_uniform(model, config.seed), train_set, prior, config, test_set)
        trained = report.model
        pruned, _ = magnitude_prune(trained, prune_fraction)
        on_test = evaluate(trained, scored_on)
        return GridRow(
            **label,
            train_accuracy=report.final.train_accuracy,
            test_accuracy=on_test.accuracy,
            test_log_likelihood=on_test.mean_log_likelihood,
            sparsity=sparsity(trained, sparsity_tau).fraction,
            pruned_accuracy=evaluate(pruned, scored_on).accuracy,
        )
    except SoftDiamondError as e:
        grid_logger.warning(f"⚠️ Cella {label} fallita: {e}")
        return GridRow(**label, status=f"failed: {type(e).__name__}: {e}")


def _with_means(rows: List[GridRow], per_cell: int) -> List[GridRow]:
    """Aggiunge dopo ogni cella una riga 'mean' sui seed riusciti"""
    if per_cell < 2:
        return rows
    out: List[GridRow] = []
    for start in range(0, len(rows), per_cell):
        cell = rows[start:start + per_cell]
        out.extend(cell)
        ok = [r for r in cell if r.status == 'ok']
        metrics = {}
        for key in ('train_accuracy', 'test_accuracy', 'test_log_likelihood', 'sparsity', 'pruned_accuracy'):
            metrics[key] = float(np.mean([getattr(r, key) for r in ok])) if ok else NAN
        first = cell[0]
        out.append(GridRow(first.prior, first.alpha, first.gamma, first.c, 'mean', **metrics,
                           status='ok' if ok else 'failed'))
    return out


def run_experiment_grid(model: Model, train_set: LabeledDataset, test_set: Optional[LabeledDataset],
                        base_config: TrainConfig, alphas: Sequence[float], gammas: Sequence[float],
                        cs: Sequence[float], seeds: Sequence[int], epsilon: float, n_grid: int,
                        table_builder: Callable = build_table, include_gaussian: bool = False,
                        include_laplace: bool = False, sparsity_tau: float = 1e-3,
                        prune_fraction: float = 0.5) -> List[GridRow]:
    """Una riga per (prior, alpha, gamma, c, seed); con più seed anche la riga media.

    table_builder(params, epsilon, n_grid) costruisce la tabella per ogni (alpha, gamma);
    closed_form_table la sostituisce con i valori analitici.
    """
    alphas = list(alphas)
    if include_gaussian and 2.0 not in alphas:
        alphas.insert(0, 2.0)
    rows: List[GridRow] = []

    for alpha in alphas:
        for gamma in gammas:
            params = StableParams(alpha=alpha, gamma=gamma)
            try:
                table = table_builder(params, epsilon, n_grid)
            except SoftDiamondError as e:
                grid_logger.warning(f"⚠️ Tabella alpha={alpha} gamma={gamma} non costruibile: {e}")
                for c in cs:
                    rows.extend(GridRow('sas', alpha, gamma, c, str(s), status=f"failed: {type(e).__name__}: {e}")
                                for s in seeds)
                continue
            for c in cs:
                for seed in seeds:
                    config = replace(base_config, prior_scale_c=c, seed=seed)
                    label = dict(prior='sas', alpha=alpha, gamma=gamma, c=c, seed=str(seed))
                    rows.append(_run_cell(model, train_set, test_set, table, config, label,
                                          sparsity_tau, prune_fraction))
                grid_logger.info(f"Cella alpha={alpha} gamma={gamma} c={c:g} completata")

    if include_laplace:
        for gamma in gammas:
            for c in cs:
                for seed in seeds:
                    config = replace(base_config, prior_scale_c=c, seed=seed)
                    label = dict(prior='laplace', alpha=NAN, gamma=gamma, c=c, seed=str(seed))
                    rows.append(_run_cell(model, train_set, test_set, LaplacePrior(gamma), config, label,
                                          sparsity_tau, prune_fraction))

    return _with_means(rows, len(seeds))


@dataclass(frozen=True)
class SweepRow:
    n_grid: int
    delta: float
    seed: int
    test_accuracy: float = NAN
    sparsity: float = NAN
    status: str = 'ok'


def run_delta_sweep(model: Model, train_set: LabeledDataset, test_set: Optional[LabeledDataset],
                    base_config: TrainConfig, params: StableParams, epsilon: float,
                    n_grids: Iterable[int], seeds: Sequence[int], table_builder: Callable = build_table,
                    sparsity_tau: float = 1e-3) -> List[SweepRow]:
    """Accuratezza al variare del passo delta = epsilon / N_g, a epsilon fisso"""
    scored_on = test_set if test_set is not None else train_set
    rows: List[SweepRow] = []
    for n_grid in n_grids:
        delta = epsilon / n_grid
        try:
            table = table_builder(params, epsilon, n_grid)
        except SoftDiamondError as e:
            grid_logger.warning(f"⚠️ Tabella N_g={n_grid} non costruibile: {e}")
            rows.extend(SweepRow(n_grid, delta, s, status=f"failed: {type(e).__name__}: {e}") for s in seeds)
            continue
        for seed in seeds:
            config = replace(base_config, seed=seed)
            try:
                report = train(init_xavier_uniform(model, seed), train_set, table, config, test_set)
                rows.append(SweepRow(n_grid, delta, seed, evaluate(report.model, scored_on).accuracy,
                                     sparsity(report.model, sparsity_tau).fraction))
            except SoftDiamondError as e:
                grid_logger.warning(f"⚠️ delta={delta:g} seed={seed} fallito: {e}")
                rows.append(SweepRow(n_grid, delta, seed, status=f"failed: {type(e).__name__}: {e}"))
    return rows


ABLATION_VARIANTS = ('plain', 'dropout', 'augmentation', 'batch_norm')


@dataclass(frozen=True)
class AblationRow:
    batch_size: int
    variant: str
    with_prior: bool
    seed: int
    test_accuracy: float = NAN
    sparsity: float = NAN
    status: str = 'ok'


def run_ablation(model_factory: Callable[[bool], Model], train_set: LabeledDataset,
                 test_set: Optional[LabeledDataset], base_config: TrainConfig, table,
                 batch_sizes: Sequence[int], seeds: Sequence[int], dropout_rate: float = 0.2,
                 augment_flags: AugmentFlags = AugmentFlags(flip=True, cutout=True, cutout_size=2),
                 sparsity_tau: float = 1e-3) -> List[AblationRow]:
    """batch size x {plain, dropout, augmentation, batch_norm} x {senza, con prior}.

    model_factory(batch_norm) costruisce l'architettura; la tabella porta il suo c
    da base_config.prior_scale_c quando with_prior è vero.
    """
    if base_config.prior_scale_c <= 0.0:
        grid_logger.warning("⚠️ prior_scale_c = 0: le righe con prior coincidono con quelle senza")
    scored_on = test_set if test_set is not None else train_set
    models = {False: model_factory(False), True: model_factory(True)}
    rows: List[AblationRow] = []
    for batch_size in batch_sizes:
        for variant in ABLATION_VARIANTS:
            for with_prior in (False, True):
                for seed in seeds:
                    config = replace(
                        base_config, batch_size=batch_size, seed=seed,
                        prior_scale_c=base_config.prior_scale_c if with_prior else 0.0,
                        dropout_rate=dropout_rate if variant == 'dropout' else 0.0,
                        augment=augment_flags if variant == 'augmentation' else AugmentFlags(),
                    )
                    model = models[variant == 'batch_norm']
                    try:
                        report = train(init_xavier_uniform(model, seed), train_set,
                                       table if with_prior else None, config, test_set)
                        rows.append(AblationRow(batch_size, variant, with_prior, seed,
                                                evaluate(report.model, scored_on).accuracy,
                                                sparsity(report.model, sparsity_tau).fraction))
                    except SoftDiamondError as e:
                        grid_logger.warning(f"⚠️ ablazione {variant} bs={batch_size} seed={seed}: {e}")
                        rows.append(AblationRow(batch_size, variant, with_prior, seed,
                                                status=f"failed: {type(e).__name__}: {e}"))
    return rows
