import argparse
import sys
import warnings
from typing import Callable, Dict, List, Optional

from config import Config
from handlers import commands, errors
from utils.exceptions import TableDomainWarning
from utils.logger import logger

cli_logger = logger.getChild('cli')


def _prior_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--alpha', dest='prior.alpha', type=float, help="stabilità alpha in (0, 2]")
    parser.add_argument('--gamma', dest='prior.gamma', type=float, help="dispersione gamma > 0")
    parser.add_argument('--mu', dest='prior.mu', type=float, help="posizione mu")


def _table_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--epsilon', dest='table.epsilon', type=float, help="semiampiezza della tabella")
    parser.add_argument('--n-grid', dest='table.n_grid', type=int, help="punti per lato N_g")
    parser.add_argument('--table', dest='table.path', help="tabella già costruita")
    parser.add_argument('--abs-tol', dest='quadrature.abs_tol', type=float, help="tolleranza della quadratura")


def _train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--prior', dest='prior.kind', choices=['sas', 'laplace', 'none'])
    parser.add_argument('--c', dest='train.prior_scale_c', type=float, help="coefficiente del prior")
    parser.add_argument('--momentum', dest='train.momentum_m', type=float)
    parser.add_argument('--dampening', dest='train.dampening_tau', type=float)
    parser.add_argument('--epochs', dest='train.epochs', type=int)
    parser.add_argument('--batch-size', dest='train.batch_size', type=int)
    parser.add_argument('--seed', dest='train.seed', type=int)
    parser.add_argument('--dropout', dest='train.dropout_rate', type=float)
    parser.add_argument('--arch', dest='model.arch', choices=['micro_resnet', 'mlp'])
    parser.add_argument('--data', dest='data.source', choices=['synthetic', 'cifar10'])
    parser.add_argument('--data-dir', dest='data.dir')
    parser.add_argument('--limit', dest='data.limit', type=int, help="primi N campioni di train CIFAR-10")


def _analysis_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--checkpoint', dest='model.checkpoint', help="modello salvato con train --save")
    parser.add_argument('--tau', dest='analysis.tau', type=float, help="soglia di sparsità")


def _register_handlers(subparsers) -> Dict[str, Callable]:
    """Registra tutti i sottocomandi; ritorna nome -> handler"""
    handlers: Dict[str, Callable] = {}

    def add(name: str, handler: Callable, help_text: str, *flag_groups) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(name, help=help_text)
        parser.add_argument('--config', help="RunConfig JSON")
        parser.add_argument('--out', dest='output.out', help="CSV di uscita (default stdout)")
        for group in flag_groups:
            group(parser)
        parser.set_defaults(command=name)
        handlers[name] = handler
        return parser

    p = add('density', commands.cmd_density, "curva h(theta)", _prior_flags, _table_flags)
    p.add_argument('--lo', type=float, default=-5.0)
    p.add_argument('--hi', type=float, default=5.0)
    p.add_argument('--points', type=int, default=101)

    p = add('sample', commands.cmd_sample, "campioni SαS (Chambers-Mallows-Stuck)", _prior_flags)
    p.add_argument('--n', type=int, default=1000)
    p.add_argument('--seed', type=int, default=0)

    p = add('table-build', commands.cmd_table_build, "costruisce e salva la tabella", _prior_flags, _table_flags)
    p.add_argument('--delta', type=float, help="passo della griglia (sostituisce --n-grid)")
    p.add_argument('--table-out', help="file .sdrt di destinazione")

    p = add('table-inspect', commands.cmd_table_inspect, "verifica e scarica una tabella")
    p.add_argument('path')

    add('train', commands.cmd_train, "addestra con il prior", _prior_flags, _table_flags, _train_flags) \
        .add_argument('--save', help="checkpoint del modello addestrato")
    add('grid', commands.cmd_grid, "griglia prior x gamma x c x seed", _table_flags, _train_flags, _analysis_flags)
    add('prune', commands.cmd_prune, "accuratezza dopo la potatura", _train_flags, _analysis_flags)
    add('geometry', commands.cmd_geometry, "contorno dell'insieme di vincolo", _prior_flags,
        lambda q: q.add_argument('--kappa', dest='analysis.kappa', type=float))
    add('kde', commands.cmd_kde, "KDE dei pesi", _analysis_flags)
    add('delta-sweep', commands.cmd_delta_sweep, "accuratezza al variare di delta", _prior_flags, _table_flags,
        _train_flags, _analysis_flags)
    add('ablation', commands.cmd_ablation, "ablazione dei regolarizzatori", _prior_flags, _table_flags,
        _train_flags, _analysis_flags)
    add('toy', commands.cmd_toy, "problema giocattolo 2-D", _prior_flags)
    return handlers


def build_parser():
    parser = argparse.ArgumentParser(prog='softdiamond', description="Regolarizzatori SαS 'soft diamond'")
    subparsers = parser.add_subparsers(dest='command', required=True)
    handlers = _register_handlers(subparsers)
    return parser, handlers


def check_config():
    required = ['LOG_LEVEL', 'OUTPUT_DIR', 'RESULTS_DB', 'QUAD_ABS_TOL', 'DEFAULT_EPSILON', 'DEFAULT_N_GRID']
    for var in required:
        if not hasattr(Config, var):
            raise ValueError(f"Config.{var} mancante nel file config.py")
    if not Config.QUAD_ABS_TOL > 0 or Config.DEFAULT_N_GRID < 1 or not Config.DEFAULT_EPSILON > 0:
        raise ValueError("QUAD_ABS_TOL, DEFAULT_EPSILON e DEFAULT_N_GRID devono essere positivi")


def run(argv: Optional[List[str]] = None) -> int:
    """Punto di ingresso: 0 successo, 1 validazione, 2 errore numerico o di runtime"""
    parser, handlers = build_parser()
    args = parser.parse_args(argv)
    try:
        check_config()
        with warnings.catch_warnings():
            warnings.simplefilter('always', TableDomainWarning)
            handlers[args.command](args)
        return 0
    except Exception as e:
        return errors.error_handler(e)


if __name__ == "__main__":
    sys.exit(run())
