"""RunConfig: documento JSON a sezioni che descrive un esperimento.

Ogni chiave ha un default; chiavi o sezioni sconosciute sono errori, e i tipi
devono combaciare con quelli del default (un intero vale anche come float).
I flag della CLI arrivano come override 'sezione.chiave' e vincono sul file.
"""
import copy
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from config import Config
from data.augment import AugmentFlags
from stable.density import QuadratureConfig, StableParams
from training.trainer import TrainConfig
from utils.exceptions import ConfigError, SoftDiamondError

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'prior': {
        'kind': 'sas',          # sas | laplace | none
        'alpha': 1.5,
        'gamma': 1.0,
        'mu': 0.0,
    },
    'table': {
        'epsilon': Config.DEFAULT_EPSILON,
        'n_grid': Config.DEFAULT_N_GRID,
        'path': '',             # tabella già costruita; vuoto = costruiscila
    },
    'quadrature': {
        'abs_tol': Config.QUAD_ABS_TOL,
        'omega_max_cutoff': 1e-12,
        'max_panels': Config.QUAD_MAX_PANELS,
        'accel_threshold': 20000,
        'max_cycles': 500,
    },
    'model': {
        'arch': 'micro_resnet',  # micro_resnet | mlp
        'batch_norm': True,
        'hidden': [64],
        'checkpoint': '',
    },
    'train': {
        'prior_scale_c': 0.0,
        'momentum_m': 0.9,
        'dampening_tau': 0.0,
        'epochs': 2,
        'batch_size': 32,
        'lr_schedule': [[0.0, 0.05], [1.0, 0.005]],
        'seed': 0,
        'dropout_rate': 0.0,
        'flip': False,
        'cutout': False,
        'cutout_size': 8,
        'channel_norm': False,
        'saturation_warn_fraction': 0.01,
    },
    'data': {
        'source': 'synthetic',  # synthetic | cifar10
        'dir': '',
        'limit': 0,             # 0 = tutto il train CIFAR-10
        'n_train': 1000,
        'n_test': 200,
        'classes': 10,
        'input_shape': [3, 8, 8],
        'difficulty': 0.5,
        'seed': 0,
    },
    'grid': {
        'alphas': [2.0, 1.5, 1.0, 0.5],
        'gammas': [1.0],
        'cs': [0.0, 0.001, 0.01],
        'seeds': [0],
        'gaussian': True,
        'laplace': True,
        'n_grids': [100, 200, 400],
        'batch_sizes': [32],
        'dropout_rate': 0.2,
    },
    'analysis': {
        'tau': 1e-3,
        'fraction': 0.5,
        'fractions': [0.0, 0.25, 0.5, 0.75, 0.9],
        'bandwidth': 0.0,       # 0 = regola di Silverman
        'kappa': None,          # null = livello con intercetto sull'asse a axis_radius
        'axis_radius': 1.0,
        'resolution': 64,
        'centre': [1.0, 2.2],
        'toy_axis_radius': 1.5,
    },
    'output': {
        'dir': Config.OUTPUT_DIR,
        'out': '',              # vuoto = CSV su stdout
    },
}


def _check_type(key: str, default: Any, value: Any) -> Any:
    if default is None:
        # numero facoltativo
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"atteso numero o null, trovato {value!r}")
        return float(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"atteso booleano, trovato {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"atteso numero, trovato {value!r}")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"atteso intero, trovato {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"attesa stringa, trovato {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(key, f"attesa lista, trovato {value!r}")
        return value
    return value


class RunConfig:
    def __init__(self, sections: Optional[Mapping[str, Mapping[str, Any]]] = None):
        self.sections: Dict[str, Dict[str, Any]] = copy.deepcopy(DEFAULTS)
        for section, values in (sections or {}).items():
            if section not in DEFAULTS:
                raise ConfigError(section, "sezione sconosciuta")
            if not isinstance(values, Mapping):
                raise ConfigError(section, "la sezione deve essere un oggetto")
            for key, value in values.items():
                self.set(f"{section}.{key}", value)

    def set(self, dotted: str, value: Any) -> None:
        section, _, key = dotted.partition('.')
        if section not in DEFAULTS:
            raise ConfigError(dotted, "sezione sconosciuta")
        if key not in DEFAULTS[section]:
            raise ConfigError(dotted, "chiave sconosciuta")
        self.sections[section][key] = _check_type(dotted, DEFAULTS[section][key], value)

    def apply_overrides(self, overrides: Mapping[str, Any]) -> 'RunConfig':
        """Override dai flag (None = flag non passato)"""
        for dotted, value in overrides.items():
            if value is not None:
                self.set(dotted, value)
        return self

    def get(self, section: str, key: str) -> Any:
        return self.sections[section][key]

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.sections)

    # --- costruttori degli oggetti di dominio, con l'errore riportato sulla chiave ---

    def _build(self, section: str, factory, **kwargs):
        try:
            return factory(**kwargs)
        except SoftDiamondError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(section, str(e)) from e

    def stable_params(self) -> StableParams:
        p = self.sections['prior']
        return self._build('prior', StableParams, alpha=p['alpha'], gamma=p['gamma'], mu=p['mu'])

    def quadrature(self) -> QuadratureConfig:
        return self._build('quadrature', QuadratureConfig, **self.sections['quadrature'])

    def augment_flags(self) -> AugmentFlags:
        t = self.sections['train']
        return self._build('train', AugmentFlags, flip=t['flip'], cutout=t['cutout'],
                           cutout_size=t['cutout_size'], channel_norm=t['channel_norm'])

    def train_config(self) -> TrainConfig:
        t = self.sections['train']
        return self._build(
            'train', TrainConfig,
            prior_scale_c=t['prior_scale_c'], momentum_m=t['momentum_m'], dampening_tau=t['dampening_tau'],
            epochs=t['epochs'], batch_size=t['batch_size'], lr_schedule=t['lr_schedule'], seed=t['seed'],
            dropout_rate=t['dropout_rate'], augment=self.augment_flags(),
            saturation_warn_fraction=t['saturation_warn_fraction'],
        )

    def validate(self) -> 'RunConfig':
        """Valida tutto prima di iniziare qualsiasi lavoro"""
        if self.get('prior', 'kind') not in ('sas', 'laplace', 'none'):
            raise ConfigError('prior.kind', f"valore {self.get('prior', 'kind')!r} non ammesso")
        if self.get('model', 'arch') not in ('micro_resnet', 'mlp'):
            raise ConfigError('model.arch', f"valore {self.get('model', 'arch')!r} non ammesso")
        if self.get('data', 'source') not in ('synthetic', 'cifar10'):
            raise ConfigError('data.source', f"valore {self.get('data', 'source')!r} non ammesso")
        if self.get('data', 'source') == 'cifar10' and not self.get('data', 'dir'):
            raise ConfigError('data.dir', "obbligatorio con source = cifar10")
        if not self.get('table', 'epsilon') > 0:
            raise ConfigError('table.epsilon', "deve essere > 0")
        if self.get('table', 'n_grid') < 1:
            raise ConfigError('table.n_grid', "deve essere >= 1")
        self.stable_params()
        self.quadrature()
        self.train_config()
        return self


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Legge il file JSON (se dato) sopra i default"""
    if not path:
        return RunConfig()
    try:
        document = json.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(str(path), f"file non leggibile: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"JSON non valido: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(str(path), "il documento deve essere un oggetto")
    return RunConfig(document)
