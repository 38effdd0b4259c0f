"""Modello come sequenza di LayerSpec + dizionario dei parametri.

Le attivazioni sono indicizzate così: a[0] è l'ingresso, a[i + 1] è l'uscita
del layer i. ResidualAdd(skip_from=j) somma ad a[i] l'ingresso del layer j.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from netcore import layers as K
from utils.exceptions import EmptyModel, InvalidParameter, ShapeMismatch
from utils.logger import logger
from utils.rng import stream

model_logger = logger.getChild('netcore')

LAYER_KINDS = ('Dense', 'Conv2D', 'BatchNorm', 'ReLU', 'MaxPool', 'ResidualAdd', 'Flatten', 'Softmax')
Shape = Tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0
    channels: int = 0
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    pool: int = 2
    skip_from: int = -1
    momentum: float = 0.1
    eps: float = 1e-5

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InvalidParameter(f"tipo di layer sconosciuto: {self.kind!r}")


# Costruttori brevi, usati dalle architetture e dai test

def dense(units: int) -> LayerSpec:
    return LayerSpec('Dense', units=units)


def conv2d(channels: int, kernel: int = 3, stride: int = 1, padding: int = 1) -> LayerSpec:
    return LayerSpec('Conv2D', channels=channels, kernel=kernel, stride=stride, padding=padding)


def batchnorm(momentum: float = 0.1, eps: float = 1e-5) -> LayerSpec:
    return LayerSpec('BatchNorm', momentum=momentum, eps=eps)


def relu() -> LayerSpec:
    return LayerSpec('ReLU')


def max_pool(pool: int = 2) -> LayerSpec:
    return LayerSpec('MaxPool', pool=pool)


def residual_add(skip_from: int) -> LayerSpec:
    return LayerSpec('ResidualAdd', skip_from=skip_from)


def flatten() -> LayerSpec:
    return LayerSpec('Flatten')


def softmax() -> LayerSpec:
    return LayerSpec('Softmax')


@dataclass
class Model:
    layers: List[LayerSpec]
    input_shape: Shape
    shapes: List[Shape]
    params: Dict[str, np.ndarray] = field(repr=False)
    state: Dict[str, np.ndarray] = field(repr=False)
    prior_mask: Dict[str, bool] = field(repr=False)

    @property
    def num_classes(self) -> int:
        return self.shapes[-1][0]

    @property
    def num_weights(self) -> int:
        return sum(self.params[name].size for name in self.masked_names())

    def masked_names(self) -> List[str]:
        """Nomi dei parametri che ricevono il prior, in ordine di layer"""
        return [name for name in self.params if self.prior_mask[name]]

    def copy(self) -> 'Model':
        return Model(
            list(self.layers), tuple(self.input_shape), list(self.shapes),
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.state.items()},
            dict(self.prior_mask),
        )

    def masked_weights(self) -> np.ndarray:
        """Tutti i pesi sotto prior concatenati in un vettore"""
        names = self.masked_names()
        if not names:
            return np.zeros(0)
        return np.concatenate([self.params[n].ravel() for n in names])


def _resolve(spec: LayerSpec, index: int, incoming: Shape, history: List[Shape], is_last: bool) -> Shape:
    kind = spec.kind
    where = f"layer {index} ({kind})"
    if kind == 'Dense':
        if len(incoming) != 1:
            raise ShapeMismatch(f"{where}: serve un ingresso piatto, trovato {incoming} (manca Flatten?)")
        if spec.units < 1:
            raise ShapeMismatch(f"{where}: units={spec.units}")
        return (spec.units,)
    if kind == 'Conv2D':
        if len(incoming) != 3:
            raise ShapeMismatch(f"{where}: serve un ingresso (C, H, W), trovato {incoming}")
        if spec.channels < 1 or spec.kernel < 1 or spec.stride < 1 or spec.padding < 0:
            raise ShapeMismatch(f"{where}: iperparametri non validi {spec}")
        oh = K.conv_output_size(incoming[1], spec.kernel, spec.stride, spec.padding)
        ow = K.conv_output_size(incoming[2], spec.kernel, spec.stride, spec.padding)
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"{where}: kernel {spec.kernel} più grande dell'ingresso {incoming}")
        return (spec.channels, oh, ow)
    if kind == 'BatchNorm':
        if len(incoming) not in (1, 3):
            raise ShapeMismatch(f"{where}: ingresso {incoming} non supportato")
        if not 0.0 < spec.momentum <= 1.0 or spec.eps <= 0.0:
            raise ShapeMismatch(f"{where}: momentum={spec.momentum} eps={spec.eps}")
        return incoming
    if kind == 'ReLU':
        return incoming
    if kind == 'MaxPool':
        if len(incoming) != 3 or spec.pool < 1:
            raise ShapeMismatch(f"{where}: ingresso {incoming}, pool={spec.pool}")
        oh, ow = incoming[1] // spec.pool, incoming[2] // spec.pool
        if oh < 1 or ow < 1:
            raise ShapeMismatch(f"{where}: pool {spec.pool} più grande dell'ingresso {incoming}")
        return (incoming[0], oh, ow)
    if kind == 'ResidualAdd':
        if not 0 <= spec.skip_from <= index:
            raise ShapeMismatch(f"{where}: skip_from={spec.skip_from} fuori da [0, {index}]")
        if history[spec.skip_from] != incoming:
            raise ShapeMismatch(f"{where}: forme diverse {history[spec.skip_from]} e {incoming}")
        return incoming
    if kind == 'Flatten':
        return (int(np.prod(incoming)),)
    # Softmax
    if not is_last:
        raise ShapeMismatch(f"{where}: Softmax deve essere l'ultimo layer")
    if len(incoming) != 1:
        raise ShapeMismatch(f"{where}: serve un ingresso piatto, trovato {incoming}")
    return incoming


def build_model(specs: Sequence[LayerSpec], input_shape: Sequence[int]) -> Model:
    """Risolve tutte le forme prima di allocare qualsiasi tensore"""
    specs = list(specs)
    if not specs:
        raise EmptyModel("il modello non ha layer")
    if specs[-1].kind != 'Softmax':
        raise ShapeMismatch("l'ultimo layer deve essere Softmax")
    input_shape = tuple(int(s) for s in input_shape)
    if not input_shape or any(s < 1 for s in input_shape):
        raise ShapeMismatch(f"forma d'ingresso non valida: {input_shape}")

    history: List[Shape] = [input_shape]
    for i, spec in enumerate(specs):
        history.append(_resolve(spec, i, history[-1], history, i == len(specs) - 1))

    params: Dict[str, np.ndarray] = {}
    state: Dict[str, np.ndarray] = {}
    mask: Dict[str, bool] = {}
    for i, spec in enumerate(specs):
        incoming = history[i]
        if spec.kind == 'Dense':
            params[f"{i}.weight"] = np.zeros((incoming[0], spec.units))
            params[f"{i}.bias"] = np.zeros(spec.units)
        elif spec.kind == 'Conv2D':
            params[f"{i}.weight"] = np.zeros((spec.channels, incoming[0], spec.kernel, spec.kernel))
            params[f"{i}.bias"] = np.zeros(spec.channels)
        elif spec.kind == 'BatchNorm':
            params[f"{i}.gamma"] = np.ones(incoming[0])
            params[f"{i}.beta"] = np.zeros(incoming[0])
            state[f"{i}.running_mean"] = np.zeros(incoming[0])
            state[f"{i}.running_var"] = np.ones(incoming[0])
    for name in params:
        mask[name] = name.endswith('.weight')

    return Model(specs, input_shape, history[1:], params, state, mask)


def init_xavier_uniform(model: Model, seed: int) -> Model:
    """Pesi U(-b, b) con b = sqrt(6 / (fan_in + fan_out)), bias a zero"""
    out = model.copy()
    rng = stream(seed, 'xavier-init')
    for name, value in out.params.items():
        if name.endswith('.weight'):
            if value.ndim == 2:
                fan_in, fan_out = value.shape
            else:
                receptive = value.shape[2] * value.shape[3]
                fan_in, fan_out = value.shape[1] * receptive, value.shape[0] * receptive
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            out.params[name] = rng.uniform(-bound, bound, size=value.shape)
        elif name.endswith('.bias'):
            out.params[name] = np.zeros_like(value)
    return out


@dataclass
class Activations:
    """Tutto ciò che serve a backward: uscite dei layer e cache dei kernel"""
    outputs: List[np.ndarray]
    caches: List[object]
    logits: Optional[np.ndarray] = None

    @property
    def probs(self) -> np.ndarray:
        return self.outputs[-1]


_PASS_THROUGH = ('Flatten', 'MaxPool', 'ResidualAdd')


def _takes_relu_features(model: Model, index: int) -> bool:
    """Vero se l'ingresso del layer arriva da una ReLU (attraverso Flatten, MaxPool, ResidualAdd)"""
    j = index - 1
    while j >= 0 and model.layers[j].kind in _PASS_THROUGH:
        j -= 1
    return j >= 0 and model.layers[j].kind == 'ReLU'


def forward(model: Model, batch: np.ndarray, training: bool = False, dropout_rate: float = 0.0,
            rng: Optional[np.random.Generator] = None, update_stats: bool = True) -> Activations:
    """Passo in avanti; in training le BatchNorm usano le statistiche del batch"""
    x = np.asarray(batch, dtype=np.float64)
    if x.shape[1:] != model.input_shape or x.shape[0] < 1:
        raise ShapeMismatch(f"batch di forma {x.shape}, atteso (n,) + {model.input_shape}")
    use_dropout = training and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise InvalidParameter("dropout richiede un generatore")

    outputs = [x]
    caches: List[object] = []
    logits = None
    for i, spec in enumerate(model.layers):
        a = outputs[-1]
        cache = None
        if spec.kind == 'Dense':
            if use_dropout and _takes_relu_features(model, i):
                keep = (rng.random(a.shape) >= dropout_rate) / (1.0 - dropout_rate)
                a = a * keep
                cache = (a, keep)
            else:
                cache = (a, None)
            out = K.dense_forward(a, model.params[f"{i}.weight"], model.params[f"{i}.bias"])
        elif spec.kind == 'Conv2D':
            out = K.conv2d_forward(a, model.params[f"{i}.weight"], model.params[f"{i}.bias"],
                                   spec.stride, spec.padding)
        elif spec.kind == 'BatchNorm':
            out, cache = K.batchnorm_forward(
                a, model.params[f"{i}.gamma"], model.params[f"{i}.beta"],
                model.state[f"{i}.running_mean"], model.state[f"{i}.running_var"],
                training, spec.momentum, spec.eps, update_stats,
            )
        elif spec.kind == 'ReLU':
            out = K.relu_forward(a)
        elif spec.kind == 'MaxPool':
            out, cache = K.maxpool_forward(a, spec.pool)
        elif spec.kind == 'ResidualAdd':
            out = K.residual_add(a, outputs[spec.skip_from])
        elif spec.kind == 'Flatten':
            out = a.reshape(a.shape[0], -1)
        else:
            logits = a
            out = K.softmax(a)
        outputs.append(out)
        caches.append(cache)
    return Activations(outputs, caches, logits)


def backward(model: Model, acts: Activations, targets: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradiente della log-verosimiglianza media rispetto a ogni parametro (verso di salita)"""
    targets = np.asarray(targets, dtype=np.float64)
    probs = acts.probs
    if targets.shape != probs.shape:
        raise ShapeMismatch(f"target di forma {targets.shape}, attesa {probs.shape}")
    n = probs.shape[0]
    last = len(model.layers) - 1

    grads: Dict[str, np.ndarray] = {}
    upstream: List[Optional[np.ndarray]] = [None] * (last + 1)
    upstream[last] = (targets - probs) / n

    for i in range(last - 1, -1, -1):
        dout = upstream[i + 1]
        if dout is None:
            continue
        spec = model.layers[i]
        a = acts.outputs[i]
        cache = acts.caches[i]
        if spec.kind == 'Dense':
            x_in, keep = cache
            dx, grads[f"{i}.weight"], grads[f"{i}.bias"] = K.dense_backward(x_in, model.params[f"{i}.weight"], dout)
            if keep is not None:
                dx = dx * keep
        elif spec.kind == 'Conv2D':
            dx, grads[f"{i}.weight"], grads[f"{i}.bias"] = K.conv2d_backward(
                a, model.params[f"{i}.weight"], dout, spec.stride, spec.padding)
        elif spec.kind == 'BatchNorm':
            dx, grads[f"{i}.gamma"], grads[f"{i}.beta"] = K.batchnorm_backward(dout, model.params[f"{i}.gamma"], cache)
        elif spec.kind == 'ReLU':
            dx = K.relu_backward(a, dout)
        elif spec.kind == 'MaxPool':
            dx = K.maxpool_backward(a.shape, cache, dout, spec.pool)
        elif spec.kind == 'ResidualAdd':
            dx = dout
            j = spec.skip_from
            upstream[j] = dout.copy() if upstream[j] is None else upstream[j] + dout
        else:  # Flatten
            dx = dout.reshape(a.shape)
        upstream[i] = dx if upstream[i] is None else upstream[i] + dx

    for name, value in model.params.items():
        if name not in grads:
            grads[name] = np.zeros_like(value)
    return grads


def log_likelihood(model: Model, batch: np.ndarray, targets: np.ndarray, training: bool = False) -> float:
    """ln p(y|x, theta) medio sul batch, calcolato dai logit"""
    acts = forward(model, batch, training=training, update_stats=False)
    return float(np.mean(np.sum(targets * K.log_softmax(acts.logits), axis=1)))


# --- architetture ---

def mlp(input_shape: Sequence[int], num_classes: int, hidden: Sequence[int] = (64,)) -> Model:
    specs: List[LayerSpec] = []
    if len(input_shape) > 1:
        specs.append(flatten())
    for units in hidden:
        specs += [dense(units), relu()]
    specs += [dense(num_classes), softmax()]
    return build_model(specs, input_shape)


def micro_resnet(input_shape: Sequence[int] = (3, 32, 32), num_classes: int = 10, batch_norm: bool = True,
                 width: Tuple[int, int] = (16, 32), head_pool: int = 4) -> Model:
    """Modulo d'ingresso, modulo conv, modulo residuo, modulo d'uscita"""
    specs: List[LayerSpec] = []

    def conv_block(channels: int):
        specs.append(conv2d(channels))
        if batch_norm:
            specs.append(batchnorm())
        specs.append(relu())

    conv_block(width[0])
    conv_block(width[1])
    specs.append(max_pool(2))
    skip = len(specs)
    conv_block(width[1])
    conv_block(width[1])
    specs.append(residual_add(skip))
    specs += [max_pool(head_pool), flatten(), dense(num_classes), softmax()]
    model = build_model(specs, input_shape)
    model_logger.info(f"micro-ResNet: {len(specs)} layer, {model.num_weights} pesi sotto prior")
    return model


def layer_specs_to_dicts(model: Model) -> List[dict]:
    return [asdict(spec) for spec in model.layers]
