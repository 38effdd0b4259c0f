"""Backpropagation bayesiana: salita stocastica sulla log-verosimiglianza più il
gradiente del log-prior letto in tabella, con momentum e dampening.

    g_t = grad ln p(y|x, theta_t) + c * T_V(T_K(theta_t))     (solo pesi sotto prior)
    t = 0:   theta_1 = theta_0 + lr_0 g_0,          beta_1 = g_0
    t >= 1:  beta_{t+1} = m beta_t + (1 - tau) g_t,  theta_{t+1} = theta_t + lr_t beta_{t+1}

Il termine di prior non è mediato sul batch.
"""
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from data.augment import AugmentFlags, augment
from data.dataset import LabeledDataset
from netcore.layers import log_softmax
from netcore.model import Model, backward, forward
from training.schedule import Knots, learning_rate, validate_schedule
from utils.exceptions import InvalidParameter, NonFiniteGradient, ShapeMismatch, TableDomainWarning
from utils.logger import logger
from utils.rng import stream

trainer_logger = logger.getChild('trainer')


@dataclass(frozen=True)
class TrainConfig:
    prior_scale_c: float = 0.0
    momentum_m: float = 0.9
    dampening_tau: float = 0.0
    epochs: int = 1
    batch_size: int = 32
    lr_schedule: Knots = ((0.0, 0.05), (1.0, 0.005))
    seed: int = 0
    dropout_rate: float = 0.0
    augment: AugmentFlags = AugmentFlags()
    saturation_warn_fraction: float = 0.01

    def __post_init__(self):
        if self.prior_scale_c < 0:
            raise InvalidParameter(f"prior_scale_c={self.prior_scale_c} deve essere >= 0")
        if not 0.0 < self.momentum_m <= 1.0:
            raise InvalidParameter(f"momentum_m={self.momentum_m} deve stare in (0, 1]")
        if not 0.0 <= self.dampening_tau < 1.0:
            raise InvalidParameter(f"dampening_tau={self.dampening_tau} deve stare in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidParameter(f"epochs={self.epochs} e batch_size={self.batch_size} devono essere >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidParameter(f"dropout_rate={self.dropout_rate} deve stare in [0, 1)")
        object.__setattr__(self, 'lr_schedule', validate_schedule(self.lr_schedule))


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    mean_log_likelihood: float


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_accuracy: float
    train_log_likelihood: float
    test_accuracy: float
    test_log_likelihood: float
    saturation: float


@dataclass
class TrainReport:
    epochs: List[EpochStats]
    model: Model = field(repr=False)
    wall_clock: float
    seed: int
    learning_rates: List[float] = field(default_factory=list, repr=False)

    @property
    def final(self) -> EpochStats:
        return self.epochs[-1]


class MomentumAscent:
    """SGD con momentum e dampening in verso di salita; il primo passo non usa il buffer"""

    def __init__(self, momentum_m: float, dampening_tau: float):
        self.momentum_m = momentum_m
        self.dampening_tau = dampening_tau
        self.buffers: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], lr: float) -> None:
        for name, g in grads.items():
            if self.t == 0:
                params[name] += lr * g
                self.buffers[name] = g.copy()
            else:
                buf = self.buffers[name]
                buf *= self.momentum_m
                buf += (1.0 - self.dampening_tau) * g
                params[name] += lr * buf
        self.t += 1


def add_prior_gradient(grads: Dict[str, np.ndarray], model: Model, prior) -> int:
    """Somma c * T_V(T_K(theta)) ai pesi sotto prior; ritorna quante chiavi saturano"""
    saturated = 0
    for name in model.masked_names():
        theta = model.params[name]
        grads[name] = grads[name] + prior.grad(theta)
        saturated += prior.saturated(theta)
    return saturated


def _check_finite(grads: Dict[str, np.ndarray], step: int) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise NonFiniteGradient(f"gradiente non finito allo step {step} in {name} ({bad} valori)", step, name)


def classification_scores(log_probs: np.ndarray, labels: np.ndarray) -> EvalResult:
    labels = np.asarray(labels)
    if log_probs.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"{log_probs.shape[0]} predizioni e {labels.shape[0]} etichette")
    predicted = np.argmax(log_probs, axis=1)
    picked = log_probs[np.arange(labels.shape[0]), labels]
    return EvalResult(float(np.mean(predicted == labels)), float(np.mean(picked)))


def evaluate(model: Model, dataset: LabeledDataset, batch_size: int = 256) -> EvalResult:
    """Accuratezza (argmax) e log-verosimiglianza media; BatchNorm in modalità eval, niente dropout"""
    log_probs = []
    for start in range(0, len(dataset), batch_size):
        acts = forward(model, dataset.images[start:start + batch_size], training=False)
        log_probs.append(log_softmax(acts.logits))
    return classification_scores(np.concatenate(log_probs), dataset.labels)


def train(model: Model, dataset: LabeledDataset, prior, config: TrainConfig,
          test_dataset: Optional[LabeledDataset] = None) -> TrainReport:
    """Addestra una copia di `model`; con prior None o c = 0 il ramo del prior non viene eseguito"""
    if len(dataset) < 1:
        raise InvalidParameter("dataset vuoto")
    if dataset.num_classes != model.num_classes:
        raise ShapeMismatch(f"{dataset.num_classes} classi nel dataset, {model.num_classes} nel modello")

    started = time.perf_counter()
    model = model.copy()
    use_prior = prior is not None and config.prior_scale_c > 0.0
    if use_prior:
        prior = prior.with_scale(config.prior_scale_c)
    optimizer = MomentumAscent(config.momentum_m, config.dampening_tau)

    n = len(dataset)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    targets = dataset.one_hot()
    learning_rates: List[float] = []
    history: List[EpochStats] = []
    step = 0

    trainer_logger.info(
        f"Training: {n} campioni, {config.epochs} epoche, {total_steps} step, "
        f"c={config.prior_scale_c}, seed={config.seed}"
    )
    for epoch in range(config.epochs):
        order = stream(config.seed, 'shuffle', epoch).permutation(n)
        dropout_rng = stream(config.seed, 'dropout', epoch)
        saturated = lookups = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = dataset.images[idx]
            if config.augment.active:
                batch = augment(batch, config.augment, config.seed, step)

            acts = forward(model, batch, training=True, dropout_rate=config.dropout_rate, rng=dropout_rng)
            grads = backward(model, acts, targets[idx])
            if use_prior:
                saturated += add_prior_gradient(grads, model, prior)
                lookups += model.num_weights
            _check_finite(grads, step)

            lr = learning_rate(config.lr_schedule, step, total_steps)
            optimizer.step(model.params, grads, lr)
            learning_rates.append(lr)
            step += 1

        saturation = saturated / lookups if lookups else 0.0
        if saturation > config.saturation_warn_fraction:
            message = (f"epoca {epoch}: {saturation:.2%} delle letture in tabella saturano ai bordi, "
                       f"epsilon troppo piccolo")
            trainer_logger.warning(f"⚠️ {message}")
            warnings.warn(message, TableDomainWarning)

        on_train = evaluate(model, dataset)
        on_test = evaluate(model, test_dataset) if test_dataset is not None else EvalResult(float('nan'), float('nan'))
        history.append(EpochStats(epoch, on_train.accuracy, on_train.mean_log_likelihood,
                                  on_test.accuracy, on_test.mean_log_likelihood, saturation))
        trainer_logger.info(
            f"Epoca {epoch + 1}/{config.epochs}: train acc={on_train.accuracy:.4f} "
            f"ll={on_train.mean_log_likelihood:.4f} test acc={on_test.accuracy:.4f}"
        )

    return TrainReport(history, model, time.perf_counter() - started, config.seed, learning_rates)
