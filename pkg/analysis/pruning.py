"""Potatura per magnitudine, globale e non strutturata, senza riaddestramento."""
from typing import Dict, List, Sequence, Tuple

import numpy as np

from netcore.model import Model
from training.trainer import evaluate
from utils.exceptions import InvalidParameter
from utils.logger import logger

prune_logger = logger.getChild('pruning')


def prune_order(model: Model) -> np.ndarray:
    """Indici dei pesi sotto prior dal più piccolo in |w|; a parità vince l'ordine di scansione"""
    return np.argsort(np.abs(model.masked_weights()), kind='stable')


def _split_mask(model: Model, flat: np.ndarray) -> Dict[str, np.ndarray]:
    masks: Dict[str, np.ndarray] = {}
    offset = 0
    for name in model.masked_names():
        shape = model.params[name].shape
        size = model.params[name].size
        masks[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    return masks


def apply_mask(model: Model, masks: Dict[str, np.ndarray]) -> Model:
    pruned = model.copy()
    for name, keep in masks.items():
        pruned.params[name] = np.where(keep, pruned.params[name], 0.0)
    return pruned


def magnitude_prune(model: Model, fraction: float) -> Tuple[Model, Dict[str, np.ndarray]]:
    """Azzera la frazione `fraction` dei pesi più piccoli; ritorna (modello, maschere)"""
    if not 0.0 <= fraction < 1.0:
        raise InvalidParameter(f"fraction={fraction} deve stare in [0, 1)")
    order = prune_order(model)
    count = int(round(fraction * order.size))
    keep = np.ones(order.size, dtype=bool)
    keep[order[:count]] = False
    masks = _split_mask(model, keep)
    prune_logger.debug(f"potati {count}/{order.size} pesi (frazione {fraction})")
    return apply_mask(model, masks), masks


def prune_curve(model: Model, dataset, fractions: Sequence[float]) -> List[Tuple[float, float]]:
    """Accuratezza dopo la potatura per ogni frazione; le maschere sono annidate"""
    curve = []
    for fraction in sorted(fractions):
        pruned, _ = magnitude_prune(model, fraction)
        curve.append((float(fraction), evaluate(pruned, dataset).accuracy))
    return curve
