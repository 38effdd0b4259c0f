"""Scheduler lineare a tratti del learning rate."""
from typing import Sequence, Tuple

import numpy as np

from utils.exceptions import InvalidParameter

Knots = Tuple[Tuple[float, float], ...]


def validate_schedule(knots: Sequence[Sequence[float]]) -> Knots:
    """Nodi (frazione di step, lr): frazioni strettamente crescenti da 0 a 1, lr > 0"""
    knots = tuple((float(f), float(lr)) for f, lr in knots)
    if len(knots) < 2:
        raise InvalidParameter("lr_schedule richiede almeno due nodi")
    fractions = [f for f, _ in knots]
    if fractions[0] != 0.0 or fractions[-1] != 1.0:
        raise InvalidParameter(f"lr_schedule deve partire da 0 e finire a 1, trovato {fractions}")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise InvalidParameter(f"frazioni non strettamente crescenti: {fractions}")
    if any(lr <= 0.0 for _, lr in knots):
        raise InvalidParameter("tutti i learning rate devono essere > 0")
    return knots


def step_fraction(step: int, total_steps: int) -> float:
    """Il primo step vale 0, l'ultimo 1"""
    return step / (total_steps - 1) if total_steps > 1 else 0.0


def learning_rate(knots: Knots, step: int, total_steps: int) -> float:
    fractions = [f for f, _ in knots]
    rates = [lr for _, lr in knots]
    return float(np.interp(step_fraction(step, total_steps), fractions, rates))
