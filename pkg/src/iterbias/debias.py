"""Bias mitigation: reactive reweighting of selection, and post-hoc antidotes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .world import World

# slack on relevance comparisons so that e.g. 0.9 - 0.3 still admits 0.6
TOLERANCE_SLACK = 1e-12


@dataclass(frozen=True)
class EnsembleSpec:
    """Independent learners, each driven by its own selection policy."""

    members: tuple = ()
    aggregation: str = "posterior-average"

    def __post_init__(self):
        if len(self.members) < 2:
            raise ConfigError("policy.members", "an ensemble needs at least 2 members")
        if self.aggregation != "posterior-average":
            raise ConfigError("policy.aggregation", "only 'posterior-average' is supported")


def reactive_inverse_distribution(world: World, h: int, base) -> np.ndarray:
    """Reweight the base selection by the reciprocal of its own probability.

    Each item's weight is ``p_sel(x) * q(x) / p_sel(x)``; items the base never
    shows take the continuous extension ``q(x)``. The result is ``q``.
    """
    from .policies import selection_distribution

    p = selection_distribution(base, world, h)
    q = world.q
    w = np.where(p > 0, p * np.divide(q, p, out=np.zeros_like(q), where=p > 0), q)
    return w / w.sum()


def reactive_floor_distribution(world: World, h: int, base, gamma: float) -> np.ndarray:
    from .policies import mix_with_baseline, selection_distribution

    if not 0.0 < gamma <= 1.0:
        raise ConfigError("policy.gamma", f"must lie in (0, 1], got {gamma}")
    return mix_with_baseline(selection_distribution(base, world, h), world.q, gamma)


def tolerance_support(world: World, h: int, tau: float) -> np.ndarray:
    rel = world.relevance[h]
    return rel >= rel.max() - tau - TOLERANCE_SLACK


def antidote_tolerance_distribution(world: World, h: int, tau: float) -> np.ndarray:
    """Uniform over every item within ``tau`` of the top relevance."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigError("policy.tau", f"must lie in [0, 1], got {tau}")
    support = tolerance_support(world, h, tau)
    return support / support.sum()


def posterior_predictive(posterior: np.ndarray, world: World) -> np.ndarray:
    """``p(y=1 | x)`` for every item under a belief."""
    return posterior @ world.relevance


def antidote_ensemble_predict(beliefs: Sequence, world: World, x: int) -> tuple[int, float]:
    if len(beliefs) < 2:
        raise ConfigError("policy.members", "an ensemble needs at least 2 members")
    p = float(np.mean([posterior_predictive(b.posterior, world)[x] for b in beliefs]))
    return (1, p) if p >= 0.5 else (0, 1.0 - p)


def ensemble_labels(beliefs: Sequence, world: World) -> np.ndarray:
    """Ensemble label prediction for every item at once."""
    p = np.mean([posterior_predictive(b.posterior, world) for b in beliefs], axis=0)
    return (p >= 0.5).astype(int)
