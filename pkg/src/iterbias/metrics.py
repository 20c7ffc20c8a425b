"""Blind spots, filter bubbles and selection divergence."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .chain import hypothesis_marginals
from .human import HumanSpec, marginal_action_probability
from .policies import PolicySpec, kind_distribution, selection_distribution, selection_table
from .world import World

MIN_REPLICAS = 100


@dataclass(frozen=True)
class BlindSpotReport:
    side: str
    delta: float
    members: tuple
    prevalence: float
    n_items: int
    basis: Optional[str] = None
    probabilities: tuple = field(default=(), compare=False)

    def as_dict(self) -> dict:
        return {"side": self.side, "delta": self.delta, "basis": self.basis, "members": list(self.members),
                "prevalence": self.prevalence, "probabilities": list(self.probabilities)}


@dataclass(frozen=True)
class BubbleReport:
    horizon: int
    certainty: float
    members: tuple
    exposure: tuple

    def as_dict(self) -> dict:
        return {"horizon": self.horizon, "certainty": self.certainty, "members": list(self.members),
                "exposure": list(self.exposure)}


@dataclass(frozen=True)
class Divergence:
    kl: float
    tv: float
    support_violations: tuple = ()


def _check_delta(delta):
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")


def _report(side, p, delta, basis=None):
    members = tuple(int(i) for i in np.flatnonzero(p <= delta))
    M = p.shape[0]
    return BlindSpotReport(side, float(delta), members, len(members) / M, M, basis,
                           tuple(float(v) for v in p))


def seen_probabilities(world: World, h: int, policy: PolicySpec, basis: str = "full") -> np.ndarray:
    """``full``: what the policy actually shows. ``p_seen``: its rule before baseline mixing."""
    if basis == "full":
        return selection_distribution(policy, world, h)
    if basis == "p_seen":
        return kind_distribution(policy, world, h)
    raise ValueError(f"basis must be full or p_seen, got {basis!r}")


def human_blind_spot(world: World, h: int, policy: PolicySpec, delta: float, basis: str = "full") -> BlindSpotReport:
    _check_delta(delta)
    return _report("human", seen_probabilities(world, h, policy, basis), delta, basis)


def algorithm_blind_spot(world: World, human: HumanSpec, delta: float) -> BlindSpotReport:
    """Items the algorithm gets labelled with probability at most ``delta``, averaged over y*."""
    _check_delta(delta)
    return _report("algorithm", marginal_action_probability(human.action, world, human.target), delta)


def prevalence(report: BlindSpotReport) -> float:
    rho = len(report.members) / report.n_items
    if rho != report.prevalence:
        raise ValueError(f"stored prevalence {report.prevalence} disagrees with members ({rho})")
    return rho


def exposure_within(world: World, policy: PolicySpec, x: int, k: int, transition: Optional[np.ndarray] = None,
                    logs: Optional[Sequence] = None, initial: Optional[np.ndarray] = None) -> float:
    """Probability that item ``x`` is shown at least once in the first ``k`` iterations.

    Exact mode (``transition``) propagates the hypothesis distribution through
    the chain from ``initial`` (default: the prior) and treats steps as
    independent. Simulation mode (``logs``) counts replicas that showed ``x``.
    """
    return float(exposure_profile(world, policy, k, transition, logs, initial)[x])


def exposure_profile(world: World, policy: PolicySpec, k: int, transition: Optional[np.ndarray] = None,
                     logs: Optional[Sequence] = None, initial: Optional[np.ndarray] = None) -> np.ndarray:
    """``exposure_within`` for every item."""
    if k < 1:
        raise ValueError(f"horizon k must be >= 1, got {k}")
    if (transition is None) == (logs is None):
        raise ValueError("pass exactly one of transition (exact mode) or logs (simulation mode)")
    if logs is not None:
        if len(logs) < MIN_REPLICAS:
            warnings.warn(f"only {len(logs)} replicas; exposure estimate has a wide interval", stacklevel=2)
        seen = np.zeros(world.n_items)
        for t in logs:
            if len(t) < k:
                raise ValueError(f"replica {t.replica} has {len(t)} iterations, fewer than k={k}")
            seen[np.unique(t.x[:k])] += 1
        return seen / len(logs)
    start = world.prior if initial is None else np.asarray(initial, float)
    marginals = hypothesis_marginals(transition, start, k) @ selection_table(policy, world)  # k x M
    return 1.0 - np.prod(1.0 - marginals, axis=0)


def filter_bubble(world: World, policy: PolicySpec, k: int, delta: float, transition=None, logs=None,
                  initial=None) -> BubbleReport:
    _check_delta(delta)
    exposure = exposure_profile(world, policy, k, transition, logs, initial)
    members = tuple(int(i) for i in np.flatnonzero(exposure >= 1.0 - delta))
    return BubbleReport(k, 1.0 - delta, members, tuple(float(v) for v in exposure))


def divergence(p: np.ndarray, q: np.ndarray) -> Divergence:
    """KL(p || q) in nats and total variation."""
    tv = 0.5 * float(np.abs(p - q).sum())
    bad = tuple(int(i) for i in np.flatnonzero((p > 0) & (q <= 0)))
    if bad:
        return Divergence(math.inf, tv, bad)
    s = p > 0
    return Divergence(float(np.sum(p[s] * np.log(p[s] / q[s]))), tv)


def selection_divergence(world: World, policy: PolicySpec, h: int) -> Divergence:
    return divergence(selection_distribution(policy, world, h), world.q)
