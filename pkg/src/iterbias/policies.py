"""Selection rules: which item the algorithm shows next, given its hypothesis.

Every distribution is a length-M float array over the fixed item order.
Argmax selections break ties toward the lowest item index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneratePolicyError
from .world import World, confidence_table

BASE_KINDS = ("random", "filter", "top1_filter", "active", "top1_active", "antidote_tolerance")
WRAPPER_KINDS = ("mixture", "reactive_inverse", "reactive_floor")
KINDS = BASE_KINDS + WRAPPER_KINDS


@dataclass(frozen=True)
class PolicySpec:
    """A selection rule.

    ``epsilon`` mixes any kind with the baseline ``q``:
    ``p(x|h) = (1 - epsilon) * p_kind(x|h) + epsilon * q(x)``.
    Wrapper kinds (mixture, reactive_inverse, reactive_floor) apply to ``base``.
    """

    kind: str = "random"
    epsilon: float = 0.0
    tau: float = 0.0
    gamma: float | None = None
    base: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("policy.kind", f"must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("policy.epsilon", f"must lie in [0, 1], got {self.epsilon}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("policy.tau", f"must lie in [0, 1], got {self.tau}")
        if self.kind in WRAPPER_KINDS:
            if self.base is None:
                raise ConfigError("policy.base", f"{self.kind} requires a base kind")
            if self.base not in BASE_KINDS:
                raise ConfigError("policy.base", f"must be one of {BASE_KINDS}, got {self.base!r}")
        elif self.base is not None:
            raise ConfigError("policy.base", f"only wrapper kinds {WRAPPER_KINDS} take a base")
        if self.kind == "reactive_floor":
            if self.gamma is None or not 0.0 < self.gamma <= 1.0:
                raise ConfigError("policy.gamma", f"must lie in (0, 1], got {self.gamma}")
        elif self.gamma is not None:
            raise ConfigError("policy.gamma", "only reactive_floor takes gamma")

    def base_policy(self) -> "PolicySpec":
        """The wrapped base rule with no baseline mixing."""
        return PolicySpec(kind=self.base, tau=self.tau)

    def without_mixing(self) -> "PolicySpec":
        return PolicySpec(kind=self.kind, tau=self.tau, gamma=self.gamma, base=self.base)


def point_mass(M: int, x: int) -> np.ndarray:
    d = np.zeros(M)
    d[x] = 1.0
    return d


def filter_distribution(world: World, h: int) -> np.ndarray:
    """Items shown in proportion to their probability of relevance under ``h``."""
    rel = world.relevance[h]
    total = rel.sum()
    if total <= 0:
        raise DegeneratePolicyError(f"hypothesis {h} assigns zero relevance to every item")
    return rel / total


def top1_selection(world: World, h: int) -> int:
    return int(np.argmax(world.relevance[h]))


def uncertainty_weights(world: World, h: int) -> np.ndarray:
    """``1 - p(y_hat | x, h)`` per item."""
    return 1.0 - confidence_table(world)[h]


def active_distribution(world: World, h: int) -> np.ndarray:
    """Uncertainty sampling; uniform when every prediction is certain."""
    w = uncertainty_weights(world, h)
    total = w.sum()
    if total <= 0:
        return np.full(world.n_items, 1.0 / world.n_items)
    return w / total


def top1_active_selection(world: World, h: int) -> int:
    return int(np.argmax(uncertainty_weights(world, h)))


def mix_with_baseline(base: np.ndarray, q: np.ndarray, epsilon: float) -> np.ndarray:
    return (1.0 - epsilon) * base + epsilon * q


def kind_distribution(policy: PolicySpec, world: World, h: int) -> np.ndarray:
    """Distribution of ``policy.kind`` alone, before baseline mixing."""
    kind = policy.kind
    if kind == "random":
        return world.q.copy()
    if kind == "filter":
        return filter_distribution(world, h)
    if kind == "top1_filter":
        return point_mass(world.n_items, top1_selection(world, h))
    if kind == "active":
        return active_distribution(world, h)
    if kind == "top1_active":
        return point_mass(world.n_items, top1_active_selection(world, h))
    if kind == "mixture":
        return kind_distribution(policy.base_policy(), world, h)

    from . import debias

    if kind == "antidote_tolerance":
        return debias.antidote_tolerance_distribution(world, h, policy.tau)
    if kind == "reactive_inverse":
        return debias.reactive_inverse_distribution(world, h, policy.base_policy())
    if kind == "reactive_floor":
        return debias.reactive_floor_distribution(world, h, policy.base_policy(), policy.gamma)
    raise ConfigError("policy.kind", f"unknown kind {kind!r}")


def mixture_distribution(policy: PolicySpec, world: World, h: int) -> np.ndarray:
    return mix_with_baseline(kind_distribution(policy, world, h), world.q, policy.epsilon)


def selection_distribution(policy: PolicySpec, world: World, h: int) -> np.ndarray:
    return mixture_distribution(policy, world, h)


def selection_table(policy: PolicySpec, world: World) -> np.ndarray:
    """Selection distributions for every hypothesis, shape |H| x M."""
    return np.array([selection_distribution(policy, world, h) for h in range(world.n_hypotheses)])


def inverse_cdf(cdf: np.ndarray, u: float) -> int:
    """Index of the first cumulative value exceeding ``u``."""
    i = int(cdf.searchsorted(u, side="right"))
    if i >= cdf.shape[0]:
        # u landed above a total that rounded below 1; take the last item with mass
        i = int(np.flatnonzero(np.diff(cdf, prepend=0.0) > 0)[-1])
    return i


def sample_item(dist: np.ndarray, rng) -> int:
    return inverse_cdf(np.cumsum(dist), rng.random())
