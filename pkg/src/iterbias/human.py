"""The human in the loop: true labels from a target hypothesis, and whether to act."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError
from .world import World, likelihood

ACTION_KINDS = ("always", "mar", "luce")


@dataclass(frozen=True)
class ActionModel:
    """How likely a person is to respond, given the latent label ``y*``.

    ``luce`` takes utilities indexed by y*: ``u_act[y]`` and ``u_noact[y]``.
    """

    kind: str = "always"
    rho: Optional[float] = None
    u_act: Optional[tuple] = None
    u_noact: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ConfigError("human.action.kind", f"must be one of {ACTION_KINDS}, got {self.kind!r}")
        if self.kind == "mar":
            if self.rho is None or not 0.0 <= self.rho <= 1.0:
                raise ConfigError("human.action.rho", f"must lie in [0, 1], got {self.rho}")
        elif self.rho is not None:
            raise ConfigError("human.action.rho", "only the mar model takes rho")
        if self.kind == "luce":
            for name in ("u_act", "u_noact"):
                u = getattr(self, name)
                if u is None or len(u) != 2:
                    raise ConfigError(f"human.action.{name}", "needs two utilities, one per y*")
                if any(not np.isfinite(v) or v < 0 for v in u):
                    raise ConfigError(f"human.action.{name}", "utilities must be finite and >= 0")
                object.__setattr__(self, name, tuple(float(v) for v in u))
            for y in (0, 1):
                if self.u_act[y] + self.u_noact[y] <= 0:
                    raise ConfigError("human.action", f"utilities for y*={y} sum to zero")
        elif self.u_act is not None or self.u_noact is not None:
            raise ConfigError("human.action", "utilities are only valid for the luce model")

    def act_probabilities(self) -> np.ndarray:
        """``p(a=1 | y*)`` for y* = 0, 1."""
        return np.array([action_probability(self, None, y) for y in (0, 1)])


@dataclass(frozen=True)
class HumanSpec:
    target: int
    action: ActionModel = ActionModel()


@dataclass(frozen=True)
class InteractionOutcome:
    a: int
    y: Optional[int]
    y_star: int

    def __post_init__(self):
        if (self.a == 0) != (self.y is None):
            raise DomainError("an outcome carries a label exactly when the human acted")


def action_probability(model: ActionModel, x, y_star: int) -> float:
    """``p(a=1 | y*, x)``. Utilities depend on y* only, so ``x`` is unused."""
    if y_star not in (0, 1):
        raise DomainError(f"y* must be 0 or 1, got {y_star!r}")
    if model.kind == "always":
        return 1.0
    if model.kind == "mar":
        return float(model.rho)
    act, noact = model.u_act[y_star], model.u_noact[y_star]
    return act / (act + noact)


def marginal_action_probability(model: ActionModel, world: World, h: int) -> np.ndarray:
    """``sum_y* p(a=1 | y*, x) p(y* | x, h)`` for every item."""
    p_act = model.act_probabilities()
    rel = world.relevance[h]
    return p_act[1] * rel + p_act[0] * (1.0 - rel)


def label_from_uniform(world: World, h: int, x: int, u: float) -> int:
    return int(u < world.relevance[h, x])


def true_label_sample(human: HumanSpec, world: World, x: int, rng) -> int:
    likelihood(world, human.target, x, 1)  # domain check
    return label_from_uniform(world, human.target, x, rng.random())


def respond(human: HumanSpec, world: World, x: int, rng, action_rng=None,
            label_hypothesis: Optional[int] = None) -> InteractionOutcome:
    """Draw y*, then decide whether to act.

    ``label_hypothesis`` overrides the target as the label source (the chain
    form where labels come from the operating hypothesis).
    """
    h = human.target if label_hypothesis is None else label_hypothesis
    likelihood(world, h, x, 1)
    y_star = label_from_uniform(world, h, x, rng.random())
    u = (action_rng or rng).random()
    a = int(u < action_probability(human.action, x, y_star))
    return InteractionOutcome(a=a, y=y_star if a else None, y_star=y_star)
