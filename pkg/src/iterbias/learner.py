"""Bayesian belief over hypotheses, updated from action-filtered observations.

Only ``(x, y-or-None, a)`` reaches the learner; the latent label stays with
the human. In ``ignore`` mode a non-response carries no information. In
``aware`` mode the learner explains non-responses with an assumed action
model, which need not match the real one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigError, NumericalDegeneracyError
from .human import ActionModel
from .policies import inverse_cdf
from .world import World


@dataclass(frozen=True)
class LearnerSpec:
    transmission: str = "sampler"
    missingness: str = "ignore"
    assumed_action: Optional[ActionModel] = None

    def __post_init__(self):
        if self.transmission not in ("sampler", "maximizer"):
            raise ConfigError("learner.transmission", f"must be sampler or maximizer, got {self.transmission!r}")
        if self.missingness not in ("ignore", "aware"):
            raise ConfigError("learner.missingness", f"must be ignore or aware, got {self.missingness!r}")
        if self.missingness == "aware" and self.assumed_action is None:
            raise ConfigError("learner.assumed_action", "aware learner requires an assumed action model")


@dataclass(frozen=True, eq=False)
class Belief:
    posterior: np.ndarray
    count: int = 0
    log_posterior: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.log_posterior is None:
            with np.errstate(divide="ignore"):
                object.__setattr__(self, "log_posterior", np.log(self.posterior))


def init_belief(world: World) -> Belief:
    return Belief(posterior=world.prior.copy())


def observation_log_factor(world: World, x: int, a: int, y: Optional[int],
                           spec: LearnerSpec) -> Optional[np.ndarray]:
    """Per-hypothesis log weight of one observation, or None if uninformative."""
    aware = spec.missingness == "aware"
    if a == 1:
        factor = world.log_label_table(y)[:, x]
        if aware:
            p_act = spec.assumed_action.act_probabilities()[y]
            with np.errstate(divide="ignore"):
                factor = factor + np.log(p_act)
        return factor
    if not aware:
        return None
    p_act = spec.assumed_action.act_probabilities()
    rel = world.relevance[:, x]
    p_noact = (1.0 - p_act[1]) * rel + (1.0 - p_act[0]) * (1.0 - rel)
    with np.errstate(divide="ignore"):
        return np.log(p_noact)


def posterior_update(belief: Belief, world: World, x: int, outcome, spec: LearnerSpec) -> Belief:
    """One Bayes step. ``outcome`` needs attributes ``a`` and ``y``."""
    factor = observation_log_factor(world, x, outcome.a, outcome.y, spec)
    if factor is None:
        return Belief(belief.posterior, belief.count + 1, belief.log_posterior)
    logp = belief.log_posterior + factor
    top = logp.max()
    if not np.isfinite(top):
        raise NumericalDegeneracyError(belief.count)
    logp = logp - top
    weights = np.exp(logp)
    total = weights.sum()
    return Belief(weights / total, belief.count + 1, logp - np.log(total))


def batch_update(belief: Belief, world: World, observations: Iterable, spec: LearnerSpec) -> Belief:
    """Fold ``posterior_update`` over ``(x, outcome)`` pairs."""
    for x, outcome in observations:
        belief = posterior_update(belief, world, x, outcome, spec)
    return belief


def transmit_from_uniform(belief: Belief, spec: LearnerSpec, u: float) -> int:
    if spec.transmission == "maximizer":
        return int(np.argmax(belief.posterior))
    return inverse_cdf(np.cumsum(belief.posterior), u)


def transmit(belief: Belief, spec: LearnerSpec, rng) -> int:
    """Next operating hypothesis: a posterior draw, or the MAP with lowest-index ties."""
    if spec.transmission == "maximizer":
        return int(np.argmax(belief.posterior))
    return transmit_from_uniform(belief, spec, rng.random())
