"""Exact and simulated analysis of biased human-algorithm feedback loops."""

__version__ = "0.1.0"

from .chain import ChainSpec, build_transition, diagnostics, stationary
from .human import ActionModel, HumanSpec
from .learner import LearnerSpec, init_belief, posterior_update
from .policies import PolicySpec, selection_distribution
from .simulator import RunSpec, run_trajectory
from .world import WorldSpec, build_world

__all__ = [
    "ActionModel", "ChainSpec", "HumanSpec", "LearnerSpec", "PolicySpec", "RunSpec", "WorldSpec",
    "build_transition", "build_world", "diagnostics", "init_belief", "posterior_update", "run_trajectory",
    "selection_distribution", "stationary",
]
