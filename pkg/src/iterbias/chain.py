"""Exact Markov-chain analysis over the hypothesis space.

``T[i, j] = p(h_{n+1} = i | h_n = j)`` (column-stochastic). A step selects
``x`` from ``h_n``, draws a label from the label source, lets the human act or
not, and transmits a hypothesis from the single-observation posterior that
starts at the prior.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, ConvergenceError, NumericalDegeneracyError, SizeGuardError
from .human import ActionModel, HumanSpec
from .learner import Belief, LearnerSpec, init_belief, posterior_update
from .policies import PolicySpec, selection_table
from .world import World

SIZE_GUARD = 10**7
GAP_FLOOR = 1e-12


class ReducibleChainWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ChainSpec:
    policy: PolicySpec = PolicySpec()
    learner: LearnerSpec = LearnerSpec()
    label_source: str = "chain"
    human: Optional[HumanSpec] = None

    def __post_init__(self):
        if self.label_source not in ("chain", "world"):
            raise ConfigError("chain.label_source", f"must be chain or world, got {self.label_source!r}")
        if self.label_source == "world" and self.human is None:
            raise ConfigError("human.target", "label_source=world needs a human target")

    @property
    def action(self) -> ActionModel:
        return self.human.action if self.human is not None else ActionModel()


@dataclass
class StationaryResult:
    pi: np.ndarray
    method: str
    residual: float
    iterations: int
    spectral_gap: Optional[float] = None
    reducible: bool = False
    closed_classes: list = field(default_factory=list)


@dataclass(frozen=True)
class _Outcome:
    a: int
    y: Optional[int]


_OUTCOMES = (_Outcome(1, 0), _Outcome(1, 1), _Outcome(0, None))


def _check_size(world: World):
    size = world.n_items * world.n_hypotheses**2
    if size > SIZE_GUARD:
        raise SizeGuardError(
            f"|X|*|H|^2 = {size} exceeds {SIZE_GUARD}; use the simulator (simulate) instead"
        )


def outcome_posteriors(world: World, learner: LearnerSpec) -> np.ndarray:
    """Transmission distribution for each (x, outcome) from the prior, shape M x 3 x |H|.

    Outcomes are ordered (a=1,y=0), (a=1,y=1), (a=0). Entries whose posterior
    is undefined are left as NaN and must only meet zero outcome probability.
    """
    prior = init_belief(world)
    out = np.full((world.n_items, 3, world.n_hypotheses), np.nan)
    for x in range(world.n_items):
        for k, o in enumerate(_OUTCOMES):
            try:
                post = posterior_update(prior, world, x, o, learner).posterior
            except NumericalDegeneracyError:
                continue
            if learner.transmission == "maximizer":
                post = np.eye(world.n_hypotheses)[int(np.argmax(post))]
            out[x, k] = post
    return out


def outcome_probabilities(world: World, action: ActionModel, label_h: np.ndarray) -> np.ndarray:
    """p(outcome | x, source) for each source hypothesis, shape len(label_h) x M x 3."""
    p_act = action.act_probabilities()
    rel = world.relevance[label_h]
    out = np.empty(rel.shape + (3,))
    out[..., 0] = (1.0 - rel) * p_act[0]
    out[..., 1] = rel * p_act[1]
    out[..., 2] = (1.0 - rel) * (1.0 - p_act[0]) + rel * (1.0 - p_act[1])
    return out


def build_transition(world: World, spec: ChainSpec, selection: Optional[np.ndarray] = None) -> np.ndarray:
    """Column-stochastic transition matrix. ``selection`` overrides the policy's |H| x M table."""
    _check_size(world)
    n_h = world.n_hypotheses
    if selection is None:
        selection = selection_table(spec.policy, world)
    post = outcome_posteriors(world, spec.learner)
    if spec.label_source == "chain":
        probs = outcome_probabilities(world, spec.action, np.arange(n_h))
    else:
        probs = np.broadcast_to(
            outcome_probabilities(world, spec.action, np.array([spec.human.target])), (n_h, world.n_items, 3)
        )
    T = np.empty((n_h, n_h))
    for j in range(n_h):
        w = selection[j][:, None] * probs[j]  # M x 3
        live = w > 0
        if np.isnan(post[live]).any():
            raise NumericalDegeneracyError(j, "reachable outcome has no defined posterior from column")
        T[:, j] = np.einsum("xo,xoi->i", np.where(live, w, 0.0), np.nan_to_num(post))
    return T


def bias_operator(world: World, spec: ChainSpec) -> np.ndarray:
    """The pure-policy operator (no baseline mixing)."""
    return build_transition(world, replace(spec, policy=replace(spec.policy, epsilon=0.0)))


def baseline_operator(world: World, spec: ChainSpec) -> np.ndarray:
    """The operator under unbiased selection from ``q``."""
    return build_transition(world, replace(spec, policy=PolicySpec(kind="random")))


def closed_classes(T: np.ndarray) -> tuple[bool, list]:
    """(reducible?, closed communicating classes as sorted id lists)."""
    adj = (T > 0).T  # edge j -> i
    n, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n):
        members = np.flatnonzero(labels == c)
        outside = labels != c
        if not adj[np.ix_(members, outside)].any():
            closed.append(members.tolist())
    return n > 1, sorted(closed)


def _l1_residual(T, pi):
    return float(np.abs(T @ pi - pi).sum())


def stationary(T: np.ndarray, method: str = "eigen", tol: float = 1e-12, max_iter: int = 10**6,
               initial: Optional[np.ndarray] = None) -> StationaryResult:
    """Stationary distribution by power iteration or a direct unit-eigenvector solve."""
    n = T.shape[0]
    reducible, classes = closed_classes(T)
    if reducible:
        warnings.warn(f"reducible chain; closed classes {classes}", ReducibleChainWarning, stacklevel=2)
    if method == "power":
        pi = np.full(n, 1.0 / n) if initial is None else np.asarray(initial, float)
        iterations = 0
        residual = _l1_residual(T, pi)
        while residual > tol:
            if iterations >= max_iter:
                raise ConvergenceError("power iteration did not converge", residual, iterations)
            pi = T @ pi
            pi /= pi.sum()
            iterations += 1
            residual = _l1_residual(T, pi)
    elif method == "eigen":
        # (T - I) pi = 0 together with sum(pi) = 1; least squares picks the
        # minimum-norm stationary vector when the unit eigenspace is degenerate
        A = np.vstack([T - np.eye(n), np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
        iterations = 0
        residual = _l1_residual(T, pi)
    else:
        raise ConfigError("chain.method", f"must be eigen or power, got {method!r}")
    return StationaryResult(pi=pi, method=method, residual=residual, iterations=iterations,
                            spectral_gap=spectral_gap(T, pi), reducible=reducible, closed_classes=classes)


def spectral_gap(T: np.ndarray, pi: np.ndarray, max_iter: int = 20000, rtol: float = 1e-10) -> float:
    """``1 - |lambda_2|`` by power iteration on the deflated operator ``T - pi 1^T``.

    The growth rate is averaged over the second half of the run so complex
    second eigenvalues, which make single-step ratios oscillate, still settle.
    """
    n = T.shape[0]
    if n == 1:
        return 1.0
    B = T - np.outer(pi, np.ones(n))
    v = np.random.default_rng(0).standard_normal(n)
    v -= v.mean()
    logs = []
    prev = None
    for k in range(max_iter):
        v = B @ v
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return 1.0
        v /= norm
        logs.append(math.log(norm))
        if k >= 64 and k % 32 == 0:
            est = math.exp(np.mean(logs[len(logs) // 2:]))
            if prev is not None and abs(est - prev) <= rtol * max(est, 1e-300):
                break
            prev = est
    lam2 = min(math.exp(np.mean(logs[len(logs) // 2:])), 1.0)
    return 1.0 - lam2


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def diagnostics(T: np.ndarray, prior: np.ndarray, result: Optional[StationaryResult] = None) -> dict:
    if result is None:
        result = stationary(T)
    gap = result.spectral_gap if result.spectral_gap is not None else spectral_gap(T, result.pi)
    reliable = gap >= GAP_FLOOR
    return {
        "method": result.method,
        "residual": result.residual,
        "iterations": result.iterations,
        "spectral_gap": gap if reliable else None,
        "gap_note": None if reliable else "no reliable estimate",
        "mixing_time": math.ceil(math.log(1 / 0.01) / gap) if reliable else None,
        "tv_pi_prior": total_variation(result.pi, prior),
        "reducible": result.reducible,
        "closed_classes": result.closed_classes,
    }


def mixture_fixed_point_residual(world: World, spec: ChainSpec, epsilon: float) -> float:
    """Residual of the mixture chain's stationary point under ``eps*T_q + (1-eps)*T_bias``.

    The stationary vector comes from the directly built mixture chain; the
    operator it is checked against is assembled from the two component chains.
    """
    T_mix = build_transition(world, replace(spec, policy=replace(spec.policy, epsilon=epsilon)))
    pi = stationary(T_mix, "eigen").pi
    combined = epsilon * baseline_operator(world, spec) + (1.0 - epsilon) * bias_operator(world, spec)
    return float(np.abs(pi - combined @ pi).sum())


def hypothesis_marginals(T: np.ndarray, start: np.ndarray, steps: int) -> np.ndarray:
    """Distributions of ``h_0 .. h_{steps-1}`` starting from ``start``."""
    out = np.empty((steps, T.shape[0]))
    mu = np.asarray(start, float)
    for n in range(steps):
        out[n] = mu
        mu = T @ mu
    return out
