"""Finite worlds: items, binary labels, hypotheses, priors and relevance tables.

A world is the fixed universe every other module reads from. Hypotheses are
rows of a relevance table ``relevance[h, x] = p(y=1 | x, h)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError

FAMILIES = ("threshold", "interval", "explicit")
LABELS = (0, 1)
RELEVANT = 1


@dataclass(frozen=True)
class WorldSpec:
    family: str = "threshold"
    M: int | None = None
    noise: float = 0.0
    prior: str | Sequence[float] = "uniform"
    q: str | Sequence[float] = "uniform"
    relevance: Sequence[Sequence[float]] | None = None  # explicit family only


@dataclass(frozen=True, eq=False)
class World:
    q: np.ndarray
    relevance: np.ndarray
    prior: np.ndarray
    names: tuple[str, ...] = field(default=())
    noise: float = 0.0

    def __post_init__(self):
        rel = self.relevance
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "log_relevant", np.log(rel))
            object.__setattr__(self, "log_irrelevant", np.log1p(-rel))
        for arr in (self.q, self.relevance, self.prior, self.log_relevant, self.log_irrelevant):
            arr.flags.writeable = False

    @property
    def n_items(self) -> int:
        return self.q.shape[0]

    @property
    def n_hypotheses(self) -> int:
        return self.prior.shape[0]

    def label_table(self, y: int) -> np.ndarray:
        """``p(y | x, h)`` for every (h, x) as an |H| x M array."""
        return self.relevance if y == RELEVANT else 1.0 - self.relevance

    def log_label_table(self, y: int) -> np.ndarray:
        return self.log_relevant if y == RELEVANT else self.log_irrelevant


def _normalize(weights, n, name):
    if isinstance(weights, str):
        if weights != "uniform":
            raise ConfigError(name, f"expected 'uniform' or a weight list, got {weights!r}")
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ConfigError(name, f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ConfigError(name, "weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ConfigError(name, "weights sum to zero and cannot be normalized")
    return w / total


def threshold_table(M: int, noise: float) -> tuple[np.ndarray, tuple[str, ...]]:
    """Thresholds t = 0..M; item x is relevant under t iff x >= t."""
    t = np.arange(M + 1)[:, None]
    x = np.arange(M)[None, :]
    table = np.where(x >= t, 1.0 - noise, noise)
    return table, tuple(f"t={k}" for k in range(M + 1))


def interval_table(M: int, noise: float) -> tuple[np.ndarray, tuple[str, ...]]:
    """Closed intervals [a, b] with 0 <= a <= b < M, ordered by (a, b)."""
    bounds = [(a, b) for a in range(M) for b in range(a, M)]
    x = np.arange(M)
    table = np.array([np.where((x >= a) & (x <= b), 1.0 - noise, noise) for a, b in bounds])
    return table, tuple(f"[{a},{b}]" for a, b in bounds)


def build_world(spec: WorldSpec) -> World:
    if spec.family not in FAMILIES:
        raise ConfigError("world.family", f"must be one of {FAMILIES}, got {spec.family!r}")
    if not 0.0 <= spec.noise < 0.5:
        raise ConfigError("world.noise", f"must lie in [0, 0.5), got {spec.noise}")

    if spec.family == "explicit":
        if spec.relevance is None:
            raise ConfigError("world.relevance", "explicit family requires a relevance table")
        table = np.array(spec.relevance, dtype=float)
        if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
            raise ConfigError("world.relevance", "must be a non-empty |H| x M table")
        if not np.all((table >= 0) & (table <= 1)):
            raise ConfigError("world.relevance", "entries must lie in [0, 1]")
        if spec.M is not None and spec.M != table.shape[1]:
            raise ConfigError("world.M", f"M={spec.M} disagrees with table width {table.shape[1]}")
        names = tuple(f"h{k}" for k in range(table.shape[0]))
    else:
        if spec.relevance is not None:
            raise ConfigError("world.relevance", f"not allowed for the {spec.family} family")
        if spec.M is None or int(spec.M) != spec.M or spec.M < 1:
            raise ConfigError("world.M", f"must be an integer >= 1, got {spec.M!r}")
        make = threshold_table if spec.family == "threshold" else interval_table
        table, names = make(int(spec.M), float(spec.noise))

    n_h, M = table.shape
    q = _normalize(spec.q, M, "world.q")
    prior = _normalize(spec.prior, n_h, "world.prior")
    return World(q=q, relevance=table, prior=prior, names=names, noise=float(spec.noise))


def _check_item(world: World, x: int):
    if not 0 <= x < world.n_items:
        raise DomainError(f"item {x} outside domain 0..{world.n_items - 1}")


def likelihood(world: World, h: int, x: int, y: int) -> float:
    """``p(y | x, h)``."""
    _check_item(world, x)
    if y not in LABELS:
        raise DomainError(f"label must be 0 or 1, got {y!r}")
    p = float(world.relevance[h, x])
    return p if y == RELEVANT else 1.0 - p


def predicted_label(world: World, h: int, x: int) -> tuple[int, float]:
    """Most probable label under ``h`` and its probability; 0.5 ties go to label 1."""
    _check_item(world, x)
    p = float(world.relevance[h, x])
    return (1, p) if p >= 0.5 else (0, 1.0 - p)


def confidence_table(world: World) -> np.ndarray:
    """``max(p, 1-p)`` for every (h, x)."""
    return np.maximum(world.relevance, 1.0 - world.relevance)


def baseline_distribution(world: World) -> np.ndarray:
    return world.q.copy()
