"""Monte Carlo trajectories of the full interaction loop.

Each iteration: transmit an operating hypothesis from the current belief,
select an item with it, let the human label (or ignore) the item, update the
belief. Randomness comes from one Philox sub-stream per (replica, member,
role), so a replica's trajectory does not depend on how replicas are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalDegeneracyError
from .human import HumanSpec, InteractionOutcome
from .learner import Belief, LearnerSpec, init_belief, posterior_update, transmit_from_uniform
from .policies import PolicySpec, inverse_cdf, selection_table
from .world import World

ROLES = ("selection", "label", "action", "transmission")
NULL = -1
METRICS = ("post_target", "accuracy", "action_rate", "selection_entropy", "item_accuracy")


@dataclass(frozen=True)
class RunSpec:
    iterations: int = 1000
    replicas: int = 1
    seed: int = 0
    burn_in: Optional[int] = None
    log_level: str = "full"
    memoryless: bool = False
    label_source: str = "world"

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ConfigError("run.iterations", f"must be an integer >= 0, got {self.iterations!r}")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise ConfigError("run.replicas", f"must be an integer >= 1, got {self.replicas!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError("run.seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.burn_in is not None and (int(self.burn_in) != self.burn_in or self.burn_in < 0):
            raise ConfigError("run.burn_in", f"must be an integer >= 0, got {self.burn_in!r}")
        if self.log_level not in ("full", "metrics-only"):
            raise ConfigError("run.log_level", f"must be full or metrics-only, got {self.log_level!r}")
        if self.label_source not in ("chain", "world"):
            raise ConfigError("chain.label_source", f"must be chain or world, got {self.label_source!r}")

    @property
    def effective_burn_in(self) -> int:
        return self.iterations // 10 if self.burn_in is None else int(self.burn_in)


@dataclass(frozen=True)
class InteractionRecord:
    replica: int
    n: int
    h: int
    x: int
    a: int
    y: Optional[int]
    y_star: int
    post_target: float
    post_argmax: int

    def as_dict(self) -> dict:
        return {"replica": self.replica, "n": self.n, "h": self.h, "x": self.x, "a": self.a, "y": self.y,
                "y_star": self.y_star, "post_target": self.post_target, "post_argmax": self.post_argmax}


@dataclass
class Trajectory:
    """Column store of one replica's iterations. ``y`` uses -1 for no label."""

    replica: int
    h: np.ndarray
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    y_star: np.ndarray
    post_target: np.ndarray
    post_argmax: np.ndarray
    selection_entropy: np.ndarray
    item_accuracy: np.ndarray
    target: int
    final_belief: Optional[Belief] = None

    def __len__(self):
        return self.h.shape[0]

    def records(self) -> Iterable[InteractionRecord]:
        for n in range(len(self)):
            y = int(self.y[n])
            yield InteractionRecord(self.replica, n, int(self.h[n]), int(self.x[n]), int(self.a[n]),
                                    None if y == NULL else y, int(self.y_star[n]),
                                    float(self.post_target[n]), int(self.post_argmax[n]))

    def metric(self, name: str) -> np.ndarray:
        if name == "accuracy":
            return (self.post_argmax == self.target).astype(float)
        if name == "action_rate":
            return self.a.astype(float)
        return np.asarray(getattr(self, name), dtype=float)


@dataclass
class TrajectoryLog:
    trajectories: list
    metadata: dict = field(default_factory=dict)

    def records(self) -> Iterable[InteractionRecord]:
        for t in sorted(self.trajectories, key=lambda t: t.replica):
            yield from t.records()


def role_streams(seed: int, replica: int, member: int = 0) -> dict:
    return {
        role: np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(replica, member, k))))
        for k, role in enumerate(ROLES)
    }


def _entropy(dist):
    p = dist[dist > 0]
    return float(-(p * np.log(p)).sum())


class _Stepper:
    """Advances one learner/human loop, one iteration per ``step`` call."""

    def __init__(self, world, policy, human, learner, run, replica, member=0):
        if not 0 <= human.target < world.n_hypotheses:
            raise ConfigError("human.target", f"must index a hypothesis 0..{world.n_hypotheses - 1}")
        self.world, self.human, self.learner, self.run = world, human, learner, run
        N = run.iterations
        streams = role_streams(run.seed, replica, member)
        self.u = {role: streams[role].random(N) for role in ROLES}
        table = selection_table(policy, world)
        self.cdfs = np.cumsum(table, axis=1)
        self.entropy = np.array([_entropy(row) for row in table])
        self.p_act = human.action.act_probabilities()
        self.prior = init_belief(world)
        self.belief = self.prior
        self.target_labels = (world.relevance[human.target] >= 0.5).astype(int)
        self.cols = {name: np.empty(N, dtype=float if name in ("post_target", "selection_entropy", "item_accuracy")
                                    else np.int64)
                     for name in ("h", "x", "a", "y", "y_star", "post_target", "post_argmax",
                                  "selection_entropy", "item_accuracy")}
        self.replica = replica

    def step(self, n: int) -> Belief:
        world, u = self.world, self.u
        h = transmit_from_uniform(self.belief, self.learner, u["transmission"][n])
        x = inverse_cdf(self.cdfs[h], u["selection"][n])
        label_h = h if self.run.label_source == "chain" else self.human.target
        y_star = int(u["label"][n] < world.relevance[label_h, x])
        a = int(u["action"][n] < self.p_act[y_star])
        outcome = InteractionOutcome(a=a, y=y_star if a else None, y_star=y_star)
        if self.run.memoryless:
            self.belief = self.prior
        try:
            self.belief = posterior_update(self.belief, world, x, outcome, self.learner)
        except NumericalDegeneracyError as exc:
            raise NumericalDegeneracyError(n, f"replica {self.replica}: {exc}") from exc
        post = self.belief.posterior
        c = self.cols
        c["h"][n], c["x"][n], c["a"][n] = h, x, a
        c["y"][n] = y_star if a else NULL
        c["y_star"][n] = y_star
        c["post_target"][n] = post[self.human.target]
        c["post_argmax"][n] = post.argmax()
        c["selection_entropy"][n] = self.entropy[h]
        c["item_accuracy"][n] = np.count_nonzero(((post @ world.relevance) >= 0.5) == self.target_labels) / world.n_items
        return self.belief

    def trajectory(self) -> Trajectory:
        return Trajectory(replica=self.replica, target=self.human.target, final_belief=self.belief, **self.cols)


def run_trajectory(world: World, policy: PolicySpec, human: HumanSpec, learner: LearnerSpec,
                   run: RunSpec, replica: int = 0) -> Trajectory:
    stepper = _Stepper(world, policy, human, learner, run, replica)
    for n in range(run.iterations):
        stepper.step(n)
    return stepper.trajectory()


def _run_one(args):
    return run_trajectory(*args)


def run_replicas(world, policy, human, learner, run, jobs: int = 1) -> TrajectoryLog:
    tasks = [(world, policy, human, learner, run, r) for r in range(run.replicas)]
    if jobs > 1 and run.replicas > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trajectories = list(pool.map(_run_one, tasks))
    else:
        trajectories = [_run_one(t) for t in tasks]
    trajectories.sort(key=lambda t: t.replica)
    return TrajectoryLog(trajectories, {"seed": run.seed})


def aggregate(trajectories: Sequence[Trajectory], names: Sequence[str] = METRICS) -> dict:
    """Per-iteration mean and 95% normal-approximation interval across replicas."""
    out = {}
    R = len(trajectories)
    for name in names:
        m = np.array([t.metric(name) for t in trajectories])
        mean = m.mean(axis=0)
        if R > 1:
            half = 1.96 * m.std(axis=0, ddof=1) / np.sqrt(R)
        else:
            half = np.zeros_like(mean)
        out[name] = (mean, mean - half, mean + half)
    return out


def run_ensemble(world, policy, human, learner, run, jobs: int = 1):
    """Run every replica and aggregate; returns (log, aggregate)."""
    log = run_replicas(world, policy, human, learner, run, jobs)
    return log, aggregate(log.trajectories)


def empirical_hypothesis_distribution(trajectories: Sequence[Trajectory], burn_in: int,
                                      n_hypotheses: int) -> np.ndarray:
    counts = np.zeros(n_hypotheses)
    for t in trajectories:
        counts += np.bincount(t.h[burn_in:], minlength=n_hypotheses)
    total = counts.sum()
    if total == 0:
        raise ValueError(f"no iterations at or after burn-in {burn_in}")
    return counts / total


def transition_counts(trajectories: Sequence[Trajectory], n_hypotheses: int, burn_in: int = 0) -> np.ndarray:
    """``counts[i, j]`` of observed moves from ``h_n = j`` to ``h_{n+1} = i``."""
    counts = np.zeros((n_hypotheses, n_hypotheses))
    for t in trajectories:
        h = t.h[burn_in:]
        np.add.at(counts, (h[1:], h[:-1]), 1)
    return counts


def replay(world: World, learner: LearnerSpec, target: int, records: Iterable, memoryless: bool = False):
    """Re-run Bayes offline over logged ``(x, y, a)``; yields ``(post_target, post_argmax)``.

    ``records`` are InteractionRecords or event-log dicts of a single replica.
    """
    prior = init_belief(world)
    belief = prior
    for r in records:
        get = r.get if isinstance(r, dict) else lambda k, r=r: getattr(r, k)
        outcome = InteractionOutcome(a=get("a"), y=get("y"), y_star=get("y_star"))
        if memoryless:
            belief = prior
        belief = posterior_update(belief, world, get("x"), outcome, learner)
        yield float(belief.posterior[target]), int(np.argmax(belief.posterior))


def run_antidote_ensemble(world, ensemble, human, learner, run):
    """Lockstep member trajectories per replica plus the ensemble's per-item label accuracy.

    Returns ``(member_trajectories[member][replica], accuracy[replica, n])``.
    """
    from .debias import ensemble_labels

    target_labels = (world.relevance[human.target] >= 0.5).astype(int)
    members = [[] for _ in ensemble.members]
    acc = np.empty((run.replicas, run.iterations))
    for r in range(run.replicas):
        steppers = [_Stepper(world, p, human, learner, run, r, member=m) for m, p in enumerate(ensemble.members)]
        for n in range(run.iterations):
            beliefs = [s.step(n) for s in steppers]
            acc[r, n] = np.mean(ensemble_labels(beliefs, world) == target_labels)
        for m, s in enumerate(steppers):
            members[m].append(s.trajectory())
    return members, acc


def trajectories_from_records(records: Iterable[dict], target: int) -> list:
    """Rebuild per-replica trajectories from event-log dicts (latent metrics absent)."""
    by_replica: dict = {}
    for r in records:
        by_replica.setdefault(r["replica"], []).append(r)
    out = []
    for replica in sorted(by_replica):
        rs = sorted(by_replica[replica], key=lambda r: r["n"])
        if [r["n"] for r in rs] != list(range(len(rs))):
            raise ValueError(f"replica {replica}: iteration indices are not contiguous from 0")
        col = lambda k, dtype=np.int64: np.array([r[k] for r in rs], dtype=dtype)
        nan = np.full(len(rs), np.nan)
        out.append(Trajectory(replica=replica, h=col("h"), x=col("x"), a=col("a"),
                              y=np.array([NULL if r["y"] is None else r["y"] for r in rs], dtype=np.int64),
                              y_star=col("y_star"), post_target=col("post_target", float),
                              post_argmax=col("post_argmax"), selection_entropy=nan, item_accuracy=nan,
                              target=target))
    return out
