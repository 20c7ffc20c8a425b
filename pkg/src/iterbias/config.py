"""Experiment configuration: strict YAML (or JSON) parsing into typed specs.

Sections mirror the modules: ``world``, ``policy``, ``human``, ``learner``,
``run``, ``chain``, ``metrics``, ``sweep``, ``output``. Unknown keys anywhere
are rejected.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .chain import SIZE_GUARD, ChainSpec
from .debias import EnsembleSpec
from .errors import ConfigError, ConfigSyntaxError, CrossFieldError, SizeGuardError, UnknownKeyError
from .human import ActionModel, HumanSpec
from .learner import LearnerSpec
from .policies import PolicySpec
from .simulator import RunSpec
from .world import World, WorldSpec, build_world

ACTION_KEYS = {"kind", "rho", "u_act", "u_noact"}
POLICY_KEYS = {"kind", "epsilon", "tau", "gamma", "base"}
SCHEMA = {
    "world": {"family", "M", "noise", "prior", "q", "relevance"},
    "policy": POLICY_KEYS | {"members", "aggregation"},
    "human": {"target", "action"},
    "learner": {"transmission", "missingness", "assumed_action"},
    "run": {"iterations", "replicas", "seed", "burn_in", "log_level"},
    "chain": {"label_source", "memoryless", "method"},
    "metrics": {"delta_human", "delta_algorithm", "basis", "horizon", "bubble_delta", "mode"},
    "sweep": {"grid", "command"},
    "output": {"dir"},
}
REQUIRED = ("world", "human")


@dataclass(frozen=True)
class ChainOptions:
    label_source: Optional[str] = None  # None: chain for analyze, world for simulate
    memoryless: bool = False
    method: str = "eigen"


@dataclass(frozen=True)
class MetricsOptions:
    delta_human: float = 0.0
    delta_algorithm: float = 0.0
    basis: str = "full"
    horizon: int = 10
    bubble_delta: float = 0.05
    mode: str = "exact"


@dataclass
class ExperimentSpec:
    world: WorldSpec
    policy: Union[PolicySpec, EnsembleSpec]
    human: HumanSpec
    learner: LearnerSpec
    run: RunSpec
    chain: ChainOptions
    metrics: MetricsOptions
    sweep: dict
    output_dir: str
    raw: dict = field(repr=False)
    built: Optional[World] = field(default=None, repr=False)

    @property
    def world_obj(self) -> World:
        if self.built is None:
            self.built = build_world(self.world)
        return self.built

    def chain_spec(self) -> ChainSpec:
        if isinstance(self.policy, EnsembleSpec):
            raise CrossFieldError("policy.kind", "exact analysis is not defined for antidote_ensemble")
        return ChainSpec(policy=self.policy, learner=self.learner,
                         label_source=self.chain.label_source or "chain", human=self.human)

    def run_spec(self) -> RunSpec:
        from dataclasses import replace
        return replace(self.run, label_source=self.chain.label_source or "world", memoryless=self.chain.memoryless)

    def digest(self) -> str:
        return config_digest(self.raw)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def _check_keys(path: str, mapping: Any, allowed: set) -> dict:
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ConfigSyntaxError(path, "expected a mapping")
    for key in mapping:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise UnknownKeyError(where, f"unknown key (allowed: {sorted(allowed)})")
    return mapping


def _number(path, value, lo=None, hi=None, integer=False, open_hi=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(path, f"must be >= {lo}, got {value}")
    if hi is not None and (value >= hi if open_hi else value > hi):
        raise ConfigError(path, f"must be {'<' if open_hi else '<='} {hi}, got {value}")
    return int(value) if integer else float(value)


def _choice(path, value, options):
    if value not in options:
        raise ConfigError(path, f"must be one of {options}, got {value!r}")
    return value


def _weights(path, value):
    if value == "uniform":
        return value
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected 'uniform' or a non-empty list of weights")
    return [_number(f"{path}[{i}]", v, lo=0) for i, v in enumerate(value)]


def _action(path, d) -> ActionModel:
    d = _check_keys(path, d, ACTION_KEYS)
    kind = _choice(f"{path}.kind", d.get("kind", "always"), ("always", "mar", "luce"))
    kw = {"kind": kind}
    if "rho" in d:
        kw["rho"] = _number(f"{path}.rho", d["rho"], 0, 1)
    for name in ("u_act", "u_noact"):
        if name in d:
            u = d[name]
            if not isinstance(u, list) or len(u) != 2:
                raise ConfigError(f"{path}.{name}", "expected two utilities [y*=0, y*=1]")
            kw[name] = tuple(_number(f"{path}.{name}[{i}]", v, lo=0) for i, v in enumerate(u))
    try:
        return ActionModel(**kw)
    except ConfigError as exc:
        raise ConfigError(exc.field.replace("human.action", path), str(exc).split(": ", 1)[1]) from None


def _policy(path, d) -> PolicySpec:
    d = _check_keys(path, d, POLICY_KEYS)
    kw = {"kind": d.get("kind", "random")}
    for key in ("epsilon", "tau", "gamma"):
        if key in d and d[key] is not None:
            kw[key] = _number(f"{path}.{key}", d[key], 0, 1)
    if "base" in d:
        kw["base"] = d["base"]
    try:
        return PolicySpec(**kw)
    except ConfigError as exc:
        raise ConfigError(exc.field.replace("policy", path, 1), str(exc).split(": ", 1)[1]) from None


def load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigSyntaxError("config", f"cannot read {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigSyntaxError("config", f"syntax error in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigSyntaxError("config", "top level must be a mapping of sections")
    # a run manifest carries the canonical config that produced it
    if "config_digest" in raw and "config" in raw:
        raw = raw["config"]
    return raw


def parse_config(path) -> ExperimentSpec:
    return parse_config_dict(load_raw(path))


def parse_config_dict(raw: dict) -> ExperimentSpec:
    raw = copy.deepcopy(raw)
    _check_keys("", raw, set(SCHEMA))
    for name in REQUIRED:
        if name not in raw:
            raise ConfigError(name, "required section is missing")
    sec = {name: _check_keys(name, raw.get(name), keys) for name, keys in SCHEMA.items()}

    w = sec["world"]
    family = _choice("world.family", w.get("family", "threshold"), ("threshold", "interval", "explicit"))
    relevance = w.get("relevance")
    if relevance is not None:
        if not isinstance(relevance, list) or not all(isinstance(r, list) for r in relevance):
            raise ConfigError("world.relevance", "expected a list of per-hypothesis lists")
        relevance = [[_number(f"world.relevance[{i}][{j}]", v, 0, 1) for j, v in enumerate(row)]
                     for i, row in enumerate(relevance)]
    M = w.get("M")
    if M is not None:
        M = _number("world.M", M, lo=1, integer=True)
    world = WorldSpec(family=family, M=M, noise=_number("world.noise", w.get("noise", 0.0), 0, 0.5, open_hi=True),
                      prior=_weights("world.prior", w.get("prior", "uniform")),
                      q=_weights("world.q", w.get("q", "uniform")), relevance=relevance)
    built = build_world(world)

    p = sec["policy"]
    if p.get("kind") == "antidote_ensemble":
        members = p.get("members")
        if not isinstance(members, list):
            raise ConfigError("policy.members", "antidote_ensemble needs a list of member policies")
        extra = set(p) - {"kind", "members", "aggregation"}
        if extra:
            raise UnknownKeyError(f"policy.{sorted(extra)[0]}", "not valid for antidote_ensemble")
        policy = EnsembleSpec(members=tuple(_policy(f"policy.members[{i}]", m) for i, m in enumerate(members)),
                              aggregation=p.get("aggregation", "posterior-average"))
    else:
        if "members" in p or "aggregation" in p:
            raise CrossFieldError("policy.members", "members/aggregation only apply to antidote_ensemble")
        policy = _policy("policy", p)

    h = sec["human"]
    if "target" not in h:
        raise ConfigError("human.target", "required")
    target = _number("human.target", h["target"], lo=0, integer=True)
    if target >= built.n_hypotheses:
        raise CrossFieldError("human.target", f"must index a hypothesis 0..{built.n_hypotheses - 1}, got {target}")
    human = HumanSpec(target=target, action=_action("human.action", h.get("action")))

    le = sec["learner"]
    transmission = _choice("learner.transmission", le.get("transmission", "sampler"), ("sampler", "maximizer"))
    missingness = _choice("learner.missingness", le.get("missingness", "ignore"), ("ignore", "aware"))
    assumed = le.get("assumed_action")
    if missingness == "aware" and assumed is None:
        raise CrossFieldError("learner.assumed_action", "aware learner requires an assumed action model")
    learner = LearnerSpec(transmission, missingness,
                          _action("learner.assumed_action", assumed) if assumed is not None else None)

    r = sec["run"]
    N = _number("run.iterations", r.get("iterations", 1000), lo=0, integer=True)
    burn_in = r.get("burn_in")
    if burn_in is not None:
        burn_in = _number("run.burn_in", burn_in, lo=0, integer=True)
        if N > 0 and burn_in >= N:
            raise CrossFieldError("run.burn_in", f"must be < run.iterations ({N}), got {burn_in}")
    run = RunSpec(iterations=N, replicas=_number("run.replicas", r.get("replicas", 1), lo=1, integer=True),
                  seed=_number("run.seed", r.get("seed", 0), 0, 2**64, integer=True, open_hi=True),
                  burn_in=burn_in,
                  log_level=_choice("run.log_level", r.get("log_level", "full"), ("full", "metrics-only")))

    c = sec["chain"]
    label_source = c.get("label_source")
    if label_source is not None:
        _choice("chain.label_source", label_source, ("chain", "world"))
    memoryless = c.get("memoryless", False)
    if not isinstance(memoryless, bool):
        raise ConfigError("chain.memoryless", f"expected true/false, got {memoryless!r}")
    chain = ChainOptions(label_source, memoryless, _choice("chain.method", c.get("method", "eigen"), ("eigen", "power")))

    m = sec["metrics"]
    metrics = MetricsOptions(
        delta_human=_number("metrics.delta_human", m.get("delta_human", 0.0), 0, 1),
        delta_algorithm=_number("metrics.delta_algorithm", m.get("delta_algorithm", 0.0), 0, 1),
        basis=_choice("metrics.basis", m.get("basis", "full"), ("full", "p_seen")),
        horizon=_number("metrics.horizon", m.get("horizon", 10), lo=1, integer=True),
        bubble_delta=_number("metrics.bubble_delta", m.get("bubble_delta", 0.05), 0, 1),
        mode=_choice("metrics.mode", m.get("mode", "exact"), ("exact", "simulation")),
    )

    s = sec["sweep"]
    grid = s.get("grid", {})
    if not isinstance(grid, dict) or not all(isinstance(v, list) and v for v in grid.values()):
        raise ConfigError("sweep.grid", "expected a mapping of dotted keys to non-empty value lists")
    for key in grid:
        _check_dotted(key)
    sweep = {"grid": grid, "command": _choice("sweep.command", s.get("command", "analyze"),
                                              ("analyze", "simulate", "metrics"))}

    o = sec["output"]
    output_dir = o.get("dir", "out")
    if not isinstance(output_dir, str):
        raise ConfigError("output.dir", "expected a path string")

    canonical = {
        "world": {"family": family, "M": M, "noise": world.noise, "prior": world.prior, "q": world.q,
                  "relevance": relevance},
        "policy": _policy_dict(policy),
        "human": {"target": target, "action": _action_dict(human.action)},
        "learner": {"transmission": transmission, "missingness": missingness,
                    "assumed_action": _action_dict(learner.assumed_action) if learner.assumed_action else None},
        "run": {"iterations": N, "replicas": run.replicas, "seed": run.seed, "burn_in": burn_in,
                "log_level": run.log_level},
        "chain": {"label_source": label_source, "memoryless": memoryless, "method": chain.method},
        "metrics": metrics.__dict__.copy(),
    }
    if grid:
        canonical["sweep"] = sweep
    return ExperimentSpec(world, policy, human, learner, run, chain, metrics, sweep, output_dir,
                          raw=canonical, built=built)


def _check_dotted(key):
    parts = key.split(".")
    if len(parts) < 2 or parts[0] not in SCHEMA or parts[0] in ("sweep", "output"):
        raise ConfigError(f"sweep.grid.{key}", "must be a dotted path like policy.epsilon")
    if parts[1] not in SCHEMA[parts[0]]:
        raise UnknownKeyError(f"sweep.grid.{key}", "names an unknown config key")


def _action_dict(a: ActionModel) -> dict:
    d = {"kind": a.kind}
    if a.kind == "mar":
        d["rho"] = a.rho
    if a.kind == "luce":
        d["u_act"], d["u_noact"] = list(a.u_act), list(a.u_noact)
    return d


def _policy_dict(p) -> dict:
    if isinstance(p, EnsembleSpec):
        return {"kind": "antidote_ensemble", "members": [_policy_dict(m) for m in p.members],
                "aggregation": p.aggregation}
    d = {"kind": p.kind, "epsilon": p.epsilon, "tau": p.tau}
    if p.gamma is not None:
        d["gamma"] = p.gamma
    if p.base is not None:
        d["base"] = p.base
    return d


def with_overrides(raw: dict, assignments: dict) -> dict:
    """Copy of ``raw`` with dotted-key assignments applied."""
    out = copy.deepcopy(raw)
    for key, value in assignments.items():
        node = out
        *parents, leaf = key.split(".")
        for part in parents:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
        node[leaf] = value
    return out


def check_exact_size(spec: ExperimentSpec):
    w = spec.world_obj
    size = w.n_items * w.n_hypotheses**2
    if size > SIZE_GUARD:
        raise SizeGuardError(f"|X|*|H|^2 = {size} exceeds the exact-analysis guard {SIZE_GUARD}; use simulate")
