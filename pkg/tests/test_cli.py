import csv
import json

import numpy as np
import pytest
import yaml

from iterbias.chain import total_variation
from iterbias.cli import cmd_analyze, cmd_metrics, cmd_simulate, cmd_sweep, main
from iterbias.config import config_digest, parse_config, parse_config_dict
from iterbias.errors import (ConfigError, ConfigSyntaxError, CrossFieldError, OutputFileError, SizeGuardError,
                             UnknownKeyError)
from iterbias.output import file_digest, read_jsonl, read_matrix_csv

BASELINE = {
    "world": {"family": "threshold", "M": 5, "noise": 0.1},
    "policy": {"kind": "random", "epsilon": 1.0},
    "human": {"target": 2},
    "learner": {"transmission": "sampler"},
    "chain": {"label_source": "chain"},
    "run": {"iterations": 50, "replicas": 2, "seed": 3},
}


def cfg(**sections):
    raw = {k: dict(v) for k, v in BASELINE.items()}
    for name, value in sections.items():
        raw[name] = value
    return raw


def write_cfg(tmp_path, raw, name="c.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# parsing

def test_minimal_config_defaults():
    spec = parse_config_dict({"world": {"M": 4}, "human": {"target": 1}})
    assert spec.policy.epsilon == 0.0
    assert spec.learner.transmission == "sampler"
    assert spec.learner.missingness == "ignore"
    assert spec.run.burn_in is None
    spec = parse_config_dict({"world": {"M": 4}, "human": {"target": 1}, "run": {"iterations": 500}})
    assert spec.run.effective_burn_in == 50


def test_bound_violation_names_field():
    with pytest.raises(ConfigError) as err:
        parse_config_dict(cfg(policy={"kind": "filter", "epsilon": 1.5}))
    assert err.value.field == "policy.epsilon"
    assert type(err.value) is ConfigError


def test_aware_without_model_is_cross_field():
    with pytest.raises(CrossFieldError):
        parse_config_dict(cfg(learner={"missingness": "aware"}))


def test_target_out_of_range():
    with pytest.raises(CrossFieldError):
        parse_config_dict(cfg(human={"target": 6}))


def test_unknown_keys_rejected():
    with pytest.raises(UnknownKeyError):
        parse_config_dict(cfg(policy={"kind": "filter", "epsilonn": 0.1}))
    with pytest.raises(UnknownKeyError):
        parse_config_dict(dict(BASELINE, extra={}))


def test_error_classes_have_distinct_exit_codes(tmp_path):
    bad_syntax = tmp_path / "bad.yaml"
    bad_syntax.write_text("world: {M: 5\n")
    codes = {
        "syntax": main(["validate", "--config", str(bad_syntax)]),
        "unknown": main(["validate", "--config", str(write_cfg(tmp_path, cfg(run={"itr": 1}), "u.yaml"))]),
        "bound": main(["validate", "--config", str(write_cfg(tmp_path, cfg(policy={"epsilon": 1.5}), "b.yaml"))]),
        "cross": main(["validate", "--config",
                       str(write_cfg(tmp_path, cfg(learner={"missingness": "aware"}), "x.yaml"))]),
    }
    assert codes == {"syntax": ConfigSyntaxError.exit_code, "unknown": UnknownKeyError.exit_code,
                     "bound": ConfigError.exit_code, "cross": CrossFieldError.exit_code}
    assert len(set(codes.values())) == 4
    assert main(["validate", "--config", str(write_cfg(tmp_path, cfg()))]) == 0


def test_json_config_accepted(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg()))
    assert parse_config(path).digest() == parse_config_dict(cfg()).digest()


def test_digest_ignores_key_order_and_fills_defaults():
    a = parse_config_dict(cfg())
    b = parse_config_dict(dict(reversed(list(cfg(learner={}).items()))))
    assert a.digest() == b.digest()
    assert parse_config_dict(cfg(policy={"kind": "random", "epsilon": 0.5})).digest() != a.digest()


@pytest.mark.parametrize("path", ["baseline.yaml", "top1_filter.yaml", "memoryless_validation.yaml",
                                  "ensemble.yaml"])
def test_shipped_configs_parse(path):
    from pathlib import Path
    parse_config(Path(__file__).parent.parent / "configs" / path)


# analyze

def test_analyze_baseline_matches_prior(tmp_path):
    files = cmd_analyze(parse_config_dict(cfg()), tmp_path)
    assert {f.name for f in files} == {"transition.csv", "stationary.csv", "diagnostics.json", "manifest.json"}
    pi = read_matrix_csv(tmp_path / "stationary.csv")[0]
    assert total_variation(pi, np.full(6, 1 / 6)) <= 1e-9
    T = read_matrix_csv(tmp_path / "transition.csv")
    assert T.shape == (6, 6)
    np.testing.assert_allclose(T.sum(axis=0), 1.0, atol=1e-12)
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["method_agreement_l1"] <= 1e-9
    assert diag["reducible"] is False


def test_analyze_top1_reports_bias(tmp_path):
    cmd_analyze(parse_config_dict(cfg(policy={"kind": "top1_filter"})), tmp_path)
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["tv_pi_prior"] > 0
    assert "closed_classes" in diag and "reducible" in diag


def test_analyze_rerun_identical_digests(tmp_path):
    spec = parse_config_dict(cfg(policy={"kind": "filter", "epsilon": 0.3}))
    a = cmd_analyze(spec, tmp_path / "a")
    b = cmd_analyze(spec, tmp_path / "b")
    for fa, fb in zip(a, b):
        if fa.name != "manifest.json":
            assert file_digest(fa) == file_digest(fb)
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_size_guard_suggests_simulate(tmp_path):
    spec = parse_config_dict(cfg(world={"family": "interval", "M": 60}))
    with pytest.raises(SizeGuardError, match="simulate"):
        cmd_analyze(spec, tmp_path)
    path = write_cfg(tmp_path, cfg(world={"family": "interval", "M": 60}))
    assert main(["analyze", "--config", str(path), "--out", str(tmp_path / "o")]) == SizeGuardError.exit_code
    assert main(["validate", "--config", str(path)]) == 0


# simulate

def test_simulate_zero_iterations(tmp_path):
    cmd_simulate(parse_config_dict(cfg(run={"iterations": 0, "seed": 1})), tmp_path)
    assert (tmp_path / "events.jsonl").read_text() == ""
    rows = read_rows(tmp_path / "metrics.csv")
    assert rows and all(r["iteration"] == "meta" for r in rows)


def test_simulate_byte_identical(tmp_path):
    spec = parse_config_dict(cfg(policy={"kind": "filter"}))
    cmd_simulate(spec, tmp_path / "a")
    cmd_simulate(spec, tmp_path / "b", jobs=2)
    assert (tmp_path / "a" / "events.jsonl").read_bytes() == (tmp_path / "b" / "events.jsonl").read_bytes()
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    path = write_cfg(tmp_path, cfg(policy={"kind": "filter"}))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "99"]) == 0
    assert (tmp_path / "a" / "events.jsonl").read_bytes() != (tmp_path / "b" / "events.jsonl").read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 99


def test_metrics_only_log_level(tmp_path):
    path = write_cfg(tmp_path, cfg())
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path), "--log-level", "metrics-only"]) == 0
    assert not (tmp_path / "events.jsonl").exists()
    assert (tmp_path / "metrics.csv").exists()


def test_events_schema(tmp_path):
    cmd_simulate(parse_config_dict(cfg(run={"iterations": 20, "replicas": 2, "seed": 4})), tmp_path)
    events = read_jsonl(tmp_path / "events.jsonl")
    assert len(events) == 40
    assert list(events[0]) == ["replica", "n", "h", "x", "a", "y", "y_star", "post_target", "post_argmax"]


def test_memoryless_preset_matches_analyze(tmp_path):
    raw = cfg(policy={"kind": "filter", "epsilon": 0.3}, chain={"label_source": "chain", "memoryless": True},
              run={"iterations": 60000, "seed": 2024, "burn_in": 1000, "log_level": "metrics-only"})
    spec = parse_config_dict(raw)
    cmd_analyze(spec, tmp_path / "exact")
    cmd_simulate(spec, tmp_path / "sim")
    pi = read_matrix_csv(tmp_path / "exact" / "stationary.csv")[0]
    rows = [r for r in read_rows(tmp_path / "sim" / "metrics.csv") if r["iteration"] == "stationary"]
    freq = np.array([float(r["mean"]) for r in rows])
    assert total_variation(freq, pi) <= 0.02


def test_ensemble_simulate(tmp_path):
    raw = cfg(policy={"kind": "antidote_ensemble",
                      "members": [{"kind": "top1_filter"}, {"kind": "antidote_tolerance", "tau": 0.9}]},
              run={"iterations": 30, "replicas": 2, "seed": 5})
    cmd_simulate(parse_config_dict(raw), tmp_path)
    assert (tmp_path / "members" / "m0" / "events.jsonl").exists()
    assert (tmp_path / "members" / "m1" / "events.jsonl").exists()
    metrics = {r["metric"] for r in read_rows(tmp_path / "metrics.csv")}
    assert "ensemble_item_accuracy" in metrics


# metrics

def _blind(tmp_path, raw):
    cmd_metrics(parse_config_dict(raw), tmp_path)
    return json.loads((tmp_path / "blindspots.json").read_text())


def test_metrics_cli_blind_spot_examples(tmp_path):
    top1 = _blind(tmp_path / "a", cfg(policy={"kind": "top1_filter"}, metrics={"delta_human": 0.0}))
    assert all(r["prevalence"] == pytest.approx(0.8, abs=1e-15) for r in top1["human"])

    uniform = _blind(tmp_path / "b", cfg(policy={"kind": "random"}, metrics={"delta_human": 0.19}))
    assert all(r["prevalence"] == 0 for r in uniform["human"])

    luce = {"kind": "luce", "u_act": [3, 1], "u_noact": [1, 3]}
    alg = _blind(tmp_path / "c", cfg(world={"M": 5, "noise": 0.0}, human={"target": 2, "action": luce},
                                     metrics={"delta_algorithm": 0.3}))["algorithm"]
    assert alg["members"] == [2, 3, 4]
    assert alg["prevalence"] == pytest.approx(0.6, abs=1e-15)


def test_metrics_filter_example(tmp_path):
    raw = cfg(world={"family": "explicit", "relevance": [[0.9, 0.6, 0.5]]}, human={"target": 0},
              policy={"kind": "filter"}, metrics={"delta_human": 0.27})
    report = _blind(tmp_path, raw)["human"][0]
    assert report["members"] == [2]
    assert report["prevalence"] == pytest.approx(1 / 3)


def test_metrics_outputs(tmp_path):
    cmd_metrics(parse_config_dict(cfg(policy={"kind": "top1_filter"})), tmp_path)
    bubble = json.loads((tmp_path / "bubble.json").read_text())
    assert bubble["mode"] == "exact"
    rows = read_rows(tmp_path / "divergence.csv")
    assert len(rows) == 6
    assert float(rows[0]["tv"]) == pytest.approx(0.8)


def test_metrics_missing_log(tmp_path):
    with pytest.raises(OutputFileError):
        cmd_metrics(parse_config_dict(cfg()), tmp_path, log_path=tmp_path / "nope.jsonl")
    path = write_cfg(tmp_path, cfg())
    code = main(["metrics", "--config", str(path), "--out", str(tmp_path / "o"), "--log", str(tmp_path / "x")])
    assert code == OutputFileError.exit_code


def test_metrics_from_log(tmp_path):
    spec = parse_config_dict(cfg(run={"iterations": 15, "replicas": 100, "seed": 8}))
    cmd_simulate(spec, tmp_path / "sim")
    cmd_metrics(spec, tmp_path / "m", log_path=tmp_path / "sim" / "events.jsonl")
    bubble = json.loads((tmp_path / "m" / "bubble.json").read_text())
    assert bubble["mode"] == "simulation"
    assert bubble["warnings"] == []


# sweep

def test_sweep_epsilon_filter_chain_monotone(tmp_path):
    raw = cfg(policy={"kind": "filter"}, sweep={"grid": {"policy.epsilon": [0.0, 0.5, 1.0]}})
    _, failed = cmd_sweep(parse_config_dict(raw), tmp_path)
    assert failed == 0
    rows = read_rows(tmp_path / "summary.csv")
    assert [float(r["policy.epsilon"]) for r in rows] == [0.0, 0.5, 1.0]
    tv = [float(r["tv_pi_prior"]) for r in rows]
    assert tv[0] >= tv[1] >= tv[2]
    assert tv[2] <= 1e-9
    for i in range(3):
        assert (tmp_path / f"point_{i:03d}" / "stationary.csv").exists()


def test_single_point_sweep_equals_analyze(tmp_path):
    raw = cfg(policy={"kind": "filter", "epsilon": 0.3})
    cmd_analyze(parse_config_dict(raw), tmp_path / "direct")
    cmd_sweep(parse_config_dict(dict(raw, sweep={"grid": {"policy.epsilon": [0.3]}})), tmp_path / "sweep")
    for name in ("transition.csv", "stationary.csv", "diagnostics.json"):
        assert file_digest(tmp_path / "direct" / name) == file_digest(tmp_path / "sweep" / "point_000" / name)


def test_sweep_tau_endpoints(tmp_path):
    # unique top item per hypothesis, so tau=0 is a point mass rather than a tie set
    world = {"family": "explicit", "relevance": [[0.9, 0.6, 0.5, 0.2], [0.1, 0.3, 0.8, 0.7]]}
    raw = cfg(world=world, human={"target": 1}, policy={"kind": "antidote_tolerance"},
              metrics={"delta_human": 0.0}, sweep={"grid": {"policy.tau": [0.0, 1.0]}})
    cmd_sweep(parse_config_dict(raw), tmp_path)
    rows = read_rows(tmp_path / "summary.csv")
    assert float(rows[0]["human_prevalence"]) == pytest.approx(0.75)
    assert float(rows[1]["human_prevalence"]) == 0.0


def test_sweep_partial_failure(tmp_path):
    path = write_cfg(tmp_path, cfg(policy={"kind": "filter"}))
    code = main(["sweep", "--config", str(path), "--out", str(tmp_path / "o"), "--grid", "policy.epsilon=0.5,2"])
    assert code == 12
    rows = read_rows(tmp_path / "o" / "summary.csv")
    assert [r["status"] for r in rows] == ["ok", "error"]
    assert "policy.epsilon" in rows[1]["error"]


def test_sweep_parallel_matches_serial(tmp_path):
    path = write_cfg(tmp_path, cfg(policy={"kind": "filter"}))
    grid = ["--grid", "policy.epsilon=0,0.5,1"]
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "s")] + grid) == 0
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "p"), "--jobs", "3"] + grid) == 0
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()


# manifest

def test_manifest_digests_recomputable(tmp_path):
    spec = parse_config_dict(cfg())
    cmd_simulate(spec, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_digest"] == config_digest(manifest["config"]) == spec.digest()
    assert manifest["seed"] == 3
    for name, digest in manifest["outputs"].items():
        assert file_digest(tmp_path / name) == digest


def test_regenerate_from_manifest(tmp_path):
    path = write_cfg(tmp_path, cfg(policy={"kind": "filter", "epsilon": 0.2}))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "a")]) == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert main(["simulate", "--config", str(manifest), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "events.jsonl").read_bytes() == (tmp_path / "b" / "events.jsonl").read_bytes()
    again = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert again["outputs"] == json.loads(manifest.read_text())["outputs"]
