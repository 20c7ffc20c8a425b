import numpy as np
import pytest
from hypothesis import given, strategies as st

from iterbias.errors import ConfigError, DomainError
from iterbias.world import (WorldSpec, baseline_distribution, build_world, likelihood, predicted_label)

from conftest import explicit, threshold


def test_threshold_family():
    w = threshold(5, 0.1)
    assert w.n_hypotheses == 6
    assert likelihood(w, 2, 3, 1) == 0.9
    assert likelihood(w, 2, 1, 1) == 0.1


def test_interval_family_size_and_values():
    w = build_world(WorldSpec(family="interval", M=4, noise=0.2))
    assert w.n_hypotheses == 4 * 5 // 2
    k = w.names.index("[1,2]")
    np.testing.assert_array_equal(w.relevance[k], [0.2, 0.8, 0.8, 0.2])


def test_explicit_round_trip():
    rows = [[0.9, 0.6, 0.5], [0.1, 0.3, 0.7]]
    w = explicit(rows, prior=[0.7, 0.3])
    np.testing.assert_array_equal(w.relevance, rows)
    assert w.prior.tolist() == [0.7, 0.3]


@pytest.mark.parametrize("p,y,expected", [(0.9, 1, 0.9), (0.9, 0, 1 - 0.9), (0.5, 0, 0.5), (0.5, 1, 0.5)])
def test_likelihood(p, y, expected):
    assert likelihood(explicit([[p]]), 0, 0, y) == expected


@pytest.mark.parametrize("p,expected", [(0.9, (1, 0.9)), (0.1, (0, 0.9)), (0.5, (1, 0.5))])
def test_predicted_label(p, expected):
    label, conf = predicted_label(explicit([[p]]), 0, 0)
    assert label == expected[0]
    assert conf == pytest.approx(expected[1], abs=1e-15)


def test_baseline_distribution():
    assert baseline_distribution(threshold(4)).tolist() == [0.25] * 4
    assert baseline_distribution(explicit([[0.5, 0.5]], q=[0.7, 0.3])).tolist() == [0.7, 0.3]
    assert baseline_distribution(explicit([[0.5] * 3], q=[2, 1, 1])).tolist() == [0.5, 0.25, 0.25]


def test_domain_errors():
    w = threshold(3)
    with pytest.raises(DomainError):
        likelihood(w, 0, 3, 1)
    with pytest.raises(DomainError):
        predicted_label(w, 0, -1)


@pytest.mark.parametrize("field,kw", [
    ("world.q", dict(q=[0, 0, 0])),
    ("world.prior", dict(prior=[1, -1, 1, 1])),
    ("world.q", dict(q=[1, 2])),
])
def test_unnormalizable_weights_name_field(field, kw):
    with pytest.raises(ConfigError) as exc:
        build_world(WorldSpec(M=3, **kw))
    assert exc.value.field == field


def test_world_is_immutable():
    w = threshold(3)
    with pytest.raises(ValueError):
        w.relevance[0, 0] = 0.3


@given(st.sampled_from(["threshold", "interval"]), st.integers(1, 8), st.floats(0, 0.49))
def test_generated_tables_are_bounded_and_deterministic(family, M, noise):
    spec = WorldSpec(family=family, M=M, noise=noise)
    a, b = build_world(spec), build_world(spec)
    assert np.all(a.relevance >= noise) and np.all(a.relevance <= 1 - noise)
    assert a.relevance.tobytes() == b.relevance.tobytes()
    for h in range(a.n_hypotheses):
        for x in range(M):
            assert likelihood(a, h, x, 0) + likelihood(a, h, x, 1) == 1.0
