import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from percolab import (DomainError, EnvParams, LayeredEnv, LayerType, block_crossing_prob,
                      critical_layers_experiment, crossing_decay_check, growth_ratio_check,
                      locate_bad_blocks, subcritical_bound)
from percolab.bounds import (bad_block_check, block_failure_bound, block_height,
                             block_window, diamond_size, entry_sites)


def test_bound_with_given_chi():
    assert subcritical_bound(0.5, 0.2, chi=2.0).bound == 0.0078125


def test_bound_at_zero_p_h_uses_chi_one():
    b = subcritical_bound(0.6, 0.0, trials=50)
    assert b.chi == 1.0 and b.bound == pytest.approx(0.36 / 16, abs=1e-15)


@given(st.floats(0.01, 1.0), st.floats(1.0, 1e4))
def test_bound_identity(delta, chi):
    b = subcritical_bound(delta, 0.1, chi=chi)
    assert b.bound * 16 * chi == pytest.approx(delta**2, rel=1e-12)


def test_bound_domain():
    for bad in (dict(delta=0.0, p_h=0.2, chi=2), dict(delta=0.5, p_h=0.5, chi=2),
                dict(delta=0.5, p_h=0.2, chi=0.5)):
        with pytest.raises(DomainError):
            subcritical_bound(**bad)


@pytest.mark.parametrize("n", range(1, 9))
def test_windows_at_half(n):
    assert block_window(0.5, n) == (4**n, 4 ** (n + 1) - n)
    assert block_height(0.5, n + 1) / block_height(0.5, n) == pytest.approx(4.0)


@given(st.floats(0.05, 1.0), st.integers(1, 20))
def test_height_ratio(delta, n):
    assert block_height(delta, n + 1) / block_height(delta, n) == pytest.approx(2 / delta)


def test_failure_bound_value():
    assert block_failure_bound(0.5, 3) == pytest.approx(math.exp(-8.0), rel=1e-15)


def test_every_layer_bad():
    env = LayeredEnv(EnvParams(1.0, 0.5, 0.5, 0.2), 4)
    for b in locate_bad_blocks(env, n_max=5):
        assert b.found and b.start == b.window[0]


def test_blocks_agree_with_layer_types():
    for seed in range(30):
        env = LayeredEnv(EnvParams(0.5, 0.9, 0.1, 0.2), seed)
        for b in locate_bad_blocks(env, n_max=4):
            lo, hi = b.window
            runs = [j for j in range(lo, hi)
                    if all(env.layer_type(j + i) is LayerType.BAD for i in range(b.n))]
            assert b.start == (runs[0] if runs else None)


def test_bad_blocks_pass_union_bound():
    v = bad_block_check(0.5, 5, 60)
    assert v.passed and v.statistic >= v.threshold
    assert v.series_csv().startswith("seed,n,start")


def test_locate_requires_delta_for_seed():
    with pytest.raises(DomainError):
        locate_bad_blocks(3)


def test_diamond():
    for w in range(6):
        assert len(entry_sites(w)) == diamond_size(w)
        assert all(abs(a) + abs(b) <= w for a, b, _ in entry_sites(w))


@pytest.mark.parametrize("method", ["importance", "direct"])
def test_crossing_extremes(method):
    zero = block_crossing_prob(3, 0.5, 0.0, 0.2, 2, 200, chi=1.5, method=method)
    assert zero.p_hat == 0.0
    one = block_crossing_prob(3, 0.5, 1.0, 0.0, 0, 200, chi=1.0, method=method)
    assert one.p_hat == 1.0


@pytest.mark.parametrize("n,p_b,w", [(1, 0.1, 1), (2, 0.3, 2), (3, 0.25, 0), (2, 0.05, 4)])
def test_importance_matches_direct(n, p_b, w):
    a = block_crossing_prob(n, 0.5, p_b, 0.2, w, 20000, seed=1, chi=1.5)
    b = block_crossing_prob(n, 0.5, p_b, 0.2, w, 20000, seed=2, chi=1.5, method="direct")
    assert abs(a.p_hat - b.p_hat) < 4 * math.hypot(a.se, b.se)


def test_first_moment_envelope():
    for n in (2, 3, 4):
        e = block_crossing_prob(n, 0.5, 0.005, 0.2, 8, 5000, chi=3.0)  # chi(0.2) < 3
        assert e.first_moment_bound == pytest.approx((4 * 3.0 * 0.005) ** n * 145)
        assert e.ci95[0] <= e.first_moment_bound


def test_importance_deterministic_across_threads():
    a = block_crossing_prob(3, 0.5, 0.2, 0.2, 3, 3000, seed=5, chi=1.5)
    b = block_crossing_prob(3, 0.5, 0.2, 0.2, 3, 3000, seed=5, chi=1.5, threads=3)
    assert a == b


def test_decay_check_small():
    v = crossing_decay_check(0.5, 0.2, n_values=range(2, 6), trials=2000, chi=2.0)
    assert v.passed and v.details["slope"] < 0
    assert v.params["p_b"] == pytest.approx(0.5 * 0.25 / 32)
    assert len(v.series) == 4


def test_decay_check_above_bound_is_inconclusive():
    v = crossing_decay_check(0.5, 0.2, p_b=0.01, n_values=(2, 3), trials=500, chi=2.0)
    assert not v.passed and v.verdict == "inconclusive"
    assert json.loads(v.to_json())["verdict"] == "inconclusive"


def test_growth_without_horizontal_edges():
    v = growth_ratio_check(0.0, N=60, seeds=2)
    assert v.passed and v.statistic < 0.25
    assert v.details["min_radius_minus_n"] == 0


def test_growth_small():
    v = growth_ratio_check(0.3, N=80, seeds=3, n_min=20)
    assert v.passed and v.details["min_radius_minus_n"] >= 0


def test_critical_layers_small():
    v = critical_layers_experiment(0.2, (10, 20), 500, seed=3)
    assert v.details["domination_violations"] == 0
    assert v.details["non_increasing"]
    with pytest.raises(DomainError):
        critical_layers_experiment(0.0, (10,), 10)
