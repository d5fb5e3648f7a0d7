import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from oracles import bond_cluster_law, grid_edges, site_cluster_law, total_variation
from percolab import (DomainError, EnvParams, ExplorationBudget, LayeredEnv, Termination,
                      explore, layer_radii, run_survival_trials, survival_curve,
                      survival_prob)
from percolab.exploration import RECORD_COLUMNS
from percolab.lattice import (FiniteGrid, Hex, OrientedZ, SquareZ2, make_ladder,
                              neighbors_down, path_graph, star_graph)

# exact law of the corner cluster size on the 3x3 grid at p = 1/2 (4096 configurations)
GRID3_LAW = {1: 0.25, 2: 0.125, 3: 0.09375, 4: 0.06640625, 5: 0.0732421875,
             6: 0.089599609375, 7: 0.09521484375, 8: 0.1015625, 9: 0.105224609375}


def sizes(graph, p, trials, seed=0, site=False):
    batch = run_survival_trials(graph, EnvParams.homogeneous(p), 0, trials, seed,
                                site_mode=site, stop_at_height=False)
    return batch.sizes


def law_of(values):
    k, c = np.unique(values, return_counts=True)
    return {int(a): b / len(values) for a, b in zip(k, c)}


def test_grid_oracle_frozen():
    n, e = grid_edges(3, 3)
    law = bond_cluster_law(n, e, 0.5)
    assert law.keys() == GRID3_LAW.keys()
    assert all(abs(law[k] - GRID3_LAW[k]) < 1e-15 for k in law)


def test_pyramid_layers():
    env = LayeredEnv(EnvParams(0.0, 1.0, 1.0, 0.0), 0)
    rep = explore(Hex(False), env, budget=ExplorationBudget(10**6, 50, 10**4), keep_sites=True)
    counts = np.bincount([v[2] for v in rep.sites])
    assert list(counts) == [(n + 1) ** 2 for n in range(51)]
    assert list(rep.radii(50)) == list(range(51))


def test_closed_everything():
    env = LayeredEnv(EnvParams(0.0, 0.0, 0.0, 0.0), 3)
    for g in (Hex(True), SquareZ2(), OrientedZ(3)):
        rep = explore(g, env)
        assert rep.size == 1 and rep.termination is Termination.FRONTIER_EMPTY


def test_grid_cluster_sizes_chi_square():
    s = sizes(FiniteGrid(3, 3), 0.5, 10**5, seed=17)
    obs = np.bincount(s, minlength=10)[1:]
    exp = np.array([GRID3_LAW[k] for k in range(1, 10)]) * len(s)
    assert chisquare(obs, exp).pvalue > 0.01


@pytest.mark.parametrize("w,h", [(2, 3), (1, 6), (2, 4), (3, 3)])
def test_finite_grid_oracle_equivalence(w, h):
    n, e = grid_edges(w, h)
    exact = bond_cluster_law(n, e, 0.4)
    assert total_variation(law_of(sizes(FiniteGrid(w, h), 0.4, 10**5, seed=w * h)), exact) < 0.02


@pytest.mark.parametrize("graph,n,edges", [
    (path_graph(5), 5, [(i, i + 1) for i in range(4)]),
    (star_graph(4), 5, [(0, i) for i in range(1, 5)]),
])
def test_explicit_graph_oracle(graph, n, edges):
    exact = bond_cluster_law(n, edges, 0.6)
    assert total_variation(law_of(sizes(graph, 0.6, 2 * 10**4, seed=3)), exact) < 0.02
    exact_site = site_cluster_law(n, edges, 0.6, random_origin=True)
    got = law_of(sizes(graph, 0.6, 2 * 10**4, seed=4, site=True))
    assert total_variation(got, exact_site) < 0.02


def test_survival_all_open():
    est = survival_prob(Hex(False), EnvParams(0.5, 1.0, 1.0, 0.0), 30, 50)
    assert est.p_hat == 1.0


def test_no_upward_edges_means_no_height():
    est = survival_prob(Hex(True), EnvParams(0.3, 0.0, 0.0, 0.4), 1, 200)
    assert est.p_hat == 0.0


def test_oriented_z2_seed_ranges_agree():
    a = survival_prob(OrientedZ(2), EnvParams.homogeneous(0.70), 100, 10**4, 0)
    b = survival_prob(OrientedZ(2), EnvParams.homogeneous(0.70), 100, 10**4, 10**4)
    assert a.ci95[0] <= b.ci95[1] and b.ci95[0] <= a.ci95[1]


def test_engines_agree():
    graphs = [Hex(False), Hex(True), OrientedZ(2), OrientedZ(3), SquareZ2(), FiniteGrid(5, 4),
              make_ladder(OrientedZ(2)), make_ladder(OrientedZ(1), 3), Hex(True, (0,))]
    budget = ExplorationBudget(5000, 12, 30)
    for g in graphs:
        for seed in range(8):
            env = LayeredEnv(EnvParams(0.4, 0.7, 0.45, 0.4), seed)
            for site in (False, True):
                a = explore(g, env, budget=budget, site_mode=site, keep_sites=True,
                            engine="compiled")
                b = explore(g, env, budget=budget, site_mode=site, keep_sites=True,
                            engine="python")
                assert a.sites == b.sites and a.termination == b.termination
                assert a.per_layer_radius == b.per_layer_radius


def test_dfs_agrees_with_layered():
    for seed in range(20):
        env = LayeredEnv(EnvParams.homogeneous(0.6), seed)
        a = explore(OrientedZ(2), env, budget=ExplorationBudget(10**5, 40, 100))
        b = explore(OrientedZ(2), env, budget=ExplorationBudget(10**5, 40, 100), order="dfs")
        assert a.size == b.size and a.max_height_reached == b.max_height_reached


def test_orientation_soundness():
    for seed in range(10):
        env = LayeredEnv(EnvParams.homogeneous(0.7), seed)
        rep = explore(Hex(False), env, budget=ExplorationBudget(10**5, 25, 100), keep_sites=True)
        for v in rep.sites:
            if v[2] > 0:
                assert neighbors_down(v) & rep.sites


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**40))
def test_cluster_monotone_in_p(p1, p2, seed):
    lo, hi = sorted((p1, p2))
    budget = ExplorationBudget(10**5, 15, 50)
    a = explore(Hex(True), LayeredEnv(EnvParams(0.3, lo, lo, lo), seed), budget=budget,
                keep_sites=True)
    b = explore(Hex(True), LayeredEnv(EnvParams(0.3, hi, hi, hi), seed), budget=budget,
                keep_sites=True)
    if b.termination is not Termination.SITE_BUDGET:
        assert a.sites <= b.sites


def test_budgets_bind():
    env = LayeredEnv(EnvParams.homogeneous(0.9), 1)
    rep = explore(SquareZ2(), env, budget=ExplorationBudget(50, 0, 10**4))
    assert rep.termination is Termination.SITE_BUDGET and rep.size == 50
    rep = explore(SquareZ2(), env, budget=ExplorationBudget(10**6, 0, 5))
    assert rep.termination is Termination.RADIUS_BUDGET
    rep = explore(OrientedZ(2), env, budget=ExplorationBudget(10**6, 10, 100),
                  stop_at_height=True)
    assert rep.termination is Termination.HEIGHT_REACHED and rep.max_height_reached == 10


def test_determinism_and_threads():
    kw = dict(budget=ExplorationBudget(10**5, 60, 10**3))
    a = run_survival_trials(OrientedZ(2), EnvParams.homogeneous(0.65), 60, 400, 9, threads=1, **kw)
    b = run_survival_trials(OrientedZ(2), EnvParams.homogeneous(0.65), 60, 400, 9, threads=3, **kw)
    assert np.array_equal(a.heights, b.heights) and np.array_equal(a.sizes, b.sizes)
    assert np.array_equal(a.terminations, b.terminations)


def test_records_csv():
    est = survival_prob(OrientedZ(2), EnvParams.homogeneous(0.6), 10, 5, records=True)
    lines = est.records_csv().splitlines()
    assert lines[0] == ",".join(RECORD_COLUMNS) and len(lines) == 6
    assert est.survivors == sum(r.reached for r in est.records)


def test_survival_curve_non_increasing():
    curve = survival_curve(OrientedZ(2), EnvParams.homogeneous(0.66), [10, 50, 100], 2000)
    p = [e.p_hat for e in curve]
    assert p[0] >= p[1] >= p[2]


def test_layer_radii_without_horizontal_edges():
    lr = layer_radii("hex_h", EnvParams(0.0, 1.0, 1.0, 0.0), 80, seed=4)
    assert list(lr.radii) == list(range(81))
    assert list(lr.sizes) == [(n + 1) ** 2 for n in range(81)]


def test_layer_radii_engines_agree():
    for seed in range(4):
        a = layer_radii("hex_h", EnvParams(0.0, 1.0, 1.0, 0.3), 30, seed, engine="dense")
        b = layer_radii("hex_h", EnvParams(0.0, 1.0, 1.0, 0.3), 30, seed, engine="generic")
        assert np.array_equal(a.radii, b.radii) and np.array_equal(a.sizes, b.sizes)
        assert np.all(a.radii >= np.arange(31))


def test_layer_radii_domain():
    with pytest.raises(DomainError):
        layer_radii("hex_h", EnvParams(0.0, 1.0, 1.0, 0.5), 10)
    with pytest.raises(DomainError):
        layer_radii("hex_h", EnvParams(0.0, 0.9, 0.5, 0.3), 10)
