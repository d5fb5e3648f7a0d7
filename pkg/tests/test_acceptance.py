"""Acceptance criteria at full scale.  Each test records one pass/fail line."""

import math
import random
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from percolab import (EnvParams, LayeredEnv, critical_layers_experiment, crossing_decay_check,
                      estimate_pc, explore, growth_ratio_check, monotonicity_report,
                      oracle_comparison, run_survival_trials)
from percolab.cli import main
from percolab.exploration import ExplorationBudget
from percolab.lattice import Hex, OrientedZ, cartesian, neighbors_down, neighbors_horizontal, \
    neighbors_up

UP = {(0, 0, 1), (-1, 0, 1), (0, -1, 1), (-1, -1, 1)}
FLAT = {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)}
DOWN = {(0, 0, -1), (1, 0, -1), (0, 1, -1), (1, 1, -1)}


@pytest.fixture
def record(request):
    box = {}
    t0 = time.time()
    yield box
    k = box["id"]
    status = "PASS" if box.get("ok") else "FAIL"
    ACCEPTANCE[k] = (f"criterion {k:2d} {status}  {box.get('name', '')}: "
                     f"{box.get('summary', '')} [{time.time() - t0:.1f} s]")
    print(ACCEPTANCE[k])


def shift(v, offs):
    return {(v[0] + a, v[1] + b, v[2] + c) for a, b, c in offs}


def test_c01_geometry(record):
    record.update(id=1, name="geometry exactness")
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        v = (int(rng.integers(-10**4, 10**4)), int(rng.integers(-10**4, 10**4)),
             int(rng.integers(1, 10**4)))
        up, hz, dn = neighbors_up(v), neighbors_horizontal(v), neighbors_down(v)
        assert up == shift(v, UP) and hz == shift(v, FLAT) and dn == shift(v, DOWN)
        x = cartesian(v)
        for w in up | hz | dn:
            worst = max(worst, abs(math.dist(x, cartesian(w)) - 1.0))
        assert len(up | hz | dn) == 12
    record.update(summary=f"max |dist - 1| = {worst:.2e}")
    assert worst < 1e-12
    record["ok"] = True


def test_c02_pyramid(record):
    record.update(id=2, name="pyramid law")
    env = LayeredEnv(EnvParams(0.0, 1.0, 1.0, 0.0), 0)
    rep = explore(Hex(False), env, budget=ExplorationBudget(10**6, 50, 10**4), keep_sites=True)
    counts = np.bincount([v[2] for v in rep.sites], minlength=51)
    ok = all(counts[n] == (n + 1) ** 2 for n in range(51))
    record.update(summary=f"|C_50| = {counts[50]}", ok=ok)
    assert ok


def test_c03_harris_kesten(record):
    record.update(id=3, name="Z^2 bond p_c")
    t0 = time.time()
    est = estimate_pc("z2", "bond", (64, 128, 256), 10000, seed=0)
    dt = time.time() - t0
    ok = abs(est.p_hat - 0.5) <= 0.010 and dt <= 600
    record.update(summary=f"p_hat = {est.p_hat:.4f}, CI = ({est.ci[0]:.4f}, {est.ci[1]:.4f})",
                  ok=ok)
    assert abs(est.p_hat - 0.5) <= 0.010
    assert dt <= 600


def test_c04_coupling_oracle(record):
    record.update(id=4, name="coupling oracle")
    t0 = time.time()
    worst = 0.0
    for graph, mode in (("path3", "bond"), ("star3", "site")):
        for p in (0.2, 0.4, 0.6, 0.8):
            res = oracle_comparison(graph, p, 10**5, seed=0, mode=mode)
            worst = max(worst, res.tv)
            assert res.passed, (graph, p, res.tv)
    dt = time.time() - t0
    record.update(summary=f"max TV = {worst:.4f}", ok=dt < 60)
    assert dt < 60


def test_c05_strict_inequality(record):
    record.update(id=5, name="strict inequality")
    rep = monotonicity_report(["z2-oriented", "z3-oriented", "ladder:z2-oriented"], "bond",
                              N=200, trials=10000, seed=0)
    e = rep.estimates
    parts = [f"{g.graph}={g.p_hat:.4f}" for g in e]
    record.update(summary=", ".join(parts))
    for w in rep.witnesses:
        assert w.pc_disjoint, w.to_dict()
        assert w.separated, w.to_dict()
    record["ok"] = True


def test_c06_growth(record):
    record.update(id=6, name="growth lemma")
    v = growth_ratio_check(0.3, N=300, seeds=20, n_min=50)
    record.update(summary=f"max ratio = {v.statistic:.3f}, "
                          f"min(R_n - n) = {v.details['min_radius_minus_n']}", ok=v.passed)
    assert v.passed


def test_c07_block_crossing_decay(record):
    record.update(id=7, name="subcritical block crossing")
    v = crossing_decay_check(0.5, 0.2, n_values=range(2, 9), trials=10000, seed=0)
    record.update(summary=f"slope = {v.details['slope']:.3f} +- {v.details['slope_se']:.4f}, "
                          f"p_b = {v.params['p_b']:.3g}", ok=v.passed)
    assert v.passed


def test_c08_determinism(record, tmp_path):
    record.update(id=8, name="determinism")
    outs = []
    for threads in (1, 2, 4):
        path = tmp_path / f"t{threads}.csv"
        assert main(["survive", "--graph", "hex_h", "--delta", "0.3", "--p-g", "0.8",
                     "--p-b", "0.3", "--p-h", "0.3", "--N", "10", "20", "--trials", "2000",
                     "--threads", str(threads), "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    params = EnvParams(0.3, 0.7, 0.2, 0.4)
    env = LayeredEnv(params, 99)
    g = Hex(True)
    rng = np.random.default_rng(3)
    edges = {}
    while len(edges) < 10**4:
        v = tuple(int(x) for x in rng.integers(0, 60, 3))
        for e in g.out_edges(v):
            edges.setdefault(e.key, e)
    first = {k: env.is_open(e) for k, e in edges.items()}
    order = list(edges.values())
    random.Random(1).shuffle(order)
    fresh = LayeredEnv(params, 99)
    assert {e.key: fresh.is_open(e) for e in order} == first
    record.update(summary="threads 1/2/4 byte-identical, 1e4 shuffled queries replayed",
                  ok=True)


def test_c09_monotone_coupling(record):
    record.update(id=9, name="monotone coupling")
    grid = np.round(np.arange(0.50, 0.801, 0.02), 2)
    budget = ExplorationBudget(10**6, 60, 10**4)
    alive = np.array([run_survival_trials(OrientedZ(2), EnvParams.homogeneous(p), 60, 1000, 0,
                                          budget=budget).heights >= 60 for p in grid])
    drops = int(np.count_nonzero(alive[:-1] & ~alive[1:]))
    record.update(summary=f"{len(grid)} p values x 1000 seeds, {drops} decreases",
                  ok=drops == 0)
    assert drops == 0


def test_c10_critical_layers(record):
    record.update(id=10, name="critical layers (indicative)")
    v = critical_layers_experiment(0.2, (50, 100, 200), 10000, seed=0)
    record.update(summary=f"p_hat(N=200) = {v.details['p_hat_top']:.4f}, "
                          f"lower CI = {v.statistic:.4f}", ok=v.passed)
    assert v.passed
