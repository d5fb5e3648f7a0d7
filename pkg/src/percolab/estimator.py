"""Critical-point estimation from finite-size survival curves.

For homogeneous percolation every edge (or site) is open iff its latent
uniform is below p.  A minimax search therefore gives, per seed and level,
the exact threshold p*(N) above which the origin reaches that level, and
the whole survival curve S_N(p) = #{trials: p*(N) < p} / trials follows
from one batch of runs.  Bisection on that curve is cheap and every
evaluated curve is exactly monotone in p.

The unoriented square lattice has no height; its survival surrogate is the
left-right crossing of an (L+1) x L box, self-dual at p = 1/2.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _kernels as K
from ._parallel import run_chunks
from ._validation import DomainError, check_int, check_levels, check_probability, check_seed
from .environment import EnvParams, LayeredEnv
from .exploration import (ExplorationBudget, Termination, run_survival_trials,
                          survival_prob)
from .lattice import (FiniteGrid, OrientedZ, ParallelSplit, SquareZ2,
                      make_ladder, parse_graph)
from .serialize import to_csv
from .stats import intervals_disjoint, mean_ci, wilson_interval

MODES = ("bond", "site")
DEFAULT_THRESHOLD = 0.05
CROSSING_THRESHOLD = 0.5


def _check_mode(mode):
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def is_crossing_graph(graph):
    """Unoriented Z^2 uses box crossing instead of reaching a height."""
    return isinstance(graph, SquareZ2)


def crossing_box(L):
    """The (L+1) x L box crossed from x = 0 to x = L."""
    return FiniteGrid(L + 1, L)


def graph_name(graph):
    return graph.to_json()


def minimax_reference(graph, seed, sources, levels, *, site_mode=False, target_axis=-1,
                      cap=1.0, max_sites=10**6):
    """Pure-Python minimax thresholds (same contract as the compiled kernel)."""
    env = LayeredEnv(EnvParams.homogeneous(0.5), seed)
    levels = list(levels)
    out = [math.inf] * len(levels)
    best = {}
    heap = []
    for s in sources:
        v = env.site_uniform(s) if site_mode else 0.0
        if s not in best:
            best[s] = v
            key = s[target_axis] if target_axis >= 0 else graph.height(s)
            heapq.heappush(heap, (v, -key, s))
    done = set()
    next_level = 0
    while heap:
        v, _, s = heapq.heappop(heap)
        if s in done or v > best[s]:
            continue
        if v >= cap:
            break
        done.add(s)
        h = graph.height(s)
        if target_axis < 0:
            while next_level < len(levels) and h >= levels[next_level]:
                out[next_level] = v
                next_level += 1
            if next_level == len(levels):
                break
        elif s[target_axis] >= levels[0]:
            out[0] = v
            break
        if len(done) >= max_sites:
            break
        if target_axis < 0 and h >= levels[-1]:
            continue
        for e in graph.out_edges(s):
            w = tuple(e.head)
            if not graph.contains(w) or w in done:
                continue
            u = env.site_uniform(w) if site_mode else env.latent_uniform(e)
            val = max(u, v)
            if val >= cap or val >= best.get(w, math.inf):
                continue
            best[w] = val
            key = w[target_axis] if target_axis >= 0 else graph.height(w)
            heapq.heappush(heap, (val, -key, w))
    return out


@dataclass(frozen=True)
class ThresholdSample:
    """Per-trial minimax thresholds: ``values[t, k]`` for level ``levels[k]``."""

    values: np.ndarray
    seeds: np.ndarray
    levels: tuple
    cap: float
    budget_hits: int

    @property
    def trials(self):
        return self.values.shape[0]

    def survivors(self, p, k=-1):
        return int(np.count_nonzero(self.values[:, k] < p))

    def survival(self, p, k=-1):
        return self.survivors(p, k) / self.trials

    def quantile_point(self, fraction, k=-1):
        """Smallest p whose empirical survival reaches ``fraction``."""
        col = np.sort(self.values[:, k])
        idx = max(1, math.ceil(fraction * self.trials - 1e-9)) - 1
        if idx >= self.trials:
            return 1.0
        v = col[idx]
        return 1.0 if not np.isfinite(v) else float(np.nextafter(v, 2.0))


def _homogeneous_check(graph):
    if isinstance(graph, ParallelSplit):
        raise DomainError("split graphs mix copy probabilities; thresholds need a "
                          "homogeneous graph")


def minimax_thresholds(graph, mode="bond", N_levels=(100,), trials=1000, seed_base=0, *,
                       cap=1.0, max_sites=10**7, max_radius=10**4, threads=1,
                       engine="auto") -> ThresholdSample:
    """Threshold sample for ``trials`` seeds ``seed_base + t``.

    ``engine`` is ``"auto"``, ``"dense"`` (crossing boxes only),
    ``"compiled"`` or ``"python"``; all of them return the same values.
    """
    graph = parse_graph(graph)
    _homogeneous_check(graph)
    site_mode = _check_mode(mode) == "site"
    levels = tuple(check_levels(N_levels, "N_levels", 1))
    trials = check_int(trials, "trials", 1)
    seed_base = check_seed(seed_base)
    seeds = np.arange(seed_base, seed_base + trials, dtype=np.int64)

    if is_crossing_graph(graph):
        runs = [(crossing_box(L), [tuple((0, y)) for y in range(L)], 0, (L,)) for L in levels]
    else:
        runs = [(graph, [tuple(graph.origin)], -1, levels)]

    columns = []
    hits = 0
    for g, srcs, axis, lv in runs:
        vals = np.empty((trials, len(lv)), np.float64)
        flags = np.zeros(trials, np.bool_)
        if axis >= 0 and engine in ("auto", "dense"):
            W, H = g.w, g.h

            def work(lo, hi, vals=vals, flags=flags, W=W, H=H):
                K.box_crossing_batch(seeds[lo:hi], W, H, site_mode, float(cap), max_sites,
                                     vals[lo:hi, 0], flags[lo:hi])

            run_chunks(trials, threads, work)
            columns.append(vals)
            hits += int(flags.sum())
            continue
        table = g.lower()
        use_compiled = engine == "compiled" or (
            engine == "auto" and table is not None
            and (max_radius + lv[-1] <= K.COORD_LIMIT or max_sites <= K.COORD_LIMIT))
        if use_compiled:
            if table is None:
                raise DomainError(f"graph kind {g.kind!r} has no compiled form")
            arrays = table.arrays()
            src = np.zeros((len(srcs), 4), np.int64)
            for i, s in enumerate(srcs):
                src[i, :len(s)] = s
            lv_arr = np.asarray(lv, np.int64)

            def work(lo, hi, arrays=arrays, src=src, lv_arr=lv_arr, vals=vals, flags=flags,
                     axis=axis):
                K.bottleneck_batch(*arrays, seeds[lo:hi], site_mode, src, axis, lv_arr,
                                   float(cap), max_sites, max_radius, vals[lo:hi],
                                   flags[lo:hi])
        else:
            def work(lo, hi, g=g, srcs=srcs, vals=vals, axis=axis, lv=lv):
                for t in range(lo, hi):
                    vals[t] = minimax_reference(g, int(seeds[t]), srcs, lv,
                                                site_mode=site_mode, target_axis=axis,
                                                cap=cap, max_sites=max_sites)
        run_chunks(trials, threads, work)
        columns.append(vals)
        hits += int(flags.sum())
    return ThresholdSample(np.hstack(columns), seeds, levels, float(cap), hits)


@dataclass(frozen=True)
class CurvePoint:
    p: float
    N: int
    trials: int
    survivors: int
    ci: tuple

    @property
    def p_hat(self):
        return self.survivors / self.trials


CURVE_COLUMNS = ("graph", "mode", "p", "N", "trials", "survivors", "p_hat_lo", "p_hat_hi")


@dataclass(frozen=True)
class PcEstimate:
    p_hat: float
    ci: tuple
    N_levels: tuple
    curve: dict
    trials_per_point: int
    threshold: float
    bracket: tuple
    converged: bool
    iterations: int
    graph: str = ""
    mode: str = "bond"
    sensitivity: dict = field(default_factory=dict)
    censored_above: float = 1.0
    budget_hits: int = 0

    def to_dict(self):
        return {
            "graph": self.graph,
            "mode": self.mode,
            "p_hat": self.p_hat,
            "ci": list(self.ci),
            "bracket": list(self.bracket),
            "converged": self.converged,
            "iterations": self.iterations,
            "threshold": self.threshold,
            "N_levels": list(self.N_levels),
            "trials_per_point": self.trials_per_point,
            "sensitivity": {str(k): v for k, v in sorted(self.sensitivity.items())},
            "censored_above": self.censored_above,
            "budget_hits": self.budget_hits,
        }

    def curve_rows(self):
        for (N, p), pt in sorted(self.curve.items()):
            yield (self.graph, self.mode, p, N, pt.trials, pt.survivors, pt.ci[0], pt.ci[1])

    def curve_csv(self):
        return to_csv(self.curve_rows(), CURVE_COLUMNS)


def bisect_crossing(survival, threshold, tol, max_iter):
    """Bisection for the crossing of a non-decreasing curve on [0, 1].

    Returns (lo, hi, iterations, converged, evaluated_points) with
    ``survival(lo) < threshold <= survival(hi)`` whenever a crossing exists.
    """
    lo, hi = 0.0, 1.0
    evaluated = [lo, hi]
    if survival(hi) < threshold:
        return lo, hi, 0, False, evaluated
    if survival(lo) >= threshold:
        return lo, lo, 0, True, evaluated
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        evaluated.append(mid)
        if survival(mid) >= threshold:
            hi = mid
        else:
            lo = mid
        it += 1
    return lo, hi, it, hi - lo <= tol, evaluated


class CriticalPointEstimator(BaseEstimator):
    """Finite-size critical-point estimate of a homogeneous percolation model.

    ``fit`` samples the per-seed minimax thresholds once and bisects the
    survival curve at the largest level; ``predict`` returns survival
    probabilities of the fitted sample.
    """

    def __init__(self, graph="z2-oriented", mode="bond", N_levels=(50, 100, 200),
                 trials=10000, tol=1e-3, threshold=None, seed=0, threads=1,
                 max_iter=60, max_sites=10**7, pilot_trials=256):
        self.graph = graph
        self.mode = mode
        self.N_levels = N_levels
        self.trials = trials
        self.tol = tol
        self.threshold = threshold
        self.seed = seed
        self.threads = threads
        self.max_iter = max_iter
        self.max_sites = max_sites
        self.pilot_trials = pilot_trials

    def _threshold(self, graph):
        if self.threshold is not None:
            t = check_probability(self.threshold, "threshold")
            if not 0.0 < t < 1.0:
                raise DomainError("threshold must lie strictly between 0 and 1")
            return t
        return CROSSING_THRESHOLD if is_crossing_graph(graph) else DEFAULT_THRESHOLD

    def fit(self, X=None, y=None):
        graph = parse_graph(self.graph)
        _check_mode(self.mode)
        levels = check_levels(self.N_levels, "N_levels", 1)
        trials = check_int(self.trials, "trials", 1)
        if not (isinstance(self.tol, (int, float)) and self.tol > 0):
            raise DomainError(f"tol must be positive, got {self.tol!r}")
        thr = self._threshold(graph)
        kw = dict(max_sites=self.max_sites, threads=self.threads)

        # A pilot run fixes a censoring cap well above the crossing so that
        # the bulk run never explores clusters that only matter far above it.
        n_pilot = min(trials, check_int(self.pilot_trials, "pilot_trials", 1))
        pilot = minimax_thresholds(graph, self.mode, levels, n_pilot, self.seed, **kw)
        cap = 1.0
        level = min(1.0, 3.0 * thr + 0.15)
        if level < 1.0:
            cap = min(1.0, pilot.quantile_point(level) + 0.02)
        vals = np.where(pilot.values >= cap, np.inf, pilot.values)
        hits = pilot.budget_hits
        if trials > n_pilot:
            rest = minimax_thresholds(graph, self.mode, levels, trials - n_pilot,
                                      self.seed + n_pilot, cap=cap, **kw)
            vals = np.vstack([vals, rest.values])
            hits += rest.budget_hits
        sample = ThresholdSample(vals, np.arange(self.seed, self.seed + trials), tuple(levels),
                                 cap, hits)

        lo, hi, it, ok, pts = bisect_crossing(sample.survival, thr, self.tol, self.max_iter)
        curve = {}
        for p in pts:
            for k, N in enumerate(levels):
                s = sample.survivors(p, k)
                curve[(N, p)] = CurvePoint(p, N, trials, s, wilson_interval(s, trials))
        a, b = wilson_interval(round(thr * trials), trials)
        ci = (min(lo, sample.quantile_point(a)), max(hi, sample.quantile_point(b)))
        sens = {}
        for t in (0.02, 0.10):
            if t != thr:
                slo, shi, _, _, _ = bisect_crossing(sample.survival, t, self.tol, self.max_iter)
                sens[t] = 0.5 * (slo + shi)
        self.sample_ = sample
        self.estimate_ = PcEstimate(
            p_hat=0.5 * (lo + hi), ci=ci, N_levels=tuple(levels), curve=curve,
            trials_per_point=trials, threshold=thr, bracket=(lo, hi), converged=ok,
            iterations=it, graph=graph_name(graph), mode=self.mode, sensitivity=sens,
            censored_above=cap, budget_hits=hits)
        self.p_hat_ = self.estimate_.p_hat
        self.ci_ = self.estimate_.ci
        return self

    def predict(self, p, N=None):
        """Survival probability at each p (largest level unless ``N`` is given)."""
        check_is_fitted(self, "sample_")
        k = -1 if N is None else self.sample_.levels.index(N)
        ps = np.atleast_1d(np.asarray(p, float))
        return np.array([self.sample_.survival(x, k) for x in ps])


def estimate_pc(graph, mode="bond", N_levels=(50, 100, 200), trials=10000, tol=1e-3,
                seed=0, threshold=None, **kw) -> PcEstimate:
    est = CriticalPointEstimator(graph, mode, tuple(N_levels), trials, tol, threshold,
                                 seed, **kw)
    return est.fit().estimate_


@dataclass(frozen=True)
class ChiEstimate:
    chi_hat: float
    ci95: tuple
    trials: int
    capped: int
    sd: float
    p_h: float
    radius_cap: int

    def to_dict(self):
        return {"p_h": self.p_h, "chi_hat": self.chi_hat, "ci95": list(self.ci95),
                "trials": self.trials, "capped": self.capped, "sd": self.sd,
                "radius_cap": self.radius_cap}


class ChiEstimator(BaseEstimator):
    """Mean cluster size of the origin in subcritical bond percolation on Z^2."""

    def __init__(self, p_h=0.3, trials=10000, radius_cap=1000, seed=0, threads=1,
                 max_sites=10**7):
        self.p_h = p_h
        self.trials = trials
        self.radius_cap = radius_cap
        self.seed = seed
        self.threads = threads
        self.max_sites = max_sites

    def fit(self, X=None, y=None):
        p_h = check_probability(self.p_h, "p_h")
        if p_h >= 0.5:
            raise DomainError(f"chi is infinite for p_h >= 1/2, got {p_h}")
        trials = check_int(self.trials, "trials", 1)
        cap = check_int(self.radius_cap, "radius_cap", 0)
        batch = run_survival_trials(
            SquareZ2(), EnvParams.homogeneous(p_h), 0, trials, self.seed,
            budget=ExplorationBudget(self.max_sites, 0, cap), threads=self.threads,
            stop_at_height=False)
        sizes = batch.sizes.astype(float)
        capped = int(np.count_nonzero(batch.terminations != int(Termination.FRONTIER_EMPTY)))
        mean = float(sizes.mean())
        sd = float(sizes.std(ddof=1)) if trials > 1 else 0.0
        self.sizes_ = batch.sizes
        self.estimate_ = ChiEstimate(mean, mean_ci(mean, sd, trials), trials, capped, sd,
                                     p_h, cap)
        self.chi_hat_ = mean
        return self

    def predict(self, X=None):
        check_is_fitted(self, "estimate_")
        return self.chi_hat_


def chi_estimate(p_h, trials=10000, radius_cap=1000, seed=0, **kw) -> ChiEstimate:
    return ChiEstimator(p_h, trials, radius_cap, seed, **kw).fit().estimate_


def graph_family(family):
    """Resolve a family name into (graphs, comparison pairs).

    ``"oriented_z"`` is oriented Z^2, Z^3, Z^4 compared consecutively;
    ``"ladder:<base>"`` is the base, its ladder and its Z_2 ladder, each
    ladder compared with the base.  A list of graphs compares each with the
    first one.
    """
    if isinstance(family, str):
        if family == "oriented_z":
            graphs = [OrientedZ(2), OrientedZ(3), OrientedZ(4)]
            return graphs, [(0, 1), (1, 2)]
        if family.startswith("ladder:"):
            base = parse_graph(family.split(":", 1)[1])
            return [base, make_ladder(base), make_ladder(base, 2)], [(0, 1), (0, 2)]
        family = [family]
    graphs = [parse_graph(g) for g in family]
    return graphs, [(0, i) for i in range(1, len(graphs))]


@dataclass(frozen=True)
class Witness:
    small: str
    large: str
    p_star: float
    survival_small: object
    survival_large: object
    ratio: float
    separated: bool
    pc_disjoint: bool

    @property
    def verdict(self):
        return "pass" if self.separated and self.pc_disjoint else "inconclusive"

    def to_dict(self):
        return {"small": self.small, "large": self.large, "p_star": self.p_star,
                "survival_small": _surv_dict(self.survival_small),
                "survival_large": _surv_dict(self.survival_large),
                "ratio": self.ratio, "ci_disjoint": self.separated,
                "pc_ci_disjoint": self.pc_disjoint, "verdict": self.verdict}


def _surv_dict(s):
    return {"p_hat": s.p_hat, "ci95": list(s.ci95), "survivors": s.survivors,
            "trials": s.trials, "N": s.N}


@dataclass(frozen=True)
class MonotonicityReport:
    estimates: tuple
    witnesses: tuple
    mode: str
    N: int

    @property
    def verdict(self):
        return "pass" if all(w.verdict == "pass" for w in self.witnesses) else "inconclusive"

    def to_dict(self):
        return {"mode": self.mode, "N": self.N, "verdict": self.verdict,
                "estimates": [e.to_dict() for e in self.estimates],
                "witnesses": [w.to_dict() for w in self.witnesses]}


def monotonicity_report(family="oriented_z", mode="bond", N=200, trials=10000, seed=0, *,
                        tol=1e-3, threshold=None, ratio=5.0, threads=1) -> MonotonicityReport:
    """p_hat per graph and a direct strictness witness for each compared pair.

    The witness parameter is the smaller graph's p_hat; survival there is
    re-measured for both graphs by plain exploration (not from the minimax
    sample), and the pair passes when the larger graph survives at least
    ``ratio`` times as often with disjoint Wilson intervals.
    """
    graphs, pairs = graph_family(family)
    N = check_int(N, "N", 1)
    ests = [estimate_pc(g, mode, (N,), trials, tol, seed, threshold, threads=threads)
            for g in graphs]
    witnesses = []
    site = mode == "site"
    for i, j in pairs:
        p_star = ests[i].p_hat
        env = EnvParams.homogeneous(p_star)
        s_small = survival_prob(graphs[i], env, N, trials, seed, site_mode=site,
                                threads=threads)
        s_large = survival_prob(graphs[j], env, N, trials, seed, site_mode=site,
                                threads=threads)
        r = s_large.p_hat / s_small.p_hat if s_small.p_hat > 0 else math.inf
        sep = r >= ratio and intervals_disjoint(s_small.ci95, s_large.ci95)
        witnesses.append(Witness(graph_name(graphs[i]), graph_name(graphs[j]), p_star,
                                 s_small, s_large, r, sep,
                                 intervals_disjoint(ests[i].ci, ests[j].ci)
                                 and ests[j].p_hat < ests[i].p_hat))
    return MonotonicityReport(tuple(ests), tuple(witnesses), mode, N)
