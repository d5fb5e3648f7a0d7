"""Numeric checkers for the layered-environment results.

Each checker returns a :class:`Verdict` carrying a JSON summary and the raw
series behind it.  A verdict is either ``"pass"`` or ``"inconclusive"``:
the statements being probed are limit statements, so a finite run can
support them but never refute them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._parallel import run_chunks
from ._validation import DomainError, check_int, check_levels, check_probability, check_seed
from .environment import EnvParams, LayeredEnv
from .estimator import ChiEstimate, chi_estimate
from .exploration import ExplorationBudget, layer_radii, run_survival_trials
from .lattice import Hex
from .serialize import to_csv, to_json
from .stats import mean_ci, wilson_interval

ALL_UP = (0, 1, 2, 3)
ENTRY_CAP = 32


@dataclass
class Verdict:
    check: str
    params: dict
    statistic: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)
    series: list = field(default_factory=list)
    series_columns: tuple = ()

    @property
    def verdict(self):
        return "pass" if self.passed else "inconclusive"

    def to_dict(self):
        return {"check": self.check, "params": self.params, "statistic": self.statistic,
                "threshold": self.threshold, "verdict": self.verdict,
                "details": self.details}

    def to_json(self):
        return to_json(self.to_dict())

    def series_csv(self):
        return to_csv(self.series, self.series_columns)


def _check_delta(delta):
    delta = check_probability(delta, "delta")
    if delta <= 0.0:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    return delta


def _check_subcritical(p_h):
    p_h = check_probability(p_h, "p_h")
    if p_h >= 0.5:
        raise DomainError(f"p_h must be below 1/2, got {p_h}")
    return p_h


# -- subcritical bound ------------------------------------------------------

@dataclass(frozen=True)
class SubcriticalBound:
    delta: float
    p_h: float
    chi: float
    chi_ci: tuple
    bound: float
    bound_ci: tuple

    def to_dict(self):
        return {"delta": self.delta, "p_h": self.p_h, "chi": self.chi,
                "chi_ci": list(self.chi_ci), "bound": self.bound,
                "bound_ci": list(self.bound_ci)}


def subcritical_bound(delta, p_h, chi=None, *, trials=10000, seed=0, threads=1):
    """delta^2 / (16 chi(p_h)); below it bad layers block the cluster.

    ``chi`` may be a number, a :class:`ChiEstimate`, or ``None`` to estimate
    it here.  A supplied number is taken as exact.
    """
    delta = _check_delta(delta)
    p_h = _check_subcritical(p_h)
    if chi is None:
        chi = chi_estimate(p_h, trials, seed=seed, threads=threads)
    if isinstance(chi, ChiEstimate):
        value, ci = chi.chi_hat, tuple(chi.ci95)
    else:
        value = float(chi)
        if not value >= 1.0:
            raise DomainError(f"chi must be at least 1, got {value}")
        ci = (value, value)
    lo = max(ci[0], 1.0)
    return SubcriticalBound(delta, p_h, value, ci, delta**2 / (16.0 * value),
                            (delta**2 / (16.0 * ci[1]), delta**2 / (16.0 * lo)))


# -- bad blocks -------------------------------------------------------------

def block_height(delta, n):
    """c_n = (2 / delta)^n."""
    return (2.0 / delta) ** n


def block_window(delta, n):
    """Integer start heights j with c_n <= j < c_{n+1} - n, as [lo, hi)."""
    lo = math.ceil(block_height(delta, n))
    hi = math.ceil(block_height(delta, n + 1) - n)
    return lo, max(lo, hi)


def block_failure_bound(delta, n):
    """Upper bound exp(-(2^n / n)(2/delta - 1)) on P(no bad block in window n)."""
    return math.exp(-(2.0**n / n) * (2.0 / delta - 1.0))


@dataclass(frozen=True)
class BadBlock:
    n: int
    start: int | None
    window: tuple
    status: str  # "found", "absent" or "degenerate"

    @property
    def length(self):
        return self.n

    @property
    def found(self):
        return self.status == "found"

    def to_dict(self):
        return {"n": self.n, "start": self.start, "length": self.n,
                "window": list(self.window), "status": self.status}


def locate_bad_blocks(env, delta=None, n_max=6, max_layers=10**9):
    """First run of n consecutive bad layers in each window, n = 1..n_max.

    ``env`` is a :class:`LayeredEnv` or a seed; with a seed the layer types
    are drawn with bad probability ``delta``.
    """
    if isinstance(env, LayeredEnv):
        seed = env.seed
        if delta is None:
            delta = env.params.delta
        elif float(delta) != env.params.delta:
            raise DomainError(f"delta {delta} differs from the environment's "
                              f"{env.params.delta}")
    else:
        seed = check_seed(env)
        if delta is None:
            raise DomainError("delta is required when env is a seed")
    delta = _check_delta(delta)
    n_max = check_int(n_max, "n_max", 1)
    out = []
    for n in range(1, n_max + 1):
        lo, hi = block_window(delta, n)
        if hi - lo < 1:
            out.append(BadBlock(n, None, (lo, hi), "degenerate"))
            continue
        if hi + n > max_layers:
            raise DomainError(f"window for n={n} ends at height {hi + n}, above "
                              f"max_layers={max_layers}")
        j = K.first_bad_run(seed, delta, lo, hi, n)
        out.append(BadBlock(n, None if j < 0 else int(j), (lo, hi),
                            "absent" if j < 0 else "found"))
    return out


def bad_block_check(delta=0.5, n_max=6, seeds=200, seed_base=0):
    """Fraction of seeds with a block in every window against the union bound."""
    delta = _check_delta(delta)
    if delta >= 1.0:
        raise DomainError("the block check needs delta < 1")
    seeds = list(range(seed_base, seed_base + seeds)) if isinstance(seeds, int) else list(seeds)
    rows = []
    complete = 0
    for s in seeds:
        blocks = locate_bad_blocks(s, delta, n_max)
        complete += all(b.found for b in blocks)
        rows.extend({"seed": s, "n": b.n, "start": b.start, "window_lo": b.window[0],
                     "window_hi": b.window[1], "status": b.status} for b in blocks)
    frac = complete / len(seeds)
    bound = 1.0 - sum(block_failure_bound(delta, n) for n in range(1, n_max + 1))
    return Verdict("bad_blocks", {"delta": delta, "n_max": n_max, "seeds": len(seeds)},
                   frac, bound, frac >= bound, {"complete": complete},
                   rows, ("seed", "n", "start", "window_lo", "window_hi", "status"))


# -- block crossing ---------------------------------------------------------

def entry_envelope(delta, n):
    """c_{n+1} (ln c_{n+1})^2, the radius containing the entry cluster."""
    c = block_height(delta, n + 1)
    return c * math.log(c) ** 2


def diamond_size(w):
    return 2 * w * w + 2 * w + 1


def entry_sites(w):
    return [(a, b, 0) for a in range(-w, w + 1) for b in range(abs(a) - w, w - abs(a) + 1)]


@dataclass(frozen=True)
class BlockCrossingEstimate:
    n: int
    p_b: float
    p_h: float
    entry_width: int
    trials: int
    p_hat: float
    se: float
    ci95: tuple
    first_moment_bound: float
    method: str

    def to_dict(self):
        return {"n": self.n, "p_b": self.p_b, "p_h": self.p_h,
                "entry_width": self.entry_width, "entry_sites": diamond_size(self.entry_width),
                "trials": self.trials, "p_hat": self.p_hat, "se": self.se,
                "ci95": list(self.ci95), "first_moment_bound": self.first_moment_bound,
                "method": self.method}


def block_crossing_prob(n, delta, p_b, p_h, entry_width=None, trials=10000, seed=0, *,
                        chi=None, entry_cap=ENTRY_CAP, method="importance", threads=1):
    """Probability that a cluster entering n bad layers leaves through the top.

    The entry set is the layer diamond |x| + |y| <= entry_width, which by
    default is the growth envelope for window n capped at ``entry_cap``.
    ``method="importance"`` conditions every layer on being left (unbiased,
    usable down to tiny probabilities); ``"direct"`` runs plain explorations.
    ``chi`` feeds the first-moment bound (4 chi p_b)^n #entry; it is
    estimated when not given.
    """
    n = check_int(n, "n", 1)
    delta = _check_delta(delta)
    p_b = check_probability(p_b, "p_b")
    p_h = _check_subcritical(p_h)
    trials = check_int(trials, "trials", 1)
    seed = check_seed(seed)
    if entry_width is None:
        entry_width = int(min(entry_envelope(delta, n), check_int(entry_cap, "entry_cap", 0)))
    w = check_int(entry_width, "entry_width", 0, K.COORD_LIMIT // 4)
    if chi is None:
        chi = chi_estimate(p_h, seed=seed, threads=threads)
    chi = chi.chi_hat if isinstance(chi, ChiEstimate) else float(chi)
    envelope = (4.0 * chi * p_b) ** n * diamond_size(w)

    if method == "importance":
        weights = np.empty(trials, np.float64)

        def work(lo, hi):
            K.block_crossing_weights(seed, n, lo, p_b, p_h, w, weights[lo:hi])

        run_chunks(trials, threads, work)
        p_hat = float(weights.mean())
        se = float(weights.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
        ci = tuple(min(1.0, max(0.0, x)) for x in mean_ci(p_hat, se * math.sqrt(trials), trials))
    elif method == "direct":
        batch = run_survival_trials(Hex(True, ALL_UP), EnvParams(1.0, p_b, p_b, p_h), n,
                                    trials, seed, sources=entry_sites(w), threads=threads,
                                    budget=ExplorationBudget(10**7, n, 10**4))
        k = batch.survivors(n)
        p_hat = k / trials
        se = math.sqrt(p_hat * (1.0 - p_hat) / trials)
        ci = wilson_interval(k, trials)
    else:
        raise DomainError(f"method must be 'importance' or 'direct', got {method!r}")
    return BlockCrossingEstimate(n, p_b, p_h, w, trials, p_hat, se, ci, envelope, method)


def crossing_decay_check(delta=0.5, p_h=0.2, p_b=None, n_values=range(2, 9), trials=10000,
                         seed=0, *, entry_width=None, entry_cap=ENTRY_CAP, chi=None,
                         sigmas=4.0, threads=1):
    """Log-linear decay of block-crossing probability in the block length.

    ``p_b`` defaults to half the subcritical bound.  Passes when the fitted
    slope of log P(cross) against n is below zero by ``sigmas`` standard
    errors and p_b satisfies the bound.
    """
    delta = _check_delta(delta)
    p_h = _check_subcritical(p_h)
    bound = subcritical_bound(delta, p_h, chi, seed=seed, threads=threads)
    if p_b is None:
        p_b = 0.5 * bound.bound
    p_b = check_probability(p_b, "p_b")
    ns = [check_int(n, "n", 1) for n in n_values]
    if len(ns) < 2:
        raise DomainError("need at least two block lengths")
    ests = [block_crossing_prob(n, delta, p_b, p_h, entry_width, trials, seed,
                                chi=bound.chi, entry_cap=entry_cap, threads=threads)
            for n in ns]
    rows = [{"n": e.n, "entry_width": e.entry_width, "p_hat": e.p_hat, "se": e.se,
             "ci_lo": e.ci95[0], "ci_hi": e.ci95[1],
             "first_moment_bound": e.first_moment_bound} for e in ests]
    slope = se_slope = math.nan
    usable = all(e.p_hat > 0 and e.se > 0 for e in ests)
    if usable:
        x = np.array(ns, float)
        y = np.log([e.p_hat for e in ests])
        wts = np.array([(e.p_hat / e.se) ** 2 for e in ests])
        xm = np.sum(wts * x) / wts.sum()
        ym = np.sum(wts * y) / wts.sum()
        sxx = np.sum(wts * (x - xm) ** 2)
        slope = float(np.sum(wts * (x - xm) * (y - ym)) / sxx)
        se_slope = float(1.0 / math.sqrt(sxx))
    statistic = slope + sigmas * se_slope
    below = p_b < bound.bound
    passed = bool(usable and below and statistic < 0.0)
    params = {"delta": delta, "p_h": p_h, "p_b": p_b, "n_values": ns, "trials": trials,
              "seed": seed, "sigmas": sigmas}
    details = {"slope": slope, "slope_se": se_slope, "chi": bound.chi,
               "chi_ci": list(bound.chi_ci), "bound": bound.bound,
               "below_bound": below, "criterion": 16.0 * bound.chi * p_b / delta**2}
    return Verdict("crossing_decay", params, statistic, 0.0, passed, details, rows,
                   ("n", "entry_width", "p_hat", "se", "ci_lo", "ci_hi",
                    "first_moment_bound"))


# -- growth of layer radii --------------------------------------------------

def growth_ratio_check(p_h=0.3, N=300, seeds=20, n_min=8, *, seed_base=0, max_radius=10**4):
    """R_n / (n (ln n)^2) for n in [n_min, N] with every upward edge open."""
    p_h = _check_subcritical(p_h)
    N = check_int(N, "N", 2)
    n_min = check_int(n_min, "n_min", 2, N)
    seeds = list(range(seed_base, seed_base + seeds)) if isinstance(seeds, int) else list(seeds)
    params = EnvParams(0.0, 1.0, 1.0, p_h)
    rows = []
    per_seed = {}
    flagged = []
    min_excess = math.inf
    capped = 0
    for s in seeds:
        lr = layer_radii("hex_h", params, N, s, max_radius)
        ratio = lr.ratio(n_min)
        m = float(np.nanmax(ratio[n_min:]))
        per_seed[str(s)] = m
        if m >= 1.0:
            flagged.append(s)
        capped += bool(lr.capped)
        min_excess = min(min_excess, int(np.min(lr.radii - np.arange(N + 1))))
        rows.extend({"seed": s, "n": n, "radius": int(lr.radii[n]),
                     "size": int(lr.sizes[n]),
                     "ratio": None if n < n_min else float(ratio[n])}
                    for n in range(N + 1))
    stat = max(per_seed.values())
    passed = not flagged and min_excess >= 0 and capped == 0
    return Verdict("growth_ratio", {"p_h": p_h, "N": N, "seeds": len(seeds), "n_min": n_min},
                   stat, 1.0, passed,
                   {"per_seed_max": per_seed, "flagged": flagged,
                    "min_radius_minus_n": min_excess, "capped": capped},
                   rows, ("seed", "n", "radius", "size", "ratio"))


# -- critical horizontal layers ---------------------------------------------

def critical_layers_experiment(p_b=0.2, N_levels=(50, 100, 200), trials=10000, seed=0, *,
                               p_h=0.5, min_survival=0.01, compare_full=True, threads=1,
                               max_sites=10**6, max_radius=10**4):
    """Survival to height N on Z^2 x Z+ with critical horizontal layers.

    Only upward direction 0 is kept, which turns the hexagonal graph into
    Z^2 x Z+ with the same edge keys, so the full graph run on the same
    seeds dominates it trial by trial.  Passes when the lower confidence
    bound at the top level is at least ``min_survival``.
    """
    p_b = check_probability(p_b, "p_b")
    if p_b <= 0.0:
        raise DomainError("p_b must be positive")
    p_h = check_probability(p_h, "p_h")
    levels = check_levels(N_levels, "N_levels")
    trials = check_int(trials, "trials", 1)
    params = EnvParams(1.0, p_b, p_b, p_h)
    top = levels[-1]
    budget = ExplorationBudget(max_sites, top, max_radius)
    sub = run_survival_trials(Hex(True, (0,)), params, top, trials, seed, budget=budget,
                              threads=threads)
    rows = []
    for n in levels:
        e = sub.estimate(n)
        rows.append({"graph": "z2xzplus", "N": n, "trials": trials, "survivors": e.survivors,
                     "p_hat": e.p_hat, "ci_lo": e.ci95[0], "ci_hi": e.ci95[1],
                     "truncated": e.truncated})
    details = {}
    if compare_full:
        full = run_survival_trials(Hex(True, ALL_UP), params, top, trials, seed,
                                   budget=budget, threads=threads)
        clean = (sub.terminations != K.SITE_BUDGET) & (full.terminations != K.SITE_BUDGET)
        viol = int(np.count_nonzero(clean & (sub.heights >= top) & (full.heights < top)))
        details["domination_violations"] = viol
        for n in levels:
            e = full.estimate(n)
            rows.append({"graph": "hex_h", "N": n, "trials": trials, "survivors": e.survivors,
                         "p_hat": e.p_hat, "ci_lo": e.ci95[0], "ci_hi": e.ci95[1],
                         "truncated": e.truncated})
    p = [r["p_hat"] for r in rows[:len(levels)]]
    non_increasing = all(b <= a for a, b in zip(p, p[1:]))
    lower = rows[len(levels) - 1]["ci_lo"]
    details.update({"non_increasing": non_increasing, "p_hat_top": p[-1],
                    "plateau": "supported" if lower >= min_survival else "unresolved"})
    passed = non_increasing and lower >= min_survival and not details.get("domination_violations")
    return Verdict("critical_layers",
                   {"p_b": p_b, "p_h": p_h, "delta": 1.0, "N_levels": levels,
                    "trials": trials, "seed": seed},
                   lower, min_survival, passed, details, rows,
                   ("graph", "N", "trials", "survivors", "p_hat", "ci_lo", "ci_hi",
                    "truncated"))
