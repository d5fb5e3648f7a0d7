"""Budgeted cluster exploration on implicit infinite graphs.

Two engines share one contract.  The compiled engine runs on the direction
table of a graph; the reference engine walks ``GraphSpec.out_edges`` in pure
Python and accepts any graph, including the split ladder.  Both draw every
state from the same keyed uniforms, so they agree site for site.

Exploration is layered by default: the current height is exhausted through
height-preserving edges before any site one layer up is expanded, which is
the recursion ``C_n = cluster_n(up-neighbors of C_{n-1})`` used for R_n.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._parallel import run_chunks
from ._validation import DomainError, check_int, check_levels, check_probability, check_seed
from .environment import EnvParams, LayeredEnv
from .lattice import GraphSpec, Hex, parse_graph
from .serialize import to_csv
from .stats import wilson_interval


class Termination(enum.IntEnum):
    FRONTIER_EMPTY = K.FRONTIER_EMPTY
    HEIGHT_REACHED = K.HEIGHT_REACHED
    SITE_BUDGET = K.SITE_BUDGET
    RADIUS_BUDGET = K.RADIUS_BUDGET


@dataclass(frozen=True)
class ExplorationBudget:
    max_sites: int = 10**6
    max_height: int = 1000
    max_layer_radius: int = 10**4

    def __post_init__(self):
        check_int(self.max_sites, "max_sites", 1)
        check_int(self.max_height, "max_height", 0)
        check_int(self.max_layer_radius, "max_layer_radius", 0)

    def fits_compiled(self):
        # packed site coordinates must stay inside the 15-bit fields
        return (self.max_height + self.max_layer_radius <= K.COORD_LIMIT
                or self.max_sites <= K.COORD_LIMIT)


@dataclass(frozen=True)
class ClusterReport:
    size: int
    max_height_reached: int
    per_layer_radius: dict
    termination: Termination
    sites: frozenset | None = field(default=None, compare=False, repr=False)

    @property
    def complete(self):
        return self.termination is Termination.FRONTIER_EMPTY

    def radii(self, n_max=None):
        """R_0..R_{n_max} as an int array, -1 for layers not reached."""
        top = self.max_height_reached if n_max is None else n_max
        out = np.full(max(top, -1) + 1, -1, np.int64)
        for n, r in self.per_layer_radius.items():
            if n <= top:
                out[n] = r
        return out


def _as_sources(graph, origin, sources):
    if sources is not None:
        return [tuple(int(c) for c in s) for s in sources]
    if origin is None:
        origin = graph.origin
    origin = tuple(int(c) for c in origin)
    if not graph.contains(origin):
        raise DomainError(f"origin {origin} is not a site of the graph")
    return [origin]


def _sources_array(srcs):
    arr = np.zeros((len(srcs), 4), np.int64)
    for i, s in enumerate(srcs):
        arr[i, :len(s)] = s
    return arr


def _env_tuple(env):
    p = env.params
    return env.seed, p.delta, p.p_g, p.p_b, p.p_h


def explore(graph, env: LayeredEnv, origin=None, budget: ExplorationBudget | None = None,
            *, sources=None, site_mode=False, order="layered", stop_at_height=False,
            keep_sites=False, engine="auto") -> ClusterReport:
    """Explore the open cluster of ``origin`` (or of a set of ``sources``).

    ``order`` is ``"layered"`` (breadth first, layer by layer) or ``"dfs"``
    (upward edges first; only the reached height is meaningful then).
    ``stop_at_height`` ends the run as soon as ``budget.max_height`` is
    reached.  In ``site_mode`` sites rather than edges are random; a site at
    height n is open with the layered probability of layer n.
    """
    graph = parse_graph(graph)
    budget = budget or ExplorationBudget()
    if order not in ("layered", "dfs"):
        raise DomainError(f"order must be 'layered' or 'dfs', got {order!r}")
    srcs = _as_sources(graph, origin, sources)
    table = graph.lower()
    if engine == "auto":
        engine = "compiled" if table is not None and budget.fits_compiled() else "python"
    if engine == "compiled":
        if table is None:
            raise DomainError(f"graph kind {graph.kind!r} has no compiled form")
        return _explore_compiled(table, env, srcs, budget, site_mode, order,
                                 stop_at_height, keep_sites, graph)
    if engine != "python":
        raise DomainError(f"unknown engine {engine!r}")
    return explore_reference(graph, env, srcs, budget, site_mode=site_mode,
                             stop_at_height=stop_at_height, keep_sites=keep_sites)


def _explore_compiled(table, env, srcs, budget, site_mode, order, stop_at_height,
                      keep_sites, graph):
    n, maxh, term, radii, coords, _ = K.explore_kernel(
        *table.arrays(), *_env_tuple(env), bool(site_mode), _sources_array(srcs),
        budget.max_sites, budget.max_height, budget.max_layer_radius,
        bool(stop_at_height), order == "dfs")
    per_layer = {int(h): int(r) for h, r in enumerate(radii) if r >= 0}
    sites = None
    if keep_sites:
        nd = len(graph.origin)
        sites = frozenset(tuple(int(x) for x in row[:nd]) for row in coords)
    return ClusterReport(int(n), int(maxh), per_layer, Termination(int(term)), sites)


def explore_reference(graph: GraphSpec, env: LayeredEnv, sources, budget: ExplorationBudget,
                      *, site_mode=False, stop_at_height=False, keep_sites=False):
    """Pure-Python layered exploration with the same semantics as the kernel."""
    visited = set()
    per_layer = {}
    maxh = -1
    height_capped = radius_capped = False
    cur, nxt = deque(), deque()

    def admit(v, h):
        nonlocal maxh
        visited.add(v)
        r = graph.radius(v)
        per_layer[h] = max(per_layer.get(h, -1), r)
        maxh = max(maxh, h)

    def report(term):
        return ClusterReport(len(visited), maxh, dict(per_layer), term,
                             frozenset(visited) if keep_sites else None)

    for s in sources:
        h = graph.height(s)
        if h > budget.max_height:
            height_capped = True
            continue
        if site_mode and not env.is_site_open(s, h):
            continue
        if s in visited:
            continue
        admit(s, h)
        cur.append(s)
        if stop_at_height and h >= budget.max_height:
            return report(Termination.HEIGHT_REACHED)

    while cur or nxt:
        if not cur:
            cur, nxt = nxt, cur
        v = cur.popleft()
        h = graph.height(v)
        for e in graph.out_edges(v):
            w = tuple(e.head)
            if w in visited or not graph.contains(w):
                continue
            hw = graph.height(w)
            if site_mode:
                if not env.is_site_open(w, hw):
                    continue
            elif not env.is_open(e):
                continue
            if hw > budget.max_height:
                height_capped = True
                continue
            if graph.radius(w) > budget.max_layer_radius:
                radius_capped = True
                continue
            admit(w, hw)
            (cur if hw == h else nxt).append(w)
            if stop_at_height and hw >= budget.max_height:
                return report(Termination.HEIGHT_REACHED)
            if len(visited) >= budget.max_sites:
                return report(Termination.SITE_BUDGET)
    if radius_capped:
        return report(Termination.RADIUS_BUDGET)
    if height_capped:
        return report(Termination.HEIGHT_REACHED)
    return report(Termination.FRONTIER_EMPTY)


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    reached: bool
    height: int
    size: int
    termination: Termination


RECORD_COLUMNS = ("trial", "seed", "reached", "height", "size", "termination")


@dataclass(frozen=True)
class SurvivalEstimate:
    N: int
    trials: int
    survivors: int
    p_hat: float
    ci95: tuple
    truncated: int = 0
    records: tuple = field(default=(), compare=False, repr=False)

    def records_csv(self):
        return records_to_csv(self.records)


def records_to_csv(records):
    rows = [(r.trial, r.seed, int(r.reached), r.height, r.size, r.termination.name)
            for r in records]
    return to_csv(rows, RECORD_COLUMNS)


@dataclass(frozen=True)
class TrialBatch:
    """Per-trial outcomes of survival runs to height ``N``."""

    seeds: np.ndarray
    heights: np.ndarray
    sizes: np.ndarray
    terminations: np.ndarray
    N: int

    def survivors(self, level):
        return int(np.count_nonzero(self.heights >= level))

    def truncated(self, level):
        # runs stopped by the site or radius budget below ``level``
        cut = (self.terminations == K.SITE_BUDGET) | (self.terminations == K.RADIUS_BUDGET)
        return int(np.count_nonzero(cut & (self.heights < level)))

    def estimate(self, level, with_records=False):
        k = self.survivors(level)
        t = self.seeds.shape[0]
        records = ()
        if with_records:
            records = tuple(
                TrialRecord(i, int(self.seeds[i]), bool(self.heights[i] >= level),
                            int(self.heights[i]), int(self.sizes[i]),
                            Termination(int(self.terminations[i])))
                for i in range(t))
        return SurvivalEstimate(level, t, k, k / t, wilson_interval(k, t),
                                self.truncated(level), records)


def run_survival_trials(graph, params: EnvParams, N, trials, seed_base=0, *,
                        budget=None, site_mode=False, threads=1, engine="auto",
                        sources=None, origin=None, stop_at_height=True) -> TrialBatch:
    """Run ``trials`` explorations to height ``N`` with seeds ``seed_base + i``.

    With ``stop_at_height=False`` every cluster is explored completely (up to
    the budget), which is what cluster-size statistics need.
    """
    graph = parse_graph(graph)
    N = check_int(N, "N", 0)
    trials = check_int(trials, "trials", 1)
    seed_base = check_seed(seed_base)
    check_seed(seed_base + trials - 1, "seed_base + trials - 1")
    base = budget or ExplorationBudget()
    budget = ExplorationBudget(base.max_sites, N, base.max_layer_radius)
    srcs = _as_sources(graph, origin, sources)
    seeds = np.arange(seed_base, seed_base + trials, dtype=np.int64)
    heights = np.empty(trials, np.int64)
    sizes = np.empty(trials, np.int64)
    terms = np.empty(trials, np.int64)
    table = graph.lower()
    if engine == "auto":
        engine = "compiled" if table is not None and budget.fits_compiled() else "python"

    if engine == "compiled":
        arrays = table.arrays()
        src = _sources_array(srcs)

        def work(lo, hi):
            K.survival_batch(*arrays, seeds[lo:hi], params.delta, params.p_g, params.p_b,
                             params.p_h, bool(site_mode), src, budget.max_sites,
                             budget.max_height, budget.max_layer_radius,
                             bool(stop_at_height), heights[lo:hi], sizes[lo:hi], terms[lo:hi])
    elif engine == "python":
        def work(lo, hi):
            for i in range(lo, hi):
                env = LayeredEnv(params, int(seeds[i]))
                rep = explore_reference(graph, env, srcs, budget, site_mode=site_mode,
                                        stop_at_height=stop_at_height)
                heights[i] = rep.max_height_reached
                sizes[i] = rep.size
                terms[i] = int(rep.termination)
    else:
        raise DomainError(f"unknown engine {engine!r}")
    run_chunks(trials, threads, work)
    return TrialBatch(seeds, heights, sizes, terms, N)


def survival_prob(graph, env_params: EnvParams, N, trials, seed_base=0, *, budget=None,
                  site_mode=False, threads=1, records=False, engine="auto") -> SurvivalEstimate:
    """Fraction of trials whose cluster reaches height ``N``, with a Wilson 95% CI."""
    batch = run_survival_trials(graph, env_params, N, trials, seed_base, budget=budget,
                                site_mode=site_mode, threads=threads, engine=engine)
    return batch.estimate(batch.N, with_records=records)


def survival_curve(graph, env_params: EnvParams, N_levels, trials, seed_base=0, **kw):
    """Survival estimates at every level of ``N_levels`` from one batch of runs."""
    levels = check_levels(N_levels, "N_levels", 0)
    batch = run_survival_trials(graph, env_params, levels[-1], trials, seed_base, **kw)
    return [batch.estimate(n) for n in levels]


@dataclass(frozen=True)
class LayerRadii:
    radii: np.ndarray
    sizes: np.ndarray
    capped: bool
    extinct_at: int | None

    def ratio(self, n_min=2):
        """R_n / (n (ln n)^2) for n >= n_min (NaN where the layer is empty)."""
        n = np.arange(len(self.radii), dtype=float)
        out = np.full(len(self.radii), np.nan)
        sl = slice(max(n_min, 2), None)
        r = self.radii[sl].astype(float)
        r[r < 0] = np.nan
        out[sl] = r / (n[sl] * np.log(n[sl]) ** 2)
        return out


def layer_radii(graph="hex_h", env_params: EnvParams | None = None, N=100, seed=0,
                max_radius=10**4, engine="auto") -> LayerRadii:
    """Per-layer radii R_0..R_N of the origin cluster when upward edges are all open."""
    graph = parse_graph(graph)
    env_params = env_params or EnvParams(0.0, 1.0, 1.0, 0.3)
    if env_params.p_g != 1.0 or env_params.p_b != 1.0 and env_params.delta > 0:
        raise DomainError("layer radii require every upward edge open (p_g = 1, and "
                          "p_b = 1 unless delta = 0)")
    if check_probability(env_params.p_h, "p_h") >= 0.5:
        raise DomainError(f"layer radii require p_h < 1/2, got {env_params.p_h}")
    N = check_int(N, "N", 0)
    seed = check_seed(seed)
    max_radius = check_int(max_radius, "max_radius", 0)
    dense = isinstance(graph, Hex) and graph.horizontal and graph.up_dirs == (0, 1, 2, 3)
    if engine == "auto":
        engine = "dense" if dense else "generic"
    if engine == "dense":
        if not dense:
            raise DomainError("the dense engine handles the full hexagonal graph only")
        if max_radius + N > K.COORD_LIMIT:
            max_radius = K.COORD_LIMIT - N
        radii, sizes, capped = K.hex_layer_radii(seed, env_params.p_h, N, max_radius)
    else:
        env = LayeredEnv(env_params, seed)
        rep = explore(graph, env, budget=ExplorationBudget(10**8, N, max_radius),
                      keep_sites=True)
        radii = rep.radii(N)
        sizes = np.zeros(N + 1, np.int64)
        for v in rep.sites:
            sizes[graph.height(v)] += 1
        capped = rep.termination in (Termination.RADIUS_BUDGET, Termination.SITE_BUDGET)
    empty = np.nonzero(radii < 0)[0]
    extinct = int(empty[0]) if empty.size else None
    return LayerRadii(np.asarray(radii), np.asarray(sizes), bool(capped), extinct)
