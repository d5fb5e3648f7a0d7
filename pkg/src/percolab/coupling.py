"""Exploration coupling of percolation on G with its split ladder.

The red process explores the cluster of the origin in a base graph G one
boundary edge (site) at a time.  Each test draws fresh states of the split
ladder: the copy of the edge at the current witness height (rule i) or, if
that is closed, an unused parallel vertical copy at the tail together with
the edge copy one level up (rule ii).  A test succeeds with probability
f(p) = p + (1 - p) q p with 1 - p = (1 - q)^Delta, independently of the
past, and every red vertex keeps a witness connected to (o, 0) in the
ladder.

Ladder randomness lives in its own key namespaces, so the red process and
plain Bernoulli(f(p)) percolation on G are independent and compared only in
law.
"""

from __future__ import annotations

import heapq
import itertools
from collections import Counter, deque
from dataclasses import dataclass, field

from ._parallel import run_chunks
from ._validation import DomainError, check_int, check_probability, check_seed
from .lattice import VERTICAL_DIR, GraphSpec, parallel_probability, parse_graph
from .rng import NS_COUPLING_EDGE, NS_COUPLING_SITE, NS_COUPLING_VERTICAL, uniform
from .serialize import to_json

RULE_DIRECT = "i"
RULE_DETOUR = "ii"
RULE_NONE = "none"


def f(p, delta):
    """Red-test success probability p + (1 - p) q p with 1 - p = (1 - q)^delta."""
    p = check_probability(p, "p")
    delta = check_int(delta, "delta", 1)
    q = parallel_probability(p, delta)
    return p + (1.0 - p) * q * p


def f_layered(p_h, p_v, delta):
    """Red-test probability when ladder rungs are open with ``p_v`` instead of ``p_h``.

    This is our reading of the asymmetric analogue (Z^2 x Z+ with horizontal
    p_h and vertical p_v): p_h + (1 - p_h) q p_h with 1 - p_v = (1 - q)^delta.
    """
    p_h = check_probability(p_h, "p_h")
    delta = check_int(delta, "delta", 1)
    q = parallel_probability(check_probability(p_v, "p_v"), delta)
    return p_h + (1.0 - p_h) * q * p_h


def _pad4(coords):
    coords = tuple(coords)
    return coords + (0,) * (4 - len(coords))


def lift_key(key, kn, level):
    """Key of the copy at ``level`` of a base edge (ladder convention)."""
    return tuple(key[:kn]) + (level,) + tuple(key[kn:3]) + tuple(key[4:])


def vertical_key(w, level, copy):
    return _pad4(tuple(w) + (level,)) + (VERTICAL_DIR, copy)


def site_copy_key(v, level, copy):
    return _pad4(tuple(v) + (level,)) + (0, copy)


@dataclass(frozen=True)
class CouplingBudget:
    max_steps: int = 10**6
    max_cluster: int = 10**6

    def __post_init__(self):
        check_int(self.max_steps, "max_steps", 1)
        check_int(self.max_cluster, "max_cluster", 1)


@dataclass(frozen=True)
class CouplingStep:
    n: int
    tail: tuple
    head: tuple
    key: tuple
    rule: str
    height_from: int
    height_to: int | None
    copy: int | None

    def to_dict(self):
        return {"n": self.n, "tail": list(self.tail), "head": list(self.head),
                "key": list(self.key), "rule": self.rule, "height_from": self.height_from,
                "height_to": self.height_to, "copy": self.copy}


@dataclass
class CouplingTrace:
    """Record of one coupled exploration.

    ``consumed`` maps every ladder element that was sampled to its state:
    ``("h", key)`` horizontal edge copies, ``("v", key)`` vertical parallel
    copies, ``("s", v, level)`` whole sites of the split ladder (open iff
    some parallel copy is open) and ``("c", v, level, k)`` single copies.
    """

    mode: str
    p: float
    delta: int
    seed: int
    origin: tuple
    oriented: bool
    key_ndim: int = 2
    steps: list = field(default_factory=list)
    red_vertices: list = field(default_factory=list)
    witness_vertices: list = field(default_factory=list)
    cluster: set = field(default_factory=set)
    explored_set: set = field(default_factory=set)
    parallel_usage: Counter = field(default_factory=Counter)
    consumed: dict = field(default_factory=dict)
    termination: str = "boundary_empty"
    p_vertical: float | None = None

    @property
    def q(self):
        """Open probability of one parallel rung copy."""
        pv = self.p if self.p_vertical is None else self.p_vertical
        return parallel_probability(pv, self.delta)

    @property
    def explored_edges(self):
        return [s.key for s in self.steps]

    @property
    def red_count(self):
        return len(self.red_vertices)

    @property
    def indicators(self):
        return [s.rule != RULE_NONE for s in self.steps]

    def witness_of(self, v):
        for w, (u, h) in zip(self.red_vertices, self.witness_vertices):
            if w == v:
                return (u, h)
        if v == self.origin:
            return (self.origin, 0)
        return None

    def to_dict(self):
        return {
            "mode": self.mode, "p": self.p, "delta": self.delta, "seed": self.seed,
            "origin": list(self.origin), "termination": self.termination,
            "p_vertical": self.p_vertical,
            "red_count": self.red_count, "cluster_size": len(self.cluster),
            "max_parallel_usage": max(self.parallel_usage.values(), default=0),
            "steps": [s.to_dict() for s in self.steps],
        }

    def to_json(self):
        return to_json(self.to_dict())


class _LadderStates:
    """Lazy states of the split ladder; every element may be sampled once."""

    def __init__(self, trace, kn, p, q, delta, record):
        self.trace = trace
        self.kn = kn
        self.p = p
        self.q = q
        self.delta = delta
        self.seed = trace.seed
        self.record = record

    def _note(self, tag, state):
        if tag in self.trace.consumed:
            raise AssertionError(f"ladder element {tag} sampled twice")
        self.trace.consumed[tag] = state
        return state

    def horizontal(self, key, level):
        k = lift_key(key, self.kn, level)
        return self._note(("h", k), uniform(self.seed, NS_COUPLING_EDGE, k) < self.p)

    def vertical(self, w, level, copy):
        k = vertical_key(w, level, copy)
        return self._note(("v", k), uniform(self.seed, NS_COUPLING_VERTICAL, k) < self.q)

    def site(self, v, level):
        state = any(uniform(self.seed, NS_COUPLING_SITE, site_copy_key(v, level, k)) < self.q
                    for k in range(1, self.delta + 1))
        return self._note(("s", tuple(v), level), state)

    def site_copy(self, v, level, copy):
        state = uniform(self.seed, NS_COUPLING_SITE, site_copy_key(v, level, copy)) < self.q
        return self._note(("c", tuple(v), level, copy), state)


def _delta_of(base, delta):
    return check_int(delta if delta is not None else base.max_degree, "delta", 1)


def _start(base, p, origin, seed, delta, mode):
    base = parse_graph(base)
    if base.key_ndim > 3:
        raise DomainError("coupling bases need at most three key coordinates")
    p = check_probability(p, "p")
    seed = check_seed(seed)
    origin = tuple(base.origin if origin is None else origin)
    if not base.contains(origin):
        raise DomainError(f"origin {origin} is not a site of the base graph")
    delta = _delta_of(base, delta)
    oriented = any(e.oriented for e in base.out_edges(origin))
    trace = CouplingTrace(mode, p, delta, seed, origin, oriented, base.key_ndim)
    trace.cluster.add(origin)
    return base, trace


def run_coupling_bond(base, p, origin=None, budget=None, seed=0, *, delta=None,
                      record=True, p_vertical=None) -> CouplingTrace:
    """Bond version: explore the minimal unexplored exterior boundary edge.

    With ``p_vertical`` the ladder rungs are open with that probability
    (split into ``delta`` copies) while edge copies keep ``p``; the red
    test then succeeds with :func:`f_layered` ``(p, p_vertical, delta)``.
    """
    base, tr = _start(base, p, origin, seed, delta, "bond")
    if p_vertical is not None:
        tr.p_vertical = check_probability(p_vertical, "p_vertical")
    budget = budget or CouplingBudget()
    states = _LadderStates(tr, base.key_ndim, tr.p, tr.q, tr.delta, record)
    height = {tr.origin: 0}
    heap = []

    def push_boundary(w):
        for e in base.out_edges(w):
            head = tuple(e.head)
            if base.contains(head) and head not in tr.cluster:
                heapq.heappush(heap, (e.key, w, head))

    push_boundary(tr.origin)
    n = 0
    while heap:
        key, w, v = heapq.heappop(heap)
        if key in tr.explored_set or v in tr.cluster:
            continue
        if n >= budget.max_steps or len(tr.cluster) >= budget.max_cluster:
            tr.termination = "budget"
            break
        n += 1
        tr.explored_set.add(key)
        h = height[w]
        rule, h_to, copy = RULE_NONE, None, None
        if states.horizontal(key, h):
            rule, h_to = RULE_DIRECT, h
        else:
            copy = tr.parallel_usage[(w, h)] + 1
            if copy > tr.delta:
                raise AssertionError(f"vertex {(w, h)} needs more than {tr.delta} copies")
            tr.parallel_usage[(w, h)] = copy
            if states.vertical(w, h, copy) and states.horizontal(key, h + 1):
                rule, h_to = RULE_DETOUR, h + 1
        if record:
            tr.steps.append(CouplingStep(n, w, v, key, rule, h, h_to, copy))
        if rule != RULE_NONE:
            tr.cluster.add(v)
            height[v] = h_to
            tr.red_vertices.append(v)
            tr.witness_vertices.append((v, h_to))
            push_boundary(v)
    return tr


def run_coupling_site(base, p, origin=None, budget=None, seed=0, *, delta=None,
                      record=True) -> CouplingTrace:
    """Site version: test each exterior boundary site once, smallest first.

    A whole site of the split ladder is open iff at least one of its
    ``delta`` parallel copies is open, which has probability exactly p.
    """
    base, tr = _start(base, p, origin, seed, delta, "site")
    budget = budget or CouplingBudget()
    states = _LadderStates(tr, base.key_ndim, tr.p, tr.q, tr.delta, record)
    height = {tr.origin: 0}
    order = {tr.origin: 0}
    heap = []

    def push_boundary(w):
        for e in base.out_edges(w):
            head = tuple(e.head)
            if base.contains(head) and head not in tr.cluster:
                heapq.heappush(heap, (head, order[w], w))

    push_boundary(tr.origin)
    n = 0
    while heap:
        v, _, w = heapq.heappop(heap)
        if v in tr.explored_set or v in tr.cluster:
            continue
        if n >= budget.max_steps or len(tr.cluster) >= budget.max_cluster:
            tr.termination = "budget"
            break
        n += 1
        h = height[w]
        rule, h_to, copy = RULE_NONE, None, None
        if states.site(v, h):
            rule, h_to = RULE_DIRECT, h
        else:
            copy = tr.parallel_usage[(w, h + 1)] + 1
            if copy > tr.delta:
                raise AssertionError(f"site {(w, h + 1)} needs more than {tr.delta} copies")
            tr.parallel_usage[(w, h + 1)] = copy
            if states.site_copy(w, h + 1, copy) and states.site(v, h + 1):
                rule, h_to = RULE_DETOUR, h + 1
        if record:
            tr.steps.append(CouplingStep(n, w, v, v, rule, h, h_to, copy))
        if rule != RULE_NONE:
            tr.cluster.add(v)
            height[v] = h_to
            order[v] = len(order)
            tr.red_vertices.append(v)
            tr.witness_vertices.append((v, h_to))
            push_boundary(v)
        else:
            tr.explored_set.add(v)
    return tr


def run_coupling(base, p, mode="bond", **kw):
    if mode == "bond":
        return run_coupling_bond(base, p, **kw)
    if mode == "site":
        return run_coupling_site(base, p, **kw)
    raise DomainError(f"mode must be 'bond' or 'site', got {mode!r}")


@dataclass(frozen=True)
class WitnessCheck:
    ok: bool
    violations: tuple = ()

    def __bool__(self):
        return self.ok


def _recheck_state(tag, seed, p, q, delta):
    kind = tag[0]
    if kind == "h":
        return uniform(seed, NS_COUPLING_EDGE, tag[1]) < p
    if kind == "v":
        return uniform(seed, NS_COUPLING_VERTICAL, tag[1]) < q
    if kind == "s":
        return any(uniform(seed, NS_COUPLING_SITE, site_copy_key(tag[1], tag[2], k)) < q
                   for k in range(1, delta + 1))
    if kind == "c":
        return uniform(seed, NS_COUPLING_SITE, site_copy_key(tag[1], tag[2], tag[3])) < q
    raise ValueError(f"unknown ladder element {tag!r}")


def verify_witness(trace: CouplingTrace, base=None, *, requery=True) -> WitnessCheck:
    """Check that every red vertex's witness is joined to (o, 0) by consumed open elements.

    Connectivity is rebuilt from the consumed states alone; with ``requery``
    each consumed state is also recomputed from the trace seed.  ``base``
    (optional) supplies key dimensions for bond traces; by default it is
    inferred from the recorded steps.
    """
    bad = []
    q = trace.q
    if requery:
        for tag, state in trace.consumed.items():
            if _recheck_state(tag, trace.seed, trace.p, q, trace.delta) != state:
                bad.append(f"state of {tag} does not match a fresh query")
    kn = parse_graph(base).key_ndim if base is not None else trace.key_ndim
    adj = {}

    def link(a, b, both):
        adj.setdefault(a, []).append(b)
        if both:
            adj.setdefault(b, []).append(a)

    both = not trace.oriented
    for s in trace.steps:
        if s.rule == RULE_NONE:
            continue
        h = s.height_from
        if trace.mode == "bond":
            direct = trace.consumed.get(("h", lift_key(s.key, kn, h)))
            if s.rule == RULE_DIRECT:
                if direct is not True:
                    bad.append(f"step {s.n}: rule i without an open edge at height {h}")
                link((s.tail, h), (s.head, h), both)
            else:
                vert = trace.consumed.get(("v", vertical_key(s.tail, h, s.copy)))
                up = trace.consumed.get(("h", lift_key(s.key, kn, h + 1)))
                if direct is not False or vert is not True or up is not True:
                    bad.append(f"step {s.n}: rule ii without closed/open/open elements")
                link((s.tail, h), (s.tail, h + 1), False)
                link((s.tail, h + 1), (s.head, h + 1), both)
        else:
            if s.rule == RULE_DIRECT:
                if trace.consumed.get(("s", s.head, h)) is not True:
                    bad.append(f"step {s.n}: rule i without an open site at height {h}")
                link((s.tail, h), (s.head, h), both)
            else:
                c = trace.consumed.get(("c", s.tail, h + 1, s.copy))
                up = trace.consumed.get(("s", s.head, h + 1))
                if trace.consumed.get(("s", s.head, h)) is not False or c is not True \
                        or up is not True:
                    bad.append(f"step {s.n}: rule ii without closed/open/open sites")
                mid = ("copy", s.tail, h + 1, s.copy)
                link((s.tail, h), mid, False)
                link(mid, (s.head, h + 1), both)
    start = (trace.origin, 0)
    seen = {start}
    todo = deque([start])
    while todo:
        a = todo.popleft()
        for b in adj.get(a, ()):
            if b not in seen:
                seen.add(b)
                todo.append(b)
    for v, wit in zip(trace.red_vertices, trace.witness_vertices):
        if tuple(wit) not in seen:
            bad.append(f"red vertex {v}: witness {wit} not connected to {start}")
    return WitnessCheck(not bad, tuple(bad))


def coupling_size_law(base, p, trials, seed=0, *, mode="bond", delta=None, budget=None,
                      threads=1, p_vertical=None) -> dict:
    """Empirical law of the red-cluster size over seeds ``seed .. seed + trials - 1``."""
    trials = check_int(trials, "trials", 1)
    base = parse_graph(base)
    sizes = [0] * trials
    if mode not in ("bond", "site"):
        raise DomainError(f"mode must be 'bond' or 'site', got {mode!r}")
    if mode == "site" and p_vertical is not None:
        raise DomainError("p_vertical applies to the bond coupling only")
    extra = {} if p_vertical is None else {"p_vertical": p_vertical}
    runner = run_coupling_bond if mode == "bond" else run_coupling_site

    def work(lo, hi):
        for t in range(lo, hi):
            tr = runner(base, p, None, budget, seed + t, delta=delta, record=False, **extra)
            sizes[t] = len(tr.cluster)

    run_chunks(trials, threads, work)
    counts = Counter(sizes)
    return {k: counts[k] / trials for k in sorted(counts)}


def exact_cluster_size_law(graph: GraphSpec, q, mode="bond", origin=None) -> dict:
    """Exact law of the origin's cluster size under Bernoulli(q) percolation.

    Enumerates every edge (bond) or non-origin site (site) configuration of a
    finite graph; the origin is taken open in site mode.
    """
    graph = parse_graph(graph)
    if not graph.finite:
        raise DomainError("exact enumeration needs a finite graph")
    q = check_probability(q, "q")
    origin = tuple(graph.origin if origin is None else origin)
    sites = list(graph.sites())
    edges = list({e.key: e for v in sites for e in graph.out_edges(v)}.values())
    if mode == "bond":
        elems = edges
    elif mode == "site":
        elems = [v for v in sites if v != origin]
    else:
        raise DomainError(f"mode must be 'bond' or 'site', got {mode!r}")
    if len(elems) > 22:
        raise DomainError(f"{len(elems)} elements are too many to enumerate")
    law = Counter()
    for states in itertools.product((False, True), repeat=len(elems)):
        weight = 1.0
        for s in states:
            weight *= q if s else 1.0 - q
        if weight == 0.0:
            continue
        if mode == "bond":
            open_keys = {e.key for e, s in zip(elems, states) if s}
            open_site = None
        else:
            open_keys = None
            open_site = {v for v, s in zip(elems, states) if s} | {origin}
        seen = {origin}
        todo = [origin]
        while todo:
            v = todo.pop()
            for e in graph.out_edges(v):
                w = tuple(e.head)
                if w in seen:
                    continue
                if (open_keys is not None and e.key in open_keys) or \
                        (open_site is not None and w in open_site):
                    seen.add(w)
                    todo.append(w)
        law[len(seen)] += weight
    return {k: law[k] for k in sorted(law)}


def total_variation(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


@dataclass(frozen=True)
class OracleComparison:
    graph: str
    mode: str
    p: float
    f_p: float
    trials: int
    tv: float
    tolerance: float
    empirical: dict
    exact: dict

    @property
    def passed(self):
        return self.tv < self.tolerance

    def to_dict(self):
        return {"graph": self.graph, "mode": self.mode, "p": self.p, "f_p": self.f_p,
                "trials": self.trials, "tv": self.tv, "tolerance": self.tolerance,
                "verdict": "pass" if self.passed else "fail",
                "empirical": {str(k): v for k, v in self.empirical.items()},
                "exact": {str(k): v for k, v in self.exact.items()}}


def oracle_comparison(base, p, trials, seed=0, *, mode="bond", delta=None, tolerance=0.02,
                      threads=1) -> OracleComparison:
    """Red-cluster size law versus exact Bernoulli(f(p)) enumeration on a finite base."""
    base = parse_graph(base)
    d = _delta_of(base, delta)
    fp = f(p, d)
    emp = coupling_size_law(base, p, trials, seed, mode=mode, delta=d, threads=threads)
    exact = exact_cluster_size_law(base, fp, mode)
    return OracleComparison(base.to_json(), mode, float(p), fp, trials,
                            total_variation(emp, exact), tolerance, emp, exact)
