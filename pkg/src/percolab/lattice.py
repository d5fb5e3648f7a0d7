"""Graphs for oriented and semi-oriented percolation.

All graphs are infinite or finite locally-finite graphs given implicitly by
an out-edge enumeration.  Sites are exact integer tuples; the Cartesian
embedding of the hexagonal space lattice is only used for geometry checks
and for the layer radius ``|x| + |y|``.

Edge keys are 6-tuples ``(c0, c1, c2, c3, direction, copy)``: the tail
coordinates padded to four slots, a direction id and a parallel-copy index.
Unoriented edges are keyed from their canonical endpoint so both traversal
directions share one key.  Compiled kernels reproduce exactly the same keys
from the :class:`Table` returned by :meth:`GraphSpec.lower`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._validation import DomainError, check_int


class EdgeClass(IntEnum):
    UPWARD = 0
    HORIZONTAL = 1
    VERTICAL = 2
    PARALLEL = 3


# Probability source of an edge in the layered environment.
KIND_LAYERED = 0
KIND_HORIZONTAL = 1

GEOMETRY_GENERIC = 0
GEOMETRY_HEX = 1

VERTICAL_DIR = 8
_UNBOUNDED = 1 << 40


class SiteH(NamedTuple):
    """Site ``a1*u1 + a2*u2 + a3*u3`` of the hexagonal space lattice."""

    a1: int
    a2: int
    a3: int

    @property
    def height(self):
        return self.a3


UP_OFFSETS = ((0, 0, 1), (-1, 0, 1), (0, -1, 1), (-1, -1, 1))
HORIZONTAL_OFFSETS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0))
DOWN_OFFSETS = ((0, 0, -1), (1, 0, -1), (0, 1, -1), (1, 1, -1))

_SQRT_HALF = 1.0 / math.sqrt(2.0)


def _shift(v, off):
    return SiteH(v[0] + off[0], v[1] + off[1], v[2] + off[2])


def neighbors_up(v) -> set:
    """The four neighbors one layer above ``v``."""
    return {_shift(v, off) for off in UP_OFFSETS}


def neighbors_horizontal(v) -> set:
    return {_shift(v, off) for off in HORIZONTAL_OFFSETS}


def neighbors_down(v) -> set:
    """The four neighbors one layer below; empty at height 0."""
    if v[2] < 1:
        return set()
    return {_shift(v, off) for off in DOWN_OFFSETS}


def cartesian(v) -> tuple:
    a1, a2, a3 = v
    return (a1 + a3 / 2.0, a2 + a3 / 2.0, a3 * _SQRT_HALF)


def hex_radius(v) -> int:
    """Layer radius ``|x| + |y|`` of the Cartesian embedding (always integral)."""
    a1, a2, a3 = v[0], v[1], v[2]
    return (abs(2 * a1 + a3) + abs(2 * a2 + a3)) // 2


# Images of the unit vectors of Z^3: u3, u3 - u1, u3 - u1 - u2.
Z3_GENERATORS = ((0, 0, 1), (-1, 0, 1), (-1, -1, 1))


def embed_z3(m) -> SiteH:
    """Map a point of Z_+^3 into the oriented hexagonal lattice."""
    if len(m) != 3:
        raise DomainError(f"expected a point of Z_+^3, got {m!r}")
    if any(int(x) < 0 for x in m):
        raise DomainError(f"coordinates must be non-negative, got {m!r}")
    a = [0, 0, 0]
    for coef, gen in zip(m, Z3_GENERATORS):
        for i in range(3):
            a[i] += int(coef) * gen[i]
    return SiteH(*a)


@dataclass(frozen=True)
class EdgeRef:
    tail: tuple
    head: tuple
    cls: EdgeClass
    key: tuple
    oriented: bool = True
    layer: int = 0
    multiplicity: int = 1

    @property
    def copy(self):
        return self.key[5]


def _pad4(coords):
    coords = tuple(int(c) for c in coords)
    if len(coords) > 4:
        raise DomainError("edge keys hold at most four coordinates")
    return coords + (0,) * (4 - len(coords))


@dataclass(frozen=True, eq=False)
class Table:
    """Direction table consumed by the compiled kernels."""

    deltas: np.ndarray
    dir_ids: np.ndarray
    oriented: np.ndarray
    kind: np.ndarray
    canon: np.ndarray
    dh: np.ndarray
    height_w: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mod: np.ndarray
    geometry: int
    ndim: int
    radius_axes: int

    def arrays(self):
        return (self.deltas, self.dir_ids, self.oriented, self.kind, self.canon,
                self.dh, self.height_w, self.lo, self.hi, self.mod,
                self.geometry, self.radius_axes)


def _make_table(rows, ndim, height_w, lo=None, hi=None, mod=None,
                geometry=GEOMETRY_GENERIC, radius_axes=None):
    # rows: (delta, dir_id, oriented, kind, canon_row)
    n = len(rows)
    deltas = np.zeros((n, 4), np.int64)
    for r, row in enumerate(rows):
        deltas[r, :len(row[0])] = row[0]
    hw = np.zeros(4, np.int64)
    hw[:len(height_w)] = height_w

    def vec(values, fill):
        out = np.full(4, fill, np.int64)
        if values is not None:
            for i, v in enumerate(values):
                if v is not None:
                    out[i] = v
        return out

    return Table(
        deltas=deltas,
        dir_ids=np.array([row[1] for row in rows], np.int64),
        oriented=np.array([row[2] for row in rows], np.bool_),
        kind=np.array([row[3] for row in rows], np.int64),
        canon=np.array([row[4] for row in rows], np.int64),
        dh=deltas @ hw,
        height_w=hw,
        lo=vec(lo, -_UNBOUNDED),
        hi=vec(hi, _UNBOUNDED),
        mod=vec(mod, 0),
        geometry=geometry,
        ndim=ndim,
        radius_axes=min(ndim, 2) if radius_axes is None else radius_axes,
    )


class GraphSpec:
    """A locally finite graph given by its out-edge enumeration.

    ``out_edges(v)`` lists every edge traversable from ``v``: oriented edges
    with tail ``v`` and unoriented edges incident to ``v``.
    """

    kind = "abstract"
    finite = False

    @property
    def origin(self) -> tuple:
        raise NotImplementedError

    @property
    def max_degree(self) -> int:
        raise NotImplementedError

    @property
    def key_ndim(self) -> int:
        return len(self.origin)

    def out_edges(self, v) -> list:
        raise NotImplementedError

    def height(self, v) -> int:
        return 0

    def radius(self, v) -> int:
        return abs(v[0]) + (abs(v[1]) if len(v) > 1 else 0)

    def contains(self, v) -> bool:
        return True

    def lower(self):
        """Direction table for the compiled kernels, or None."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class OrientedZ(GraphSpec):
    """Z_+^d with nearest-neighbor edges oriented away from the origin."""

    d: int = 2
    kind = "oriented_z"

    def __post_init__(self):
        check_int(self.d, "d", 1, 4)

    @property
    def origin(self):
        return (0,) * self.d

    @property
    def max_degree(self):
        return self.d

    def out_edges(self, v):
        h = sum(v)
        out = []
        for i in range(self.d):
            head = tuple(c + (j == i) for j, c in enumerate(v))
            out.append(EdgeRef(tuple(v), head, EdgeClass.UPWARD,
                               _pad4(v) + (i, 0), True, h))
        return out

    def height(self, v):
        return sum(v)

    def contains(self, v):
        return len(v) == self.d and all(c >= 0 for c in v)

    def lower(self):
        rows = []
        for i in range(self.d):
            delta = [0] * 4
            delta[i] = 1
            rows.append((delta, i, True, KIND_LAYERED, i))
        return _make_table(rows, self.d, [1] * self.d, lo=[0] * self.d)

    def to_dict(self):
        return {"kind": "oriented_z", "d": self.d}


ALL_UP = (0, 1, 2, 3)


@dataclass(frozen=True)
class Hex(GraphSpec):
    """Oriented hexagonal space lattice, optionally with horizontal edges.

    ``up_dirs`` selects which of the four upward offsets are kept; keeping
    ``(0,)`` together with horizontal edges deletes the three diagonal bonds
    and leaves a copy of Z^2 x Z_+.
    """

    horizontal: bool = False
    up_dirs: tuple = ALL_UP

    def __post_init__(self):
        dirs = tuple(sorted(set(int(k) for k in self.up_dirs)))
        if not dirs or any(k not in ALL_UP for k in dirs):
            raise DomainError(f"up_dirs must be a non-empty subset of {ALL_UP}")
        object.__setattr__(self, "up_dirs", dirs)

    @property
    def kind(self):
        return "hex_h" if self.horizontal else "hex_oriented"

    @property
    def origin(self):
        return SiteH(0, 0, 0)

    @property
    def max_degree(self):
        return len(self.up_dirs) + (4 if self.horizontal else 0)

    def out_edges(self, v):
        v = SiteH(*v)
        out = []
        for k in self.up_dirs:
            out.append(EdgeRef(v, _shift(v, UP_OFFSETS[k]), EdgeClass.UPWARD,
                               _pad4(v) + (k, 0), True, v.a3))
        if self.horizontal:
            for j, off in enumerate(HORIZONTAL_OFFSETS):
                head = _shift(v, off)
                if j % 2 == 0:
                    key = _pad4(v) + (4 + j, 0)
                else:
                    key = _pad4(head) + (4 + j - 1, 0)
                out.append(EdgeRef(v, head, EdgeClass.HORIZONTAL, key, False,
                                   v.a3))
        return out

    def height(self, v):
        return v[2]

    def radius(self, v):
        return hex_radius(v)

    def contains(self, v):
        return len(v) == 3 and v[2] >= 0

    def lower(self):
        rows = [(UP_OFFSETS[k], k, True, KIND_LAYERED, -1) for k in self.up_dirs]
        if self.horizontal:
            base = len(rows)
            for j, off in enumerate(HORIZONTAL_OFFSETS):
                canon = base + j - (j % 2)
                rows.append((off, 4 + j, False, KIND_HORIZONTAL, canon))
        rows = [(r[0], r[1], r[2], r[3], i if r[4] < 0 else r[4])
                for i, r in enumerate(rows)]
        return _make_table(rows, 3, [0, 0, 1], lo=[None, None, 0],
                           geometry=GEOMETRY_HEX)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.up_dirs != ALL_UP:
            d["up_dirs"] = list(self.up_dirs)
        return d


def hex_oriented():
    return Hex(False)


def hex_with_horizontal():
    return Hex(True)


def delete_diagonal_up(spec: Hex) -> Hex:
    """Drop the bonds v -> v+u3-u1, v+u3-u2, v+u3-u1-u2 (keeps v -> v+u3)."""
    if not isinstance(spec, Hex):
        raise DomainError("deletion filter applies to hexagonal graphs only")
    return Hex(spec.horizontal, (0,))


_SQUARE_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True)
class SquareZ2(GraphSpec):
    """Unoriented nearest-neighbor Z^2."""

    kind = "z2"

    @property
    def origin(self):
        return (0, 0)

    @property
    def max_degree(self):
        return 4

    def _inside(self, v):
        return True

    def out_edges(self, v):
        out = []
        for j, off in enumerate(_SQUARE_OFFSETS):
            head = (v[0] + off[0], v[1] + off[1])
            if not self._inside(head):
                continue
            if j % 2 == 0:
                key = _pad4(v) + (j, 0)
            else:
                key = _pad4(head) + (j - 1, 0)
            out.append(EdgeRef(tuple(v), head, EdgeClass.HORIZONTAL, key,
                               False, 0))
        return out

    def _bounds(self):
        return None, None

    def lower(self):
        rows = [(off, j, False, KIND_HORIZONTAL, j - (j % 2))
                for j, off in enumerate(_SQUARE_OFFSETS)]
        lo, hi = self._bounds()
        return _make_table(rows, 2, [0, 0], lo=lo, hi=hi)

    def to_dict(self):
        return {"kind": "z2"}


@dataclass(frozen=True)
class FiniteGrid(SquareZ2):
    """The w x h box of Z^2 with free boundary."""

    w: int = 3
    h: int = 3
    finite = True

    def __post_init__(self):
        check_int(self.w, "w", 1)
        check_int(self.h, "h", 1)

    @property
    def kind(self):
        return "grid"

    def _inside(self, v):
        return 0 <= v[0] < self.w and 0 <= v[1] < self.h

    def contains(self, v):
        return len(v) == 2 and self._inside(v)

    def _bounds(self):
        return [0, 0], [self.w - 1, self.h - 1]

    def sites(self):
        return [(x, y) for x in range(self.w) for y in range(self.h)]

    def edges(self):
        return sorted({e.key: e for v in self.sites()
                       for e in self.out_edges(v)}.values(), key=lambda e: e.key)

    def to_dict(self):
        return {"kind": "grid", "w": self.w, "h": self.h}


@dataclass(frozen=True)
class Explicit(GraphSpec):
    """Finite graph on vertices 0..n-1 from an explicit edge list."""

    n: int
    edge_list: tuple
    oriented: bool = False
    kind = "explicit"
    finite = True

    def __post_init__(self):
        check_int(self.n, "n", 1)
        edges = []
        for e in self.edge_list:
            u, v = int(e[0]), int(e[1])
            if not (0 <= u < self.n and 0 <= v < self.n) or u == v:
                raise DomainError(f"invalid edge {e!r}")
            edges.append((u, v) if self.oriented else (min(u, v), max(u, v)))
        if len(set(edges)) != len(edges):
            raise DomainError("duplicate edges")
        object.__setattr__(self, "edge_list", tuple(sorted(edges)))
        adj = {i: [] for i in range(self.n)}
        for u, v in self.edge_list:
            adj[u].append(v)
            if not self.oriented:
                adj[v].append(u)
        object.__setattr__(self, "_adj", {k: tuple(sorted(x)) for k, x in adj.items()})

    @property
    def origin(self):
        return (0,)

    @property
    def key_ndim(self):
        return 2

    @property
    def max_degree(self):
        return max((len(a) for a in self._adj.values()), default=0) or 1

    def out_edges(self, v):
        u = v[0]
        out = []
        for w in self._adj[u]:
            a, b = (u, w) if (self.oriented or u < w) else (w, u)
            out.append(EdgeRef((u,), (w,), EdgeClass.HORIZONTAL,
                               (a, b, 0, 0, 0, 0), self.oriented, 0))
        return out

    def contains(self, v):
        return len(v) == 1 and 0 <= v[0] < self.n

    def radius(self, v):
        return 0

    def sites(self):
        return [(i,) for i in range(self.n)]

    def edges(self):
        return [EdgeRef((u,), (v,), EdgeClass.HORIZONTAL, (u, v, 0, 0, 0, 0),
                        self.oriented, 0) for u, v in self.edge_list]

    def to_dict(self):
        return {"kind": "explicit", "n": self.n,
                "edges": [list(e) for e in self.edge_list],
                "oriented": self.oriented}


def path_graph(n):
    return Explicit(n, tuple((i, i + 1) for i in range(n - 1)))


def star_graph(leaves):
    return Explicit(leaves + 1, tuple((0, i) for i in range(1, leaves + 1)))


def single_vertex():
    return Explicit(1, ())


@dataclass(frozen=True)
class Ladder(GraphSpec):
    """Stack of copies of ``base`` joined by upward vertical edges.

    ``fiber=None`` is Z_+; an integer ``k`` is the cyclic fiber Z_k.  Copies
    of base edges keep the base orientation and draw the horizontal
    probability; vertical edges draw the layered probability of their tail.
    Heights add the level for Z_+; on a cyclic fiber only the base height
    counts.
    """

    base: GraphSpec
    fiber: int | None = None
    kind = "ladder"

    def __post_init__(self):
        if self.fiber is not None:
            k = check_int(self.fiber, "k", None)
            if k < 2:
                raise DomainError(f"cyclic fiber needs k >= 2, got {k}")
        if self.base.key_ndim > 3:
            raise DomainError("ladder base has too many coordinates")

    @property
    def finite(self):
        return self.base.finite and self.fiber is not None

    @property
    def origin(self):
        return tuple(self.base.origin) + (0,)

    @property
    def key_ndim(self):
        return len(self.origin)

    @property
    def max_degree(self):
        return self.base.max_degree + 1

    @property
    def base_max_degree(self):
        return self.base.max_degree

    def _level_up(self, level):
        return level + 1 if self.fiber is None else (level + 1) % self.fiber

    def vertical_edge(self, v):
        v = tuple(v)
        return EdgeRef(v, v[:-1] + (self._level_up(v[-1]),), EdgeClass.VERTICAL,
                       _pad4(v) + (VERTICAL_DIR, 0), True, self.height(v))

    def horizontal_edges(self, v):
        v = tuple(v)
        b, level = v[:-1], v[-1]
        kn = self.base.key_ndim
        h = self.height(v)
        out = []
        for e in self.base.out_edges(b):
            coords = e.key[:kn] + (level,) + e.key[kn:3]
            out.append(EdgeRef(v, tuple(e.head) + (level,), EdgeClass.HORIZONTAL,
                               coords + e.key[4:], e.oriented, h))
        return out

    def out_edges(self, v):
        return self.horizontal_edges(v) + [self.vertical_edge(v)]

    def height(self, v):
        h = self.base.height(tuple(v[:-1]))
        return h + v[-1] if self.fiber is None else h

    def radius(self, v):
        return self.base.radius(tuple(v[:-1]))

    def contains(self, v):
        if not self.base.contains(tuple(v[:-1])):
            return False
        return v[-1] >= 0 and (self.fiber is None or v[-1] < self.fiber)

    def lower(self):
        bt = self.base.lower()
        if bt is None or bt.ndim > 3:
            return None
        nd = bt.ndim
        rows = []
        for r in range(bt.deltas.shape[0]):
            rows.append((bt.deltas[r], int(bt.dir_ids[r]), bool(bt.oriented[r]),
                         KIND_HORIZONTAL, int(bt.canon[r])))
        vert = [0] * 4
        vert[nd] = 1
        rows.append((vert, VERTICAL_DIR, True, KIND_LAYERED, len(rows)))
        hw = list(bt.height_w[:nd]) + [1 if self.fiber is None else 0]
        lo = list(bt.lo[:nd]) + [0]
        hi = list(bt.hi[:nd]) + [None]
        mod = [0] * nd + [self.fiber or 0]
        return _make_table(rows, nd + 1, hw, lo=lo, hi=hi, mod=mod,
                           geometry=bt.geometry, radius_axes=bt.radius_axes)

    def to_dict(self):
        fiber = "zplus" if self.fiber is None else {"zmod": self.fiber}
        return {"kind": "ladder", "base": self.base.to_dict(), "fiber": fiber}


def make_ladder(base: GraphSpec, fiber="zplus") -> Ladder:
    """Ladder graph of ``base`` with fiber ``"zplus"`` or an integer k >= 2."""
    if fiber in ("zplus", None):
        return Ladder(base, None)
    if isinstance(fiber, dict):
        fiber = fiber.get("zmod")
    return Ladder(base, check_int(fiber, "k"))


@dataclass(frozen=True)
class ParallelSplit(GraphSpec):
    """A ladder whose vertical edges are split into ``delta`` parallel copies."""

    ladder: Ladder
    delta: int
    kind = "split"

    def __post_init__(self):
        if not isinstance(self.ladder, Ladder):
            raise DomainError("split_vertical requires a ladder graph")
        check_int(self.delta, "delta", 1)

    @property
    def origin(self):
        return self.ladder.origin

    @property
    def max_degree(self):
        return self.ladder.base.max_degree + self.delta

    def vertical_copies(self, v):
        e = self.ladder.vertical_edge(v)
        return [EdgeRef(e.tail, e.head, EdgeClass.PARALLEL, e.key[:5] + (j,),
                        True, e.layer, self.delta)
                for j in range(1, self.delta + 1)]

    def out_edges(self, v):
        return self.ladder.horizontal_edges(v) + self.vertical_copies(v)

    def height(self, v):
        return self.ladder.height(v)

    def radius(self, v):
        return self.ladder.radius(v)

    def contains(self, v):
        return self.ladder.contains(v)

    def to_dict(self):
        return {"kind": "split", "base": self.ladder.to_dict(), "delta": self.delta}


def split_vertical(ladder: GraphSpec, delta: int) -> ParallelSplit:
    return ParallelSplit(ladder, delta)


def parallel_probability(p: float, delta: int) -> float:
    """Per-copy probability q with 1 - p = (1 - q)**delta."""
    return -math.expm1(math.log1p(-p) / delta) if p < 1.0 else 1.0


def graph_from_dict(d: dict) -> GraphSpec:
    if not isinstance(d, dict) or "kind" not in d:
        raise DomainError(f"graph document needs a 'kind' field: {d!r}")
    kind = d["kind"]
    if kind == "oriented_z":
        return OrientedZ(int(d.get("d", 2)))
    if kind in ("hex_oriented", "hex_h"):
        return Hex(kind == "hex_h", tuple(d.get("up_dirs", ALL_UP)))
    if kind == "z2":
        return SquareZ2()
    if kind == "grid":
        return FiniteGrid(int(d["w"]), int(d["h"]))
    if kind == "explicit":
        return Explicit(int(d["n"]), tuple(tuple(e) for e in d.get("edges", ())),
                        bool(d.get("oriented", False)))
    if kind == "ladder":
        return make_ladder(graph_from_dict(d["base"]), d.get("fiber", "zplus"))
    if kind == "split":
        return split_vertical(graph_from_dict(d["base"]), int(d["delta"]))
    raise DomainError(f"unknown graph kind {kind!r}")


_NAMED = {
    "hex": Hex(False),
    "hex_oriented": Hex(False),
    "hex_h": Hex(True),
    "z2": SquareZ2(),
    "z2xzplus": Hex(True, (0,)),
}


def parse_graph(text) -> GraphSpec:
    """Graph from a short name, a JSON document or a path to a JSON file.

    Short names: ``z<d>-oriented``, ``hex``, ``hex_h``, ``z2``, ``z2xzplus``,
    ``path<n>``, ``star<k>``, ``grid<w>x<h>``, and the prefixes
    ``ladder:<name>`` and ``ladder<k>:<name>`` (cyclic fiber Z_k).
    """
    if isinstance(text, GraphSpec):
        return text
    if isinstance(text, dict):
        return graph_from_dict(text)
    text = str(text).strip()
    if text.startswith("{"):
        return graph_from_dict(json.loads(text))
    if text.endswith(".json") and Path(text).exists():
        return graph_from_dict(json.loads(Path(text).read_text()))
    if text in _NAMED:
        return _NAMED[text]
    if text.startswith("ladder") and ":" in text:
        prefix, rest = text.split(":", 1)
        k = prefix[len("ladder"):]
        return make_ladder(parse_graph(rest), int(k) if k else "zplus")
    if text.startswith("z") and text.endswith("-oriented"):
        return OrientedZ(int(text[1:-len("-oriented")]))
    if text.startswith("path"):
        return path_graph(int(text[4:]))
    if text.startswith("star"):
        return star_graph(int(text[4:]))
    if text.startswith("grid") and "x" in text:
        w, h = text[4:].split("x")
        return FiniteGrid(int(w), int(h))
    raise DomainError(f"unrecognised graph {text!r}")
