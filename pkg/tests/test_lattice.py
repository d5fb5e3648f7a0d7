import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import unit_neighbors
from percolab import DomainError
from percolab.lattice import (ALL_UP, EdgeClass, FiniteGrid, Hex, Ladder, OrientedZ,
                              SiteH, SquareZ2, cartesian, delete_diagonal_up, embed_z3,
                              graph_from_dict, make_ladder, neighbors_down,
                              neighbors_horizontal, neighbors_up, parallel_probability,
                              parse_graph, path_graph, single_vertex, split_vertical,
                              star_graph)

coord = st.integers(-10**6, 10**6)
height = st.integers(0, 10**6)


def test_up_offsets_at_origin():
    assert neighbors_up((0, 0, 0)) == {(0, 0, 1), (-1, 0, 1), (0, -1, 1), (-1, -1, 1)}


def test_horizontal_offsets_at_origin():
    assert neighbors_horizontal((0, 0, 0)) == {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)}


def test_down_offsets():
    assert neighbors_down((0, 0, 1)) == {(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)}
    assert neighbors_down((0, 0, 0)) == set()


def test_translation_invariance():
    v = (5, -2, 3)
    expect = {(v[0] + a, v[1] + b, v[2] + c) for a, b, c in neighbors_up((0, 0, 0))}
    assert neighbors_up(v) == expect


@given(coord, coord, st.integers(1, 10**6))
def test_neighbor_sets_match_geometry(a1, a2, a3):
    v = (a1, a2, a3)
    assert neighbors_up(v) | neighbors_horizontal(v) | neighbors_down(v) == unit_neighbors(v)


@given(coord, coord, st.integers(1, 10**6))
def test_neighbor_sets_disjoint_and_sized(a1, a2, a3):
    v = (a1, a2, a3)
    up, hz, dn = neighbors_up(v), neighbors_horizontal(v), neighbors_down(v)
    assert len(up) == len(hz) == len(dn) == 4
    assert not (up & hz) and not (up & dn) and not (hz & dn)
    assert all(w[2] == a3 + 1 for w in up) and all(w[2] == a3 for w in hz)


@given(coord, coord, height)
def test_up_down_symmetry(a1, a2, a3):
    v = (a1, a2, a3)
    for w in neighbors_up(v):
        assert v in neighbors_down(w)
    for w in neighbors_down(v):
        assert v in neighbors_up(w)


def test_cartesian_values():
    assert cartesian((0, 0, 0)) == (0.0, 0.0, 0.0)
    x = cartesian((0, 0, 1))
    assert x[0] == 0.5 and x[1] == 0.5 and abs(x[2] - 1 / math.sqrt(2)) < 1e-15


def test_embed_z3_generators():
    assert embed_z3((1, 0, 0)) == (0, 0, 1)
    assert embed_z3((0, 1, 0)) == (-1, 0, 1)
    assert embed_z3((0, 0, 1)) == (-1, -1, 1)
    assert embed_z3((0, 0, 0)) == (0, 0, 0)
    assert embed_z3((1, 1, 1)) == (-2, -1, 3)
    with pytest.raises(DomainError):
        embed_z3((1, -1, 0))


@given(st.tuples(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000)),
       st.integers(0, 2))
def test_embedding_is_a_homomorphism(m, k):
    head = list(m)
    head[k] += 1
    assert embed_z3(tuple(head)) in neighbors_up(embed_z3(m))


def test_site_height():
    assert SiteH(1, 2, 3).height == 3


def test_pyramid_reachable_set():
    layer = {(0, 0, 0)}
    for n in range(1, 51):
        layer = {w for v in layer for w in neighbors_up(v)}
        assert len(layer) == (n + 1) ** 2


def test_hex_degrees():
    g = Hex(False)
    assert len(g.out_edges((3, 4, 5))) == 4
    assert all(e.cls is EdgeClass.UPWARD and e.oriented for e in g.out_edges((0, 0, 0)))
    gh = Hex(True)
    assert len(gh.out_edges((0, 0, 2))) == 8


def test_unoriented_keys_agree_in_both_directions():
    g = Hex(True)
    v = SiteH(2, -1, 4)
    for e in g.out_edges(v):
        if e.cls is EdgeClass.HORIZONTAL:
            back = [b for b in g.out_edges(e.head) if b.head == v]
            assert len(back) == 1 and back[0].key == e.key
    sq = SquareZ2()
    for e in sq.out_edges((0, 0)):
        back = [b for b in sq.out_edges(e.head) if b.head == (0, 0)]
        assert back[0].key == e.key


def test_oriented_z_out_degree():
    for d in (1, 2, 3, 4):
        g = OrientedZ(d)
        es = g.out_edges((0,) * d)
        assert len(es) == d and all(sum(e.head) == 1 for e in es)


def test_ladder_of_single_vertex_is_half_line():
    lad = make_ladder(single_vertex())
    es = lad.out_edges((0, 0))
    assert len(es) == 1 and es[0].head == (0, 1) and es[0].cls is EdgeClass.VERTICAL


def test_ladder_degree_law():
    base = OrientedZ(2)
    lad = make_ladder(base)
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = tuple(int(x) for x in rng.integers(0, 50, 3))
        assert len(lad.out_edges(v)) == len(base.out_edges(v[:2])) + 1 == 3


def test_cyclic_ladder():
    lad = make_ladder(path_graph(3), 2)
    for level in (0, 1):
        vert = [e for e in lad.out_edges((1, level)) if e.cls is EdgeClass.VERTICAL]
        assert len(vert) == 1 and vert[0].head == (1, 1 - level)
    with pytest.raises(DomainError):
        make_ladder(path_graph(3), 1)


def test_split_vertical():
    lad = make_ladder(OrientedZ(2))
    sp = split_vertical(lad, 4)
    copies = sp.vertical_copies((0, 0, 0))
    assert [e.copy for e in copies] == [1, 2, 3, 4]
    assert len({(e.tail, e.head) for e in copies}) == 1
    assert len({e.key for e in copies}) == 4
    one = split_vertical(lad, 1)
    assert one.vertical_copies((0, 0, 0))[0].head == lad.vertical_edge((0, 0, 0)).head
    with pytest.raises(DomainError):
        split_vertical(OrientedZ(2), 2)


def test_parallel_probability_closed_form():
    q = parallel_probability(0.5, 4)
    assert abs(1 - (1 - q) ** 4 - 0.5) < 1e-15
    assert abs(q - (1 - 0.5**0.25)) < 1e-15


def test_deletion_gives_z2_times_zplus():
    g = delete_diagonal_up(Hex(True))
    assert g == Hex(True, (0,))
    rng = np.random.default_rng(1)
    for _ in range(200):
        v = (int(rng.integers(-50, 50)), int(rng.integers(-50, 50)), int(rng.integers(0, 50)))
        heads = {e.head for e in g.out_edges(v)}
        x, y, z = v
        assert heads == {(x + 1, y, z), (x - 1, y, z), (x, y + 1, z), (x, y - 1, z),
                         (x, y, z + 1)}


def test_finite_grid():
    g = FiniteGrid(3, 3)
    assert len(g.sites()) == 9 and len(g.edges()) == 12
    assert all(g.contains(e.head) for e in g.out_edges((0, 0)))
    assert len(g.out_edges((0, 0))) == 2 and len(g.out_edges((1, 1))) == 4


def test_explicit_graphs():
    p = path_graph(3)
    assert p.max_degree == 2 and len(p.edges()) == 2
    s = star_graph(3)
    assert s.max_degree == 3 and len(s.out_edges((0,))) == 3


@pytest.mark.parametrize("spec", [
    Hex(False), Hex(True), Hex(True, (0,)), SquareZ2(), OrientedZ(3), FiniteGrid(4, 2),
    make_ladder(OrientedZ(2)), make_ladder(path_graph(3), 3),
    split_vertical(make_ladder(OrientedZ(2)), 2), path_graph(4),
])
def test_json_round_trip(spec):
    assert graph_from_dict(spec.to_dict()) == spec
    assert parse_graph(spec.to_json()) == spec


def test_named_graphs():
    assert parse_graph("z2xzplus") == Hex(True, (0,))
    assert parse_graph("hex_h") == Hex(True, ALL_UP)
    assert parse_graph("ladder:z2-oriented") == Ladder(OrientedZ(2))
    assert parse_graph("ladder3:path2") == Ladder(path_graph(2), 3)
    assert parse_graph({"kind": "ladder", "base": {"kind": "oriented_z", "d": 2},
                        "fiber": {"zmod": 3}}) == Ladder(OrientedZ(2), 3)
    with pytest.raises(DomainError):
        parse_graph("nonsense")


@settings(max_examples=50)
@given(st.integers(-10**4, 10**4), st.integers(-10**4, 10**4), st.integers(0, 10**4))
def test_hex_radius_is_l1_of_embedding(a1, a2, a3):
    x, y, _ = cartesian((a1, a2, a3))
    assert Hex(True).radius((a1, a2, a3)) == abs(x) + abs(y)
