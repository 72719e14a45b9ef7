import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from ggbm.hin import egonet
from ggbm.paths import (ColumnLayout, LayoutMismatchError, MetapathSchema, PathExplosionError, SimplePath,
                        UnlabeledHeadError, build_dataset, enumerate_paths, featurize_heads, featurize_path,
                        path_weight, wildcard, write_dataset_csv)
from tests.conftest import homogeneous
from tests.oracles import maximal_paths_bruteforce, walk_probability

SPOKE_PATHS = [(0, 1, 6), (0, 2, 7), (0, 3), (0, 4, 8), (0, 4, 9), (0, 5, 9)]


def test_spokes_paths_and_weights(spokes):
    ego = egonet(spokes, 0, 2)
    paths = enumerate_paths(ego)
    assert [p.nodes for p in paths] == SPOKE_PATHS
    weights = [path_weight(ego, p) for p in paths]
    assert weights == pytest.approx([0.2, 0.2, 0.2, 0.1, 0.1, 0.2], abs=1e-15)
    assert [p.dead_end for p in paths] == [False, False, True, False, False, False]


def test_isolated_head_has_the_empty_path():
    g = homogeneous(2, [])
    paths = enumerate_paths(egonet(g, 0, 3))
    assert paths == [SimplePath((0,), (), True)]
    assert path_weight(egonet(g, 0, 3), paths[0]) == 1.0


def test_radius_zero(spokes):
    ego = egonet(spokes, 0, 0)
    assert [p.nodes for p in enumerate_paths(ego)] == [(0,)]


def test_schema_shorter_than_radius(spokes):
    ego = egonet(spokes, 0, 2)
    assert [p.nodes for p in enumerate_paths(ego, wildcard(1))] == [(0, v) for v in range(1, 6)]


def test_cycle_paths_do_not_revisit():
    g = homogeneous(3, [(0, 1), (1, 2), (0, 2)])
    ego = egonet(g, 0, 3)
    assert sorted(p.nodes for p in enumerate_paths(ego)) == [(0, 1, 2), (0, 2, 1)]
    assert all(p.dead_end for p in enumerate_paths(ego))


@given(st.integers(1, 8), st.floats(0.1, 0.8), st.integers(0, 10**6), st.integers(0, 4))
def test_paths_match_permutation_oracle(n, p, seed, radius):
    G = nx.gnp_random_graph(n, p, seed=seed)
    g = homogeneous(n, list(G.edges()))
    for v in range(n):
        got = [q.nodes for q in enumerate_paths(egonet(g, v, radius))]
        assert len(got) == len(set(got))
        assert set(got) == maximal_paths_bruteforce(n, G.edges(), v, radius)


@given(st.integers(1, 9), st.floats(0.1, 0.8), st.integers(0, 10**6), st.integers(0, 4))
def test_weights_equal_exact_walk_probability(n, p, seed, radius):
    G = nx.gnp_random_graph(n, p, seed=seed)
    g = homogeneous(n, list(G.edges()))
    for v in range(n):
        ego = egonet(g, v, radius)
        paths = enumerate_paths(ego)
        ws = [path_weight(ego, q) for q in paths]
        assert math.fsum(ws) == pytest.approx(1.0, abs=1e-12)
        for q, w in zip(paths, ws):
            assert w == pytest.approx(float(walk_probability(n, G.edges(), v, q.nodes, radius)), abs=1e-15)
        table = featurize_heads(g, [v], radius)
        assert np.allclose(table.weight, ws, atol=1e-15, rtol=0)


def test_path_weight_rejects_foreign_path(spokes):
    ego = egonet(spokes, 0, 2)
    with pytest.raises(ValueError):
        path_weight(ego, SimplePath((0, 6), (5,), False))


def test_layout_names_homogeneous(spokes):
    lay = ColumnLayout.from_schema(spokes.schema, 2)
    assert lay.names == ["H.node.x", "N1.node.x", "N2.node.x"]
    assert lay.width == 3


def test_layout_names_hetero(hetero):
    lay = ColumnLayout.from_schema(hetero.schema, 1)
    assert lay.names == ["H.company.size", "H.company.sector", "H.person.age", "E1.owns.share",
                         "N1.company.size", "N1.company.sector", "N1.person.age"]
    assert lay.categorical.tolist() == [False, True, False, False, False, True, False]
    assert lay.digest == ColumnLayout.from_schema(hetero.schema, 1).digest
    assert lay.digest != ColumnLayout.from_schema(hetero.schema, 2).digest


def test_featurize_spokes(spokes):
    t = featurize_heads(spokes, [0], 2)
    expect = np.array([[0, 1, 6], [0, 2, 7], [0, 3, np.nan], [0, 4, 8], [0, 4, 9], [0, 5, 9]], dtype=float)
    assert np.array_equal(t.X, expect, equal_nan=True)


def test_featurize_hetero_blocks(hetero):
    lay = ColumnLayout.from_schema(hetero.schema, 1)
    ego = egonet(hetero, 3, 1)  # p1 owns c1 and c2
    rows = [featurize_path(hetero, p, lay) for p in enumerate_paths(ego)]
    # head block is person; company head columns stay missing
    for r in rows:
        assert np.isnan(r[:2]).all() and r[2] == 40.0
    assert rows[0][3] == 0.6 and rows[0][4] == 10.0 and rows[0][5] == 1.0
    assert rows[1][3] == 1.0 and rows[1][4] == 3.0


def test_featurize_rejects_other_schema(spokes, hetero):
    lay = ColumnLayout.from_schema(hetero.schema, 1)
    with pytest.raises(LayoutMismatchError):
        featurize_path(spokes, SimplePath((0,), (), True), lay)


def test_metapath_restriction(hetero):
    only_owns = MetapathSchema(2, (("company", "owns", "person", "owns", "company"),))
    t = featurize_heads(hetero, [0], 2, only_owns)
    # c1 -> p1 -> c2 and c1 -> p2 (dead end); the partner edge to c3 is not admissible
    assert [tuple(hetero.ids[v] for v in p.nodes) for p in t.paths] == [("c1", "p1", "c2"), ("c1", "p2")]
    assert t.weight.sum() == pytest.approx(1.0)
    with pytest.raises(Exception):
        MetapathSchema(2, (("company", "owns"),))


def test_metapath_unknown_type(hetero):
    with pytest.raises(Exception):
        featurize_heads(hetero, [0], 1, MetapathSchema(1, (("company", "likes", "person"),)))


def test_path_cap(spokes):
    featurize_heads(spokes, [0], 2, max_paths=6)
    with pytest.raises(PathExplosionError):
        featurize_heads(spokes, [0], 2, max_paths=5)
    with pytest.raises(PathExplosionError):
        featurize_heads(spokes, [0], 2, max_ego_nodes=9)


def test_dataset_labels_and_groups(spokes, tmp_path):
    g = spokes.with_labels([1] + [0] * 9)
    ds = build_dataset(g, [0, 3], 2)
    assert ds.n_rows == 10  # head 3 reaches 1, 2, 4, 5 through 0
    assert ds.label.tolist() == [1] * 6 + [0] * 4
    assert ds.head.tolist() == [0] * 6 + [3] * 4
    write_dataset_csv(g, ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "H.node.x,N1.node.x,N2.node.x,__head,__weight,__label"
    assert lines[3].startswith("0.0,3.0,,0,")
    with pytest.raises(UnlabeledHeadError):
        build_dataset(spokes, [0], 2)


def test_groups_follow_request_order_with_repeats(spokes):
    t = featurize_heads(spokes, [3, 0, 3], 1)
    assert t.group.tolist() == [0, 1, 1, 1, 1, 1, 2]
    assert t.head.tolist() == [3, 0, 0, 0, 0, 0, 3]
    assert np.bincount(t.group, weights=t.weight).tolist() == pytest.approx([1.0, 1.0, 1.0])
