import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtaxis.graph import (
    FAMILIES,
    FAMILY_ARITY,
    GraphError,
    GraphField,
    MetricGraph,
    build_family,
    discretize,
    integrate,
)

lengths_st = st.floats(min_value=0.1, max_value=20.0, allow_nan=False)


@st.composite
def family_graph(draw):
    fam = draw(st.sampled_from(FAMILIES))
    ls = draw(st.lists(lengths_st, min_size=FAMILY_ARITY[fam], max_size=FAMILY_ARITY[fam]))
    return build_family(fam, ls)


def test_dumbbell_shape():
    g = build_family("dumbbell", [10, 5, 1])
    assert g.total_length == 16
    assert len(g.vertices) == 2 and len(g.edges) == 3
    assert [e.is_loop for e in g.edges] == [True, False, True]
    assert g.edges[1].length == 5


def test_interval_and_figure8_degrees():
    g = build_family("interval", [1])
    assert [g.degree(v) for v in g.vertices] == [1, 1]
    f8 = build_family("figure8", [10, 5])
    assert len(f8.vertices) == 1 and f8.degree(0) == 4
    assert all(e.is_loop for e in f8.edges)


def test_star_and_tadpole_degrees():
    s = build_family("star3", [10, 5, 1])
    assert s.degree(0) == 3 and [s.degree(v) for v in (1, 2, 3)] == [1, 1, 1]
    t = build_family("tadpole", [10, 5])
    assert t.degree(0) == 3 and t.degree(1) == 1


@pytest.mark.parametrize(
    "family, lengths",
    [("dumbbell", [1, 2]), ("tadpole", [1]), ("interval", [1, 2]), ("star3", [1, 0, 1]), ("circle", [-1])],
)
def test_build_family_rejects(family, lengths):
    with pytest.raises(GraphError):
        build_family(family, lengths)


def test_unknown_family():
    with pytest.raises(GraphError):
        build_family("triangle", [1, 1, 1])


def test_graph_validation():
    with pytest.raises(GraphError, match="connected"):
        MetricGraph((0, 1, 2, 3), ((0, 1, 1.0), (2, 3, 1.0)))
    with pytest.raises(GraphError):
        MetricGraph((0, 1), ((0, 1, math.inf),))
    with pytest.raises(GraphError):
        MetricGraph((0, 1), ((0, 5, 1.0),))


def test_json_roundtrip(tmp_path):
    g = build_family("tadpole", [10, 5])
    g.to_json(tmp_path / "g.json")
    h = MetricGraph.from_json(tmp_path / "g.json")
    assert h == g


@pytest.mark.parametrize(
    "family, lengths, h, dofs",
    [
        ("interval", [1], 0.5, 3),
        # interior nodes 99 + 49 + 9 plus the two shared vertex nodes
        ("dumbbell", [10, 5, 1], 0.1, 159),
        ("circle", [1], 0.25, 4),
    ],
)
def test_dof_counts(family, lengths, h, dofs):
    d = discretize(build_family(family, lengths), h)
    assert d.n_dofs == dofs


def test_circle_closure():
    d = discretize(build_family("circle", [1]), 0.25)
    assert d.node_counts == (5,)
    dofs = d.edge_dofs[0]
    assert dofs[0] == dofs[-1] == 0
    assert sorted(dofs[1:-1]) == [1, 2, 3]


def test_short_loop_keeps_interior_node():
    d = discretize(build_family("circle", [1]), 5.0)
    assert d.node_counts == (3,)
    assert d.n_dofs == 2


def test_discretize_rejects_bad_h():
    with pytest.raises(GraphError):
        discretize(build_family("interval", [1]), 0.0)


@given(family_graph(), st.floats(min_value=0.05, max_value=5.0))
@settings(max_examples=60, deadline=None)
def test_dof_map_invariants(g, h):
    d = discretize(g, h)
    assert d.n_dofs == sum(n - 2 for n in d.node_counts) + len(g.vertices)
    # every vertex DOF is hit by exactly deg(v) edge ends, interior DOFs exactly once
    hits = np.zeros(d.n_dofs, dtype=int)
    for dofs in d.edge_dofs:
        np.add.at(hits, dofs, 1)
    for v in g.vertices:
        assert hits[d.vertex_dof(v)] == g.degree(v)
    assert np.all(hits[len(g.vertices):] == 1)
    for e, n in zip(g.edges, d.node_counts):
        assert n == max(2, math.ceil(e.length / h - 1e-9 * max(1, e.length / h)) + 1) or (e.is_loop and n == 3)
        assert e.length / (n - 1) <= h * (1 + 1e-9)


@given(family_graph(), st.floats(min_value=0.05, max_value=2.0), st.floats(-3, 3))
@settings(max_examples=40, deadline=None)
def test_integrate_constant(g, h, c):
    d = discretize(g, h)
    assert integrate(GraphField.constant(d, c)) == pytest.approx(c * g.total_length, rel=1e-12, abs=1e-12)


def test_integrate_examples():
    d = discretize(build_family("dumbbell", [10, 5, 1]), 0.1)
    assert integrate(GraphField.constant(d, 1.0)) == pytest.approx(16)
    d = discretize(build_family("interval", [2]), 0.3)
    assert integrate(GraphField.from_function(d, lambda e, x: x)) == pytest.approx(2.0, rel=1e-14)


@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.lists(st.floats(0, 5), min_size=8, max_size=8))
def test_integrate_linear_and_monotone(f_vals, gap):
    d = discretize(build_family("star3", [1, 2, 3]), 1.0)
    f = np.array(f_vals)[: d.n_dofs] if d.n_dofs <= 8 else None
    assert f is not None
    g = f + np.array(gap)[: d.n_dofs]
    F, G = GraphField(d, f), GraphField(d, g)
    assert integrate(F) <= integrate(G) + 1e-12
    assert integrate(GraphField(d, 2 * f - g)) == pytest.approx(2 * integrate(F) - integrate(G), abs=1e-10)


def test_integrate_second_order():
    g = build_family("interval", [math.pi])
    errs = []
    for h in (0.1, 0.05, 0.025):
        d = discretize(g, h)
        val = integrate(GraphField.from_function(d, lambda e, x: np.cos(x / 2)))
        errs.append(abs(val - 2.0))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.5 < r < 4.5 for r in ratios)


def test_field_shape_check():
    d = discretize(build_family("interval", [1]), 0.5)
    with pytest.raises(GraphError):
        GraphField(d, np.zeros(4))


def test_field_edge_views():
    d = discretize(build_family("tadpole", [2, 1]), 0.5)
    f = GraphField.from_function(d, lambda e, x: np.sin(np.pi * x / 2) if e == 0 else 0 * x)
    assert f.on_edge(0)[0] == f.on_edge(0)[-1] == f.on_edge(1)[0]
    assert set(f.to_dict()) == {"0", "1"}
    assert f.edge_gradients().shape == (d.n_cells,)
