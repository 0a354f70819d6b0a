"""Metric graphs, the graph families used throughout, and per-edge P1 grids.

A metric graph is a combinatorial multigraph (loops and parallel edges
allowed) whose edges carry positive lengths. Functions on the graph are
sampled on a uniform grid along each edge; grid nodes sitting on a vertex
are merged into one shared degree of freedom, so vertex continuity holds
by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

FAMILIES = ("interval", "circle", "dumbbell", "tadpole", "figure8", "star3")

FAMILY_ARITY = {
    "interval": 1,
    "circle": 1,
    "dumbbell": 3,
    "tadpole": 2,
    "figure8": 2,
    "star3": 3,
}


class GraphError(ValueError):
    """Invalid graph description or discretization request."""


class Edge(NamedTuple):
    tail: int
    head: int
    length: float

    @property
    def is_loop(self) -> bool:
        return self.tail == self.head


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[int, ...]
    edges: tuple[Edge, ...]
    name: str | None = None

    def __post_init__(self):
        verts = tuple(int(v) for v in self.vertices)
        edges = tuple(Edge(int(e[0]), int(e[1]), float(e[2])) for e in self.edges)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edges)
        if not verts:
            raise GraphError("graph has no vertices")
        if len(set(verts)) != len(verts):
            raise GraphError("duplicate vertex ids")
        if not edges:
            raise GraphError("graph has no edges")
        known = set(verts)
        for i, e in enumerate(edges):
            if e.tail not in known or e.head not in known:
                raise GraphError(f"edge {i} references an unknown vertex")
            if not (math.isfinite(e.length) and e.length > 0):
                raise GraphError(f"edge {i} has non-positive or non-finite length {e.length}")
        if not self._connected():
            raise GraphError("graph is not connected")

    def _connected(self) -> bool:
        parent = {v: v for v in self.vertices}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.edges:
            parent[find(e.tail)] = find(e.head)
        return len({find(v) for v in self.vertices}) == 1

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    @property
    def min_length(self) -> float:
        return min(e.length for e in self.edges)

    @property
    def max_length(self) -> float:
        return max(e.length for e in self.edges)

    def degree(self, v: int) -> int:
        """Number of edge ends at ``v``; a loop counts twice."""
        return sum((e.tail == v) + (e.head == v) for e in self.edges)

    def vertex_index(self, v: int) -> int:
        return self.vertices.index(v)

    def to_dict(self) -> dict:
        out = {
            "vertices": list(self.vertices),
            "edges": [{"from": e.tail, "to": e.head, "length": e.length} for e in self.edges],
        }
        if self.name is not None:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "MetricGraph":
        try:
            edges = [(e["from"], e["to"], e["length"]) for e in data["edges"]]
            vertices = data.get("vertices")
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph description: {exc}") from exc
        if vertices is None:
            vertices = sorted({v for e in edges for v in e[:2]})
        return cls(tuple(vertices), tuple(edges), data.get("name"))

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "MetricGraph":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: {exc}") from exc
        return cls.from_dict(data)


def build_family(family: str, lengths: Sequence[float]) -> MetricGraph:
    """Build one of the named graph families.

    Edge conventions (first vertex id is 0):

    * ``interval``  -- ``[l]``: a single edge between two degree-one vertices
    * ``circle``    -- ``[l]``: one loop at a degree-two vertex
    * ``dumbbell``  -- ``[l1, l2, l3]``: loops ``l1`` and ``l3`` joined by the bridge ``l2``
    * ``tadpole``   -- ``[l1, l2]``: loop ``l1`` with pendant edge ``l2``
    * ``figure8``   -- ``[l1, l2]``: two loops at one vertex
    * ``star3``     -- ``[l1, l2, l3]``: three pendant edges at a central vertex
    """
    if family not in FAMILY_ARITY:
        raise GraphError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    lengths = [float(x) for x in lengths]
    if len(lengths) != FAMILY_ARITY[family]:
        raise GraphError(f"{family} takes {FAMILY_ARITY[family]} lengths, got {len(lengths)}")
    if any(not (math.isfinite(x) and x > 0) for x in lengths):
        raise GraphError(f"lengths must be positive and finite, got {lengths}")

    if family == "interval":
        verts, edges = (0, 1), [(0, 1, lengths[0])]
    elif family == "circle":
        verts, edges = (0,), [(0, 0, lengths[0])]
    elif family == "dumbbell":
        l1, l2, l3 = lengths
        verts, edges = (0, 1), [(0, 0, l1), (0, 1, l2), (1, 1, l3)]
    elif family == "tadpole":
        l1, l2 = lengths
        verts, edges = (0, 1), [(0, 0, l1), (0, 1, l2)]
    elif family == "figure8":
        l1, l2 = lengths
        verts, edges = (0,), [(0, 0, l1), (0, 0, l2)]
    else:
        verts, edges = (0, 1, 2, 3), [(0, i + 1, x) for i, x in enumerate(lengths)]
    label = f"{family}[{','.join(f'{x:g}' for x in lengths)}]"
    return MetricGraph(verts, tuple(edges), label)


@dataclass(frozen=True, eq=False)
class Discretization:
    """Uniform P1 grid on every edge with shared vertex DOFs.

    Global numbering: vertex DOFs come first, in ``graph.vertices`` order,
    followed by the interior nodes of each edge in edge order.
    """

    graph: MetricGraph
    node_counts: tuple[int, ...]
    edge_dofs: tuple[np.ndarray, ...] = field(repr=False)
    n_dofs: int
    # flattened cell arrays over the whole graph
    cell_left: np.ndarray = field(repr=False)
    cell_right: np.ndarray = field(repr=False)
    cell_h: np.ndarray = field(repr=False)
    cell_edge: np.ndarray = field(repr=False)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(e.length / (n - 1) for e, n in zip(self.graph.edges, self.node_counts))

    @property
    def h_max(self) -> float:
        return max(self.spacings)

    @property
    def h_min(self) -> float:
        return min(self.spacings)

    @property
    def n_cells(self) -> int:
        return len(self.cell_h)

    def coordinates(self, edge: int) -> np.ndarray:
        """Arc-length coordinates of the nodes of ``edge`` measured from its tail."""
        return np.linspace(0.0, self.graph.edges[edge].length, self.node_counts[edge])

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights per global DOF (P1 lumped mass)."""
        w = np.zeros(self.n_dofs)
        half = 0.5 * self.cell_h
        np.add.at(w, self.cell_left, half)
        np.add.at(w, self.cell_right, half)
        w.setflags(write=False)
        return w

    def vertex_dof(self, v: int) -> int:
        return self.graph.vertex_index(v)


def discretize(graph: MetricGraph, target_h: float) -> Discretization:
    """Grid every edge with ``N_e = max(2, ceil(l_e / target_h) + 1)`` nodes.

    Loops get at least three nodes so that the closed cycle has a node
    besides the vertex.
    """
    if not (math.isfinite(target_h) and target_h > 0):
        raise GraphError(f"target_h must be positive, got {target_h}")
    counts = []
    for e in graph.edges:
        # guard against ceil(5.000000000001) style round-up from float division
        ratio = e.length / target_h
        n = max(2, math.ceil(ratio - 1e-9 * max(1.0, ratio)) + 1)
        if e.is_loop:
            n = max(n, 3)
        counts.append(n)

    next_dof = len(graph.vertices)
    edge_dofs, left, right, hs, owner = [], [], [], [], []
    for i, (e, n) in enumerate(zip(graph.edges, counts)):
        interior = np.arange(next_dof, next_dof + n - 2)
        next_dof += n - 2
        dofs = np.concatenate(([graph.vertex_index(e.tail)], interior, [graph.vertex_index(e.head)]))
        dofs = dofs.astype(np.intp)
        dofs.setflags(write=False)
        edge_dofs.append(dofs)
        left.append(dofs[:-1])
        right.append(dofs[1:])
        hs.append(np.full(n - 1, e.length / (n - 1)))
        owner.append(np.full(n - 1, i, dtype=np.intp))

    arrays = [np.concatenate(a) for a in (left, right, hs, owner)]
    for a in arrays:
        a.setflags(write=False)
    return Discretization(graph, tuple(counts), tuple(edge_dofs), next_dof, *arrays)


@dataclass
class GraphField:
    disc: Discretization
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.disc.n_dofs,):
            raise GraphError(
                f"field has shape {self.values.shape}, discretization needs ({self.disc.n_dofs},)"
            )

    @classmethod
    def constant(cls, disc: Discretization, c: float) -> "GraphField":
        return cls(disc, np.full(disc.n_dofs, float(c)))

    @classmethod
    def from_function(cls, disc: Discretization, f: Callable[[int, np.ndarray], np.ndarray]) -> "GraphField":
        """Sample ``f(edge_index, x)`` at every node.

        A vertex DOF takes the value from the first edge end that reaches it;
        ``f`` is expected to be continuous there.
        """
        values = np.full(disc.n_dofs, np.nan)
        for i, dofs in enumerate(disc.edge_dofs):
            vals = np.broadcast_to(np.asarray(f(i, disc.coordinates(i)), dtype=float), dofs.shape)
            unset = np.isnan(values[dofs])
            values[dofs[unset]] = vals[unset]
        return cls(disc, values)

    def on_edge(self, edge: int) -> np.ndarray:
        return self.values[self.disc.edge_dofs[edge]]

    def edge_gradients(self) -> np.ndarray:
        """Cellwise P1 derivative along edge orientation."""
        d = self.disc
        return (self.values[d.cell_right] - self.values[d.cell_left]) / d.cell_h

    def to_dict(self) -> dict:
        return {str(i): self.on_edge(i).tolist() for i in range(len(self.disc.graph.edges))}


def integrate(f: GraphField) -> float:
    """Trapezoidal integral over the graph; exact for edgewise affine fields."""
    return float(f.disc.weights @ f.values)
