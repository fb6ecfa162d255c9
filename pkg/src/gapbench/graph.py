"""Directed weighted graphs with integer vertex weights."""
from __future__ import annotations

from fractions import Fraction
from numbers import Real
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import BadVertexId, DuplicateEdge, SelfLoop, ValidationError, WeightOutOfRange


class Edge(NamedTuple):
    src: int
    dst: int
    weight: Real


def _as_weight(w) -> Real:
    # strings like "1/10" keep exact rational arithmetic downstream
    if isinstance(w, str):
        w = Fraction(w)
    if isinstance(w, bool) or not isinstance(w, Real):
        raise WeightOutOfRange(f"edge weight {w!r} is not a real number")
    if isinstance(w, int):
        w = Fraction(w)
    return w


class WeightedDigraph:
    """Immutable simple digraph; edge ids are positions in ``edges``."""

    __slots__ = ("n", "vertex_weight", "edges", "in_edges", "out_edges", "names", "_index")

    def __init__(self, n, vertex_weight, edges, names=None):
        self.n = n
        self.vertex_weight: tuple[int, ...] = tuple(vertex_weight)
        self.edges: tuple[Edge, ...] = tuple(edges)
        ins: list[list[int]] = [[] for _ in range(n)]
        outs: list[list[int]] = [[] for _ in range(n)]
        index = {}
        for e, (u, v, _) in enumerate(self.edges):
            ins[v].append(e)
            outs[u].append(e)
            index[(u, v)] = e
        self.in_edges: tuple[tuple[int, ...], ...] = tuple(map(tuple, ins))
        self.out_edges: tuple[tuple[int, ...], ...] = tuple(map(tuple, outs))
        self.names: dict[int, str] = dict(names or {})
        self._index = index

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_id(self, u: int, v: int) -> int:
        try:
            return self._index[(u, v)]
        except KeyError:
            raise KeyError(f"no edge ({u}, {v})") from None

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._index

    def in_degree(self, v: int) -> int:
        return len(self.in_edges[v])

    def out_degree(self, v: int) -> int:
        return len(self.out_edges[v])

    def in_neighbors(self, v: int) -> list[int]:
        return [self.edges[e].src for e in self.in_edges[v]]

    def out_neighbors(self, u: int) -> list[int]:
        return [self.edges[e].dst for e in self.out_edges[u]]

    def is_exact(self) -> bool:
        """True when every edge weight is a rational (``Fraction``)."""
        return all(isinstance(e.weight, Fraction) for e in self.edges)

    def label(self, v: int) -> str:
        return self.names.get(v, str(v))

    def check_vertices(self, vs: Iterable[int]) -> frozenset[int]:
        out = frozenset(vs)
        for v in out:
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < self.n:
                raise BadVertexId(f"vertex {v!r} not in [0, {self.n})")
        return out

    def __repr__(self):
        return f"WeightedDigraph(n={self.n}, m={self.m})"

    def __eq__(self, other):
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        return (self.n, self.vertex_weight, self.edges) == (other.n, other.vertex_weight, other.edges)

    def __hash__(self):
        return hash((self.n, self.vertex_weight, self.edges))


def build_graph(
    n: int,
    vertex_weights: Mapping[int, int] | Sequence[int] | None = None,
    edges: Iterable = (),
    names: Mapping[int, str] | None = None,
) -> WeightedDigraph:
    """Validate and build a :class:`WeightedDigraph`.

    ``vertex_weights`` is either a full sequence or a sparse map (missing
    vertices get weight 1).  Edge weights may be floats, ``Fraction`` or
    rational strings such as ``"1/10"``; integers are promoted to ``Fraction``.
    """
    if not isinstance(n, int) or n < 0:
        raise ValidationError(f"vertex count must be a non-negative integer, got {n!r}")
    weights = [1] * n
    if vertex_weights is not None:
        items = vertex_weights.items() if isinstance(vertex_weights, Mapping) else enumerate(vertex_weights)
        for v, w in items:
            v = int(v)
            if not 0 <= v < n:
                raise BadVertexId(f"vertex weight given for {v}, not in [0, {n})")
            if isinstance(w, bool) or int(w) != w or w < 1:
                raise ValidationError(f"vertex {v} weight {w!r} must be a positive integer")
            weights[v] = int(w)
    seen = set()
    clean = []
    for item in edges:
        u, v, w = item
        for x in (u, v):
            if isinstance(x, bool) or not isinstance(x, int) or not 0 <= x < n:
                raise BadVertexId(f"edge endpoint {x!r} not in [0, {n})")
        if u == v:
            raise SelfLoop(f"self-loop at {u}")
        if (u, v) in seen:
            raise DuplicateEdge(f"duplicate edge ({u}, {v})")
        w = _as_weight(w)
        if not 0 < w <= 1:
            raise WeightOutOfRange(f"edge ({u}, {v}) weight {w} not in (0, 1]")
        seen.add((u, v))
        clean.append(Edge(u, v, w))
    if names:
        for v in names:
            if not 0 <= int(v) < n:
                raise BadVertexId(f"name given for {v}, not in [0, {n})")
        names = {int(v): str(s) for v, s in names.items()}
    return WeightedDigraph(n, weights, clean, names)


def expand_weight_gadget(g: WeightedDigraph) -> WeightedDigraph:
    """Replace each vertex of weight W > 1 by itself plus W-1 pendant vertices.

    Pendants are appended after the original ids and fed from their owner by
    a weight-1 edge, so they are infected exactly when the owner is.  Applying
    the gadget twice is the identity.
    """
    edges = list(g.edges)
    names = dict(g.names)
    n = g.n
    for v, w in enumerate(g.vertex_weight):
        for i in range(1, w):
            edges.append(Edge(v, n, Fraction(1)))
            if v in g.names:
                names[n] = f"{g.names[v]}#{i}"
            n += 1
    if n == g.n:
        return g
    return WeightedDigraph(n, [1] * n, edges, names)


def total_weight(g: WeightedDigraph, s: Iterable[int]) -> int:
    vw = g.vertex_weight
    return sum(vw[v] for v in g.check_vertices(s))
