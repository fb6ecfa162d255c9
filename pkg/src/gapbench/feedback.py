"""Feedback observed by the seed picker and the models it conditions to.

For triggering models a partial realization gives each edge LIVE, BLOCKED or
UNKNOWN.  Conditioning on it yields a reduced model over the unknown edges in
which every vertex keeps its original triggering distribution restricted to
the revealed statuses; the expected objective of ``S ∪ X`` given the partial
equals the reduced model's σ of ``known_infected ∪ X``.

For the general threshold model the feedback is a level per vertex; known
infected vertices are removed and the survivors' local functions rescaled.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .diffusion import (
    IC, LT, ConditionedForm, EdgeStatus, Kind, ModelSpec, Realization, ThresholdRealization,
    cascade, gtm_cascade,
)
from .errors import DegenerateLevel, InconsistentPartial, ValidationError
from .graph import Edge, WeightedDigraph

RENORM_FLOOR = 1e-15
LEVEL_CEILING = 1.0 - 1e-12


@dataclass(frozen=True)
class PartialRealization:
    status: tuple[EdgeStatus, ...]

    @classmethod
    def unknown(cls, m_or_n) -> "PartialRealization":
        n_edges = m_or_n.graph.m if isinstance(m_or_n, ModelSpec) else int(m_or_n)
        return cls((EdgeStatus.UNKNOWN,) * n_edges)

    def revealed(self) -> frozenset[int]:
        return frozenset(e for e, s in enumerate(self.status) if s is not EdgeStatus.UNKNOWN)

    def consistent_with(self, phi: Realization) -> bool:
        return all(s is EdgeStatus.UNKNOWN or s == p for s, p in zip(self.status, phi.status))

    def key(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.status)


class _Infected(enum.Enum):
    INFECTED = "Infected"

    def __repr__(self):
        return "Infected"


INFECTED = _Infected.INFECTED


@dataclass(frozen=True)
class LevelRealization:
    level: tuple

    def __post_init__(self):
        for v, x in enumerate(self.level):
            if x is not INFECTED and not 0.0 <= x <= 1.0:
                raise ValidationError(f"level of vertex {v} must be Infected or lie in [0, 1], got {x!r}")

    @property
    def infected(self) -> frozenset[int]:
        return frozenset(v for v, x in enumerate(self.level) if x is INFECTED)

    def consistent_with(self, theta: ThresholdRealization) -> bool:
        return all(x is INFECTED or t > x for x, t in zip(self.level, theta.theta))


@dataclass(frozen=True, eq=False)
class ConditionedModel:
    """Reduced model plus the bookkeeping that maps it back.

    ``edge_map[i]`` is the original id of reduced edge ``i``; ``vertex_map[i]``
    the original id of reduced vertex ``i`` (identity on the triggering path).
    ``removed_weight`` is the weight of vertices dropped from the graph.
    """

    reduced: ModelSpec
    known_infected: frozenset[int]
    edge_map: tuple[int, ...]
    vertex_map: tuple[int, ...]
    removed_weight: int = 0

    def to_reduced(self, vs: Iterable[int]) -> frozenset[int]:
        back = {o: i for i, o in enumerate(self.vertex_map)}
        return frozenset(back[v] for v in vs if v in back)


# --------------------------------------------------------------------------
# triggering feedback


def _check_triggering(m: ModelSpec):
    m.require_triggering()


def full_adoption_feedback(m: ModelSpec, phi: Realization, seeds: Iterable[int]) -> PartialRealization:
    """Reveal the out-edges of every infected vertex."""
    _check_triggering(m)
    infected = cascade(m, phi, seeds)
    src = [e.src for e in m.graph.edges]
    return PartialRealization(tuple(
        phi.status[e] if src[e] in infected else EdgeStatus.UNKNOWN for e in range(m.graph.m)))


def myopic_feedback(m: ModelSpec, phi: Realization, seeds: Iterable[int]) -> PartialRealization:
    """Reveal the out-edges of the seeds only."""
    _check_triggering(m)
    seeds = m.graph.check_vertices(seeds)
    return PartialRealization(tuple(
        phi.status[e] if edge.src in seeds else EdgeStatus.UNKNOWN
        for e, edge in enumerate(m.graph.edges)))


FEEDBACKS = {"full": full_adoption_feedback, "myopic": myopic_feedback}


def parse_feedback(kind: str) -> str:
    k = str(kind).lower().replace("-", "_")
    if k in ("full", "full_adoption", "f"):
        return "full"
    if k in ("myopic", "m"):
        return "myopic"
    raise ValidationError(f"unknown feedback model {kind!r}")


def feedback(m: ModelSpec, phi, seeds, kind: str):
    kind = parse_feedback(kind)
    if m.kind is Kind.GTM:
        return (gtm_full_adoption_feedback if kind == "full" else gtm_myopic_feedback)(m, phi, seeds)
    return FEEDBACKS[kind](m, phi, seeds)


def _check_partial(m: ModelSpec, partial: PartialRealization):
    g = m.graph
    if len(partial.status) != g.m:
        raise InconsistentPartial(f"partial realization has {len(partial.status)} statuses for {g.m} edges")
    for v in range(g.n):
        if m.labels[v] != LT:
            continue
        live = [e for e in g.in_edges[v] if partial.status[e] == EdgeStatus.LIVE]
        if len(live) > 1:
            raise InconsistentPartial(f"LT vertex {v} has {len(live)} revealed live in-edges")


def known_infected(m: ModelSpec, partial: PartialRealization, seeds: Iterable[int]) -> frozenset[int]:
    """Seeds plus everything reachable from them along revealed-live edges."""
    _check_triggering(m)
    _check_partial(m, partial)
    g = m.graph
    seen = set(g.check_vertices(seeds))
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for e in g.out_edges[u]:
            if partial.status[e] == EdgeStatus.LIVE:
                v = g.edges[e].dst
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
    return frozenset(seen)


def condition_model(m: ModelSpec, partial: PartialRealization, seeds: Iterable[int]) -> ConditionedModel:
    """Reduced triggering model given the revealed edge statuses.

    IC in-edges are independent, so unknown ones keep their weights.  An LT
    vertex with a revealed-blocked in-edge has its remaining options
    renormalized by the unblocked mass; one with a revealed-live in-edge has
    its triggering set fixed, so its other in-edges are blocked too.  A live
    edge out of a vertex not known to be infected (never produced by either
    feedback model) is kept as a weight-1 edge so the identity still holds.
    """
    _check_triggering(m)
    g = m.graph
    known = known_infected(m, partial, seeds)
    st = partial.status
    exact = g.is_exact()
    new_edges: list[Edge] = []
    edge_map: list[int] = []
    one = Fraction(1)
    for v in range(g.n):
        ins = g.in_edges[v]
        if not ins:
            continue
        live = [e for e in ins if st[e] == EdgeStatus.LIVE]
        blocked = [e for e in ins if st[e] == EdgeStatus.BLOCKED]
        unknown = [e for e in ins if st[e] == EdgeStatus.UNKNOWN]
        if m.labels[v] == IC:
            for e in blocked:
                if g.edges[e].weight == 1:
                    raise InconsistentPartial(f"edge {g.edges[e][:2]} has weight 1 but is revealed blocked")
            for e in live:
                if g.edges[e].src not in known:
                    new_edges.append(Edge(g.edges[e].src, v, one))
                    edge_map.append(e)
            for e in unknown:
                new_edges.append(g.edges[e])
                edge_map.append(e)
            continue
        if live:
            e = live[0]
            if g.edges[e].src not in known:
                new_edges.append(Edge(g.edges[e].src, v, one))
                edge_map.append(e)
            continue
        mass = sum((g.edges[e].weight for e in blocked), Fraction(0))
        rest = 1 - mass
        if (rest <= 0) if exact else (rest < RENORM_FLOOR):
            raise InconsistentPartial(f"LT vertex {v} has all of its triggering mass revealed blocked")
        for e in unknown:
            w = g.edges[e].weight
            w2 = w / rest if blocked else w
            if not exact and w2 > 1:
                w2 = 1.0
            new_edges.append(Edge(g.edges[e].src, v, w2))
            edge_map.append(e)
    order = sorted(range(len(new_edges)), key=lambda i: edge_map[i])
    edges = [new_edges[i] for i in order]
    emap = tuple(edge_map[i] for i in order)
    g2 = WeightedDigraph(g.n, g.vertex_weight, edges, g.names)
    reduced = ModelSpec(g2, m.kind, m.labels if m.kind is Kind.MIXTURE else None, None,
                        m.candidates, m.k)
    return ConditionedModel(reduced, known, emap, tuple(range(g.n)))


# --------------------------------------------------------------------------
# general threshold model feedback


def gtm_full_adoption_feedback(m: ModelSpec, theta: ThresholdRealization, seeds) -> LevelRealization:
    m.require_gtm()
    infected = gtm_cascade(m, theta, seeds)
    forms = m.local_influence
    return LevelRealization(tuple(
        INFECTED if v in infected else forms[v](infected) for v in range(m.n)))


def gtm_myopic_feedback(m: ModelSpec, theta: ThresholdRealization, seeds) -> LevelRealization:
    """Seeds are infected; any other vertex shows whether the seeds alone
    pushed it over its threshold, and otherwise the level they reached."""
    m.require_gtm()
    seeds = m.graph.check_vertices(seeds)
    forms = m.local_influence
    out = []
    for v in range(m.n):
        if v in seeds:
            out.append(INFECTED)
            continue
        lv = forms[v](seeds)
        out.append(INFECTED if lv >= theta.theta[v] else lv)
    return LevelRealization(tuple(out))


def gtm_condition(m: ModelSpec, levels: LevelRealization) -> ConditionedModel:
    """Drop the infected vertices and rescale every survivor's local function
    to its threshold's posterior range.

    Under myopic feedback a survivor can have infected in-neighbours whose
    pull it has not yet felt, so the rescaled function may be positive on
    the empty set; such reduced models skip the ``f(∅) = 0`` check.
    """
    m.require_gtm()
    g = m.graph
    if len(levels.level) != g.n:
        raise ValidationError(f"level realization has {len(levels.level)} entries for {g.n} vertices")
    removed = levels.infected
    keep = [v for v in range(g.n) if v not in removed]
    new_id = {v: i for i, v in enumerate(keep)}
    for v in keep:
        if levels.level[v] >= LEVEL_CEILING:
            raise DegenerateLevel(f"vertex {v} has level {levels.level[v]!r} but is not infected")
    edges, emap = [], []
    for e, edge in enumerate(g.edges):
        if edge.src in new_id and edge.dst in new_id:
            edges.append(Edge(new_id[edge.src], new_id[edge.dst], edge.weight))
            emap.append(e)
    g2 = WeightedDigraph(len(keep), [g.vertex_weight[v] for v in keep], edges,
                         {new_id[v]: s for v, s in g.names.items() if v in new_id})
    forms = []
    for v in keep:
        f = m.local_influence[v]
        order = [new_id[u] for u in f.order if u in new_id]
        to_orig = {new_id[u]: u for u in f.order if u in new_id}
        forms.append(ConditionedForm(f, removed, levels.level[v], order, to_orig))
    cands = tuple(new_id[v] for v in m.candidates if v in new_id)
    reduced = ModelSpec(g2, Kind.GTM, None, tuple(forms), cands, m.k, allow_nonzero_empty=True)
    return ConditionedModel(reduced, removed, tuple(emap), tuple(keep), m.weight_of(removed))
