"""Diffusion semantics: triggering models (ICM, LTM, mixture) and the general
threshold model, plus the round-based processes used as equivalence oracles.

Realizations of triggering models assign every edge LIVE or BLOCKED; the
infected set is everything reachable from the seeds along live edges.  GTM
realizations are vertex thresholds in (0, 1].
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import LTWeightExceeded, ValidationError, WrongModelKind
from .graph import WeightedDigraph, expand_weight_gadget
from .rng import as_generator

IC = "IC"
LT = "LT"
LT_TOLERANCE = 1e-12


class Kind(str, enum.Enum):
    ICM = "ICM"
    LTM = "LTM"
    MIXTURE = "MIXTURE"
    GTM = "GTM"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValidationError(f"unknown model kind {value!r}") from None


TRIGGERING = (Kind.ICM, Kind.LTM, Kind.MIXTURE)


class EdgeStatus(enum.IntEnum):
    BLOCKED = 0
    LIVE = 1
    UNKNOWN = 2


# --------------------------------------------------------------------------
# local influence functions (GTM)


class LocalInfluence:
    """Monotone local influence function of one vertex.

    Called with any collection of infected vertices; only the in-neighbours
    in ``order`` matter.  Values are memoized per infected in-neighbour set.
    """

    def __init__(self, order: Sequence[int]):
        self.order = tuple(order)
        self.in_neighbors = frozenset(self.order)
        self._memo: dict[frozenset, float] = {}

    def __call__(self, infected: Iterable[int]) -> float:
        key = self.in_neighbors.intersection(infected)
        try:
            return self._memo[key]
        except KeyError:
            val = self._memo[key] = float(self._value(key))
            return val

    def _value(self, key: frozenset) -> float:
        raise NotImplementedError

    def batch(self, cols: np.ndarray) -> np.ndarray:
        """Evaluate on a boolean matrix whose columns follow ``order``."""
        n = cols.shape[0]
        if not self.order:
            return np.full(n, self(()))
        codes = np.packbits(cols, axis=1, bitorder="little")
        uniq, inv = np.unique(codes, axis=0, return_inverse=True)
        vals = np.empty(len(uniq))
        for i, row in enumerate(uniq):
            bits = np.unpackbits(row, bitorder="little")[: len(self.order)]
            vals[i] = self(u for u, b in zip(self.order, bits) if b)
        return vals[inv.reshape(-1)]


class ICForm(LocalInfluence):
    """f(X) = 1 - prod_{u in X} (1 - w(u, v))."""

    def __init__(self, weights: dict[int, float]):
        super().__init__(sorted(weights))
        self.w = np.array([float(weights[u]) for u in self.order])

    def _value(self, key):
        p = 1.0
        for u, w in zip(self.order, self.w):
            if u in key:
                p *= 1.0 - w
        return 1.0 - p

    def batch(self, cols):
        return 1.0 - np.prod(1.0 - cols * self.w, axis=1)


class LTForm(LocalInfluence):
    """f(X) = sum_{u in X} w(u, v)."""

    def __init__(self, weights: dict[int, float]):
        super().__init__(sorted(weights))
        self.w = np.array([float(weights[u]) for u in self.order])

    def _value(self, key):
        return sum(w for u, w in zip(self.order, self.w) if u in key)

    def batch(self, cols):
        return cols @ self.w if len(self.order) else np.zeros(cols.shape[0])


class CustomForm(LocalInfluence):
    """User hook: ``fn(frozenset_of_infected_in_neighbours) -> float``."""

    def __init__(self, order: Sequence[int], fn: Callable[[frozenset], float]):
        super().__init__(order)
        self.fn = fn

    def _value(self, key):
        return self.fn(key)


class ConditionedForm(LocalInfluence):
    """(f(base ∪ Y) - c) / (1 - c) on a vertex-renumbered graph.

    ``to_orig`` maps the new in-neighbour ids to ids of ``inner``'s graph.
    """

    def __init__(self, inner: LocalInfluence, base: frozenset, level: float,
                 order: Sequence[int], to_orig: dict[int, int]):
        super().__init__(order)
        self.inner = inner
        self.base = frozenset(base) & inner.in_neighbors
        self.level = float(level)
        self.to_orig = dict(to_orig)
        pos = {u: j for j, u in enumerate(self.order)}
        orig_pos = {self.to_orig[u]: j for u, j in pos.items()}
        # inner column j: -1 => in base (always infected), else index into our order
        self._map = np.array([-1 if u in self.base else orig_pos[u] for u in inner.order], dtype=int)

    def _value(self, key):
        y = {self.to_orig[u] for u in key}
        return (self.inner(self.base | y) - self.level) / (1.0 - self.level)

    def batch(self, cols):
        n = cols.shape[0]
        inner_cols = np.ones((n, len(self._map)), dtype=bool)
        sel = self._map >= 0
        if sel.any():
            inner_cols[:, sel] = cols[:, self._map[sel]]
        return (self.inner.batch(inner_cols) - self.level) / (1.0 - self.level)


def ic_form(g: WeightedDigraph, v: int) -> ICForm:
    return ICForm({g.edges[e].src: g.edges[e].weight for e in g.in_edges[v]})


def lt_form(g: WeightedDigraph, v: int) -> LTForm:
    return LTForm({g.edges[e].src: g.edges[e].weight for e in g.in_edges[v]})


# --------------------------------------------------------------------------
# model specification


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A graph plus per-vertex diffusion semantics.

    ``labels`` gives IC/LT per vertex (derived from ``kind`` unless MIXTURE;
    for GTM it selects the built-in local influence form when
    ``local_influence`` is omitted).  ``candidates`` defaults to all vertices.
    ``k`` is an optional default seed budget carried by generated instances.
    """

    graph: WeightedDigraph
    kind: Kind
    labels: tuple[str, ...] | None = None
    local_influence: tuple[LocalInfluence, ...] | None = None
    candidates: tuple[int, ...] | None = None
    k: int | None = None
    allow_nonzero_empty: bool = field(default=False, repr=False)

    def __post_init__(self):
        g = self.graph
        kind = Kind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.ICM:
            labels = (IC,) * g.n
        elif kind is Kind.LTM:
            labels = (LT,) * g.n
        else:
            if self.labels is None:
                if kind is Kind.MIXTURE:
                    raise ValidationError("MIXTURE models need a per-vertex IC/LT label")
                labels = (LT if self.local_influence is None else IC,) * g.n
            else:
                labels = tuple(str(x).upper() for x in self.labels)
        if len(labels) != g.n or any(x not in (IC, LT) for x in labels):
            raise ValidationError("labels must give IC or LT for every vertex")
        object.__setattr__(self, "labels", labels)

        builtin_forms = self.local_influence is None
        if kind is Kind.GTM:
            forms = self.local_influence
            if forms is None:
                forms = tuple(ic_form(g, v) if labels[v] == IC else lt_form(g, v) for v in range(g.n))
            forms = tuple(forms)
            if len(forms) != g.n:
                raise ValidationError("GTM needs one local influence function per vertex")
            object.__setattr__(self, "local_influence", forms)
            self._check_local_functions()
        elif self.local_influence is not None:
            raise ValidationError("local influence functions are only used by GTM models")

        if kind in (Kind.LTM, Kind.MIXTURE) or (kind is Kind.GTM and builtin_forms):
            for v in range(g.n):
                if labels[v] == LT:
                    self._check_lt_sum(v)

        if self.candidates is None:
            cands = tuple(range(g.n))
        else:
            cands = tuple(sorted(g.check_vertices(self.candidates)))
        object.__setattr__(self, "candidates", cands)
        if self.k is not None and (not isinstance(self.k, int) or self.k < 0):
            raise ValidationError(f"budget k must be a non-negative integer, got {self.k!r}")

    def _check_lt_sum(self, v):
        g = self.graph
        total = sum((g.edges[e].weight for e in g.in_edges[v]), Fraction(0))
        if isinstance(total, Fraction):
            bad = total > 1
        else:
            bad = total > 1 + LT_TOLERANCE
        if bad:
            raise LTWeightExceeded(f"LT vertex {v} has incoming weight {float(total):.6g} > 1")

    def _check_local_functions(self):
        for v, f in enumerate(self.local_influence):
            if not self.allow_nonzero_empty and abs(f(())) > 1e-12:
                raise ValidationError(f"local influence of vertex {v} is nonzero on the empty set")
            chain, prev = [], f(())
            for u in f.order:
                chain.append(u)
                cur = f(chain)
                if cur < prev - 1e-12 or cur > 1 + 1e-12:
                    raise ValidationError(f"local influence of vertex {v} is not monotone into [0, 1]")
                prev = cur

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def is_triggering(self) -> bool:
        return self.kind in TRIGGERING

    @property
    def exact(self) -> bool:
        return self.graph.is_exact()

    def require_triggering(self):
        if not self.is_triggering:
            raise WrongModelKind(f"operation needs a triggering model, got {self.kind.value}")

    def require_gtm(self):
        if self.kind is not Kind.GTM:
            raise WrongModelKind(f"operation needs a GTM model, got {self.kind.value}")

    def weight_of(self, vs: Iterable[int]) -> int:
        vw = self.graph.vertex_weight
        return sum(vw[v] for v in vs)

    @cached_property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.graph.vertex_weight, dtype=float)

    @cached_property
    def _float_weights(self) -> np.ndarray:
        return np.array([float(e.weight) for e in self.graph.edges])

    @cached_property
    def _edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.graph
        src = np.array([e.src for e in g.edges], dtype=int)
        dst = np.array([e.dst for e in g.edges], dtype=int)
        return src, dst

    def with_candidates(self, candidates) -> "ModelSpec":
        return ModelSpec(self.graph, self.kind, self.labels if self.kind is Kind.MIXTURE else None,
                         self.local_influence, tuple(candidates), self.k, self.allow_nonzero_empty)


def make_model(graph: WeightedDigraph, kind, labels=None, local_influence=None,
               candidates=None, k=None) -> ModelSpec:
    return ModelSpec(graph, Kind.parse(kind), labels, local_influence, candidates, k)


def expand_model_weights(m: ModelSpec) -> ModelSpec:
    """Model over :func:`expand_weight_gadget` of the graph; pendants are LT
    (their single weight-1 in-edge makes IC and LT coincide) and never candidates."""
    g2 = expand_weight_gadget(m.graph)
    if g2 is m.graph:
        return m
    labels = tuple(m.labels) + (LT,) * (g2.n - m.n)
    forms = None
    if m.kind is Kind.GTM:
        forms = tuple(m.local_influence) + tuple(lt_form(g2, v) for v in range(m.n, g2.n))
        labels = None
    return ModelSpec(g2, m.kind, labels if m.kind is Kind.MIXTURE else None, forms,
                     m.candidates, m.k)


# --------------------------------------------------------------------------
# realizations


@dataclass(frozen=True)
class Realization:
    status: tuple[EdgeStatus, ...]

    @classmethod
    def from_live(cls, live: Iterable[bool]) -> "Realization":
        return cls(tuple(EdgeStatus.LIVE if x else EdgeStatus.BLOCKED for x in live))

    @property
    def live(self) -> tuple[bool, ...]:
        return tuple(s is EdgeStatus.LIVE for s in self.status)


@dataclass(frozen=True)
class ThresholdRealization:
    theta: tuple[float, ...]

    def __post_init__(self):
        if any(not 0 < t <= 1 for t in self.theta):
            raise ValidationError("thresholds must lie in (0, 1]")


def sample_realizations(m: ModelSpec, n: int, rng) -> np.ndarray:
    """``n`` realizations as a boolean (n, |E|) live-edge matrix."""
    m.require_triggering()
    gen = as_generator(rng)
    g = m.graph
    w = m._float_weights
    live = np.zeros((n, g.m), dtype=bool)
    u = gen.random((n, g.m))
    ic_edges = [e for e in range(g.m) if m.labels[g.edges[e].dst] == IC]
    if ic_edges:
        live[:, ic_edges] = u[:, ic_edges] < w[ic_edges]
    lt_vertices = [v for v in range(g.n) if m.labels[v] == LT and g.in_edges[v]]
    if lt_vertices:
        r = gen.random((n, len(lt_vertices)))
        for j, v in enumerate(lt_vertices):
            es = list(g.in_edges[v])
            cum = np.cumsum(w[es])
            idx = np.searchsorted(cum, r[:, j], side="right")
            for i, e in enumerate(es):
                live[:, e] = idx == i
    return live


def sample_realization(m: ModelSpec, rng) -> Realization:
    return Realization.from_live(sample_realizations(m, 1, rng)[0])


def cascade(m: ModelSpec, phi: Realization, seeds: Iterable[int]) -> frozenset[int]:
    """Vertices reachable from ``seeds`` along live edges."""
    g = m.graph
    seeds = g.check_vertices(seeds)
    status = phi.status
    seen = set(seeds)
    queue = deque(seeds)
    while queue:
        u = queue.popleft()
        for e in g.out_edges[u]:
            if status[e] == EdgeStatus.LIVE:
                v = g.edges[e].dst
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
    return frozenset(seen)


def cascade_batch(m: ModelSpec, live: np.ndarray, seeds: Iterable[int]) -> np.ndarray:
    """Infected (n, |V|) boolean matrix for each row of a live-edge matrix."""
    g = m.graph
    seeds = sorted(g.check_vertices(seeds))
    inf = np.zeros((live.shape[0], g.n), dtype=bool)
    if not seeds:
        return inf
    inf[:, seeds] = True
    order = _bfs_edge_order(g, seeds)
    if not order:
        return inf
    src, dst = m._edge_arrays
    while True:
        before = inf.sum()
        for e in order:
            inf[:, dst[e]] |= inf[:, src[e]] & live[:, e]
        if inf.sum() == before:
            return inf


def _bfs_edge_order(g: WeightedDigraph, seeds) -> list[int]:
    """Edges reachable from seeds, in breadth-first discovery order."""
    seen = set(seeds)
    queue = deque(seeds)
    order = []
    while queue:
        u = queue.popleft()
        for e in g.out_edges[u]:
            v = g.edges[e].dst
            if v in seeds:
                continue
            order.append(e)
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return order


# --------------------------------------------------------------------------
# general threshold model


def sample_thresholds(m: ModelSpec, rng) -> ThresholdRealization:
    m.require_gtm()
    return ThresholdRealization(tuple(sample_threshold_matrix(m, 1, rng)[0].tolist()))


def sample_threshold_matrix(m: ModelSpec, n: int, rng) -> np.ndarray:
    m.require_gtm()
    return 1.0 - as_generator(rng).random((n, m.n))


def gtm_cascade(m: ModelSpec, theta: ThresholdRealization, seeds: Iterable[int]) -> frozenset[int]:
    """Least fixed point containing ``seeds`` of v ↦ [f_v(IN_v) ≥ θ_v]."""
    m.require_gtm()
    seeds = m.graph.check_vertices(seeds)
    th = theta.theta
    forms = m.local_influence
    infected = set(seeds)
    while True:
        new = [v for v in range(m.n) if v not in infected and forms[v](infected) >= th[v]]
        if not new:
            return frozenset(infected)
        infected.update(new)


def gtm_cascade_batch(m: ModelSpec, theta: np.ndarray, seeds: Iterable[int]) -> np.ndarray:
    m.require_gtm()
    seeds = sorted(m.graph.check_vertices(seeds))
    n = theta.shape[0]
    inf = np.zeros((n, m.n), dtype=bool)
    inf[:, seeds] = True
    forms = m.local_influence
    active = [v for v in range(m.n) if v not in set(seeds)]
    while True:
        changed = False
        for v in active:
            f = forms[v]
            cols = inf[:, list(f.order)] if f.order else np.zeros((n, 0), dtype=bool)
            hit = (f.batch(cols) >= theta[:, v]) & ~inf[:, v]
            if hit.any():
                inf[:, v] |= hit
                changed = True
        if not changed:
            return inf


# --------------------------------------------------------------------------
# round-based processes (equivalence oracles)


def _require(m: ModelSpec, kind: Kind):
    if m.kind is not kind:
        raise WrongModelKind(f"operation needs a {kind.value} model, got {m.kind.value}")


def original_icm_process(m: ModelSpec, seeds: Iterable[int], rng) -> frozenset[int]:
    """Each newly infected vertex makes one attempt per out-edge, next round."""
    _require(m, Kind.ICM)
    gen = as_generator(rng)
    g = m.graph
    infected = set(g.check_vertices(seeds))
    frontier = sorted(infected)
    while frontier:
        nxt = []
        for u in frontier:
            for e in g.out_edges[u]:
                v = g.edges[e].dst
                if v not in infected and gen.random() < float(g.edges[e].weight):
                    infected.add(v)
                    nxt.append(v)
        frontier = nxt
    return frozenset(infected)


def original_ltm_process(m: ModelSpec, seeds: Iterable[int], rng) -> frozenset[int]:
    """Uniform thresholds; infect once the infected in-weight reaches them."""
    _require(m, Kind.LTM)
    gen = as_generator(rng)
    g = m.graph
    theta = 1.0 - gen.random(g.n)
    infected = set(g.check_vertices(seeds))
    while True:
        new = [v for v in range(g.n) if v not in infected and
               sum(float(g.edges[e].weight) for e in g.in_edges[v] if g.edges[e].src in infected) >= theta[v]]
        if not new:
            return frozenset(infected)
        infected.update(new)


def original_icm_batch(m: ModelSpec, seeds: Iterable[int], n: int, rng) -> np.ndarray:
    """Vectorized :func:`original_icm_process` over ``n`` independent runs."""
    _require(m, Kind.ICM)
    gen = as_generator(rng)
    g = m.graph
    seeds = sorted(g.check_vertices(seeds))
    inf = np.zeros((n, g.n), dtype=bool)
    inf[:, seeds] = True
    frontier = inf.copy()
    src, dst = m._edge_arrays
    w = m._float_weights
    while frontier.any():
        coins = gen.random((n, g.m)) < w
        new = np.zeros_like(inf)
        for e in range(g.m):
            new[:, dst[e]] |= frontier[:, src[e]] & coins[:, e]
        new &= ~inf
        inf |= new
        frontier = new
    return inf


def original_ltm_batch(m: ModelSpec, seeds: Iterable[int], n: int, rng) -> np.ndarray:
    _require(m, Kind.LTM)
    gen = as_generator(rng)
    g = m.graph
    seeds = sorted(g.check_vertices(seeds))
    theta = 1.0 - gen.random((n, g.n))
    wm = np.zeros((g.n, g.n))
    for e in g.edges:
        wm[e.src, e.dst] = float(e.weight)
    inf = np.zeros((n, g.n), dtype=bool)
    inf[:, seeds] = True
    while True:
        new = (inf @ wm >= theta) & ~inf
        if not new.any():
            return inf
        inf |= new
