"""Exact expectation engines for triggering models.

Two independent routes:

* :class:`ExpectationEngine` explores only the edges leaving already infected
  vertices, one at a time, memoizing on (infected set, blocked edges into
  uninfected vertices).  Edges out of uninfected vertices never matter, so the
  explored state count is usually far below the realization space.
* :func:`enumerate_realizations` walks the full product of per-vertex
  triggering sets.  It is slow and only meant as an oracle.

Arithmetic is ``Fraction`` when every edge weight is rational, else float.
"""
from __future__ import annotations

import heapq
import itertools
import sys
from fractions import Fraction
from typing import Iterable, Iterator

from .diffusion import LT, EdgeStatus, ModelSpec, Realization, cascade
from .errors import TooLargeToEnumerate

STATE_CAP = 2 ** 24
FLOAT_TIE = 1e-9


def is_tie(a, b, exact: bool) -> bool:
    return a == b if exact else abs(a - b) <= FLOAT_TIE


def argmax_lowest(items, exact: bool):
    """(id, value) pairs → lowest id whose value is within tolerance of the max."""
    items = list(items)
    if not items:
        return None, None
    top = max(val for _, val in items)
    for i, val in sorted(items, key=lambda t: t[0]):
        if is_tie(val, top, exact) or val >= top:
            return i, val


def _prob(w, exact: bool):
    return w if exact else float(w)


class ExpectationEngine:
    """Memoized σ evaluation for one triggering model."""

    def __init__(self, m: ModelSpec, cap: int = STATE_CAP):
        m.require_triggering()
        self.m = m
        self.g = m.graph
        self.cap = cap
        self.exact = m.exact
        self.zero = Fraction(0) if self.exact else 0.0
        self.one = Fraction(1) if self.exact else 1.0
        g = self.g
        self.w = [_prob(e.weight, self.exact) for e in g.edges]
        self.is_lt = [lab == LT for lab in m.labels]
        self.vw = g.vertex_weight
        self._sigma_cache: dict[frozenset, object] = {}

    # -- public ------------------------------------------------------------

    def sigma(self, seeds: Iterable[int]):
        seeds = self.g.check_vertices(seeds)
        try:
            return self._sigma_cache[seeds]
        except KeyError:
            pass
        val = self._propagate(seeds)
        if val is None:
            val = self._lazy(seeds)
        self._sigma_cache[seeds] = val
        return val

    def gains(self, seeds: Iterable[int], cands: Iterable[int]) -> dict:
        """σ(seeds ∪ {c}) − σ(seeds) for every candidate ``c``."""
        seeds = self.g.check_vertices(seeds)
        cands = list(cands)
        out = self._linear_gains(seeds, cands)
        if out is None:
            base = self.sigma(seeds)
            out = {c: self.sigma(seeds | {c}) - base for c in cands}
        return out

    # -- acyclic fast path ---------------------------------------------------

    def _linear_region(self, seeds, roots):
        """Topological order and in-edges of everything reachable from
        ``roots``, or None when propagation would not be exact there."""
        g = self.g
        region = set(roots)
        stack = list(roots)
        while stack:
            u = stack.pop()
            for e in g.out_edges[u]:
                v = g.edges[e].dst
                if v not in region:
                    region.add(v)
                    stack.append(v)
        rel_in, indeg = {}, {}
        for v in region:
            if v in seeds:
                continue
            ins = [e for e in g.in_edges[v] if g.edges[e].src in region]
            if not self.is_lt[v] and len(ins) > 1:
                return None
            rel_in[v] = ins
            indeg[v] = sum(1 for e in ins if g.edges[e].src not in seeds)
        ready = [v for v, d in indeg.items() if d == 0]
        order = []
        while ready:
            v = ready.pop()
            order.append(v)
            for e in g.out_edges[v]:
                x = g.edges[e].dst
                if x in indeg:
                    indeg[x] -= 1
                    if indeg[x] == 0:
                        ready.append(x)
        if len(order) != len(indeg):
            return None
        return region, order, rel_in

    def _linear_gains(self, seeds, cands):
        lin = self._linear_region(seeds, set(seeds) | set(cands))
        if lin is None:
            return None
        region, order, rel_in = lin
        g, w, zero, one = self.g, self.w, self.zero, self.one
        p = dict.fromkeys(region, zero)
        for s in seeds:
            p[s] = one
        for v in order:
            p[v] = sum((w[e] * p[g.edges[e].src] for e in rel_in[v]), zero)
        pos = {v: i for i, v in enumerate(order)}
        out = {}
        for c in cands:
            if c in seeds:
                out[c] = zero
                continue
            delta = {c: one - p[c]}
            if delta[c] == 0:
                out[c] = zero
                continue
            # push the change downstream in topological order
            frontier = []
            for e in g.out_edges[c]:
                x = g.edges[e].dst
                if x in pos:
                    heapq.heappush(frontier, pos[x])
            seen = set()
            while frontier:
                i = heapq.heappop(frontier)
                if i in seen:
                    continue
                seen.add(i)
                v = order[i]
                dv = sum((w[e] * delta[g.edges[e].src] for e in rel_in[v] if g.edges[e].src in delta), zero)
                if dv == 0:
                    continue
                delta[v] = dv
                for e in g.out_edges[v]:
                    x = g.edges[e].dst
                    if x in pos and pos[x] not in seen:
                        heapq.heappush(frontier, pos[x])
            out[c] = sum((self.vw[v] * dv for v, dv in delta.items()), zero)
        return out

    def _propagate(self, seeds):
        """P(infected) by forward propagation when that is exact.

        Exact when the region reachable from the seeds is acyclic and every
        non-seed vertex in it is LT or has a single relevant in-edge: the
        infection events of its in-neighbours then combine linearly and
        depend only on choices upstream.
        """
        g = self.g
        region = set(seeds)
        stack = list(seeds)
        while stack:
            u = stack.pop()
            for e in g.out_edges[u]:
                v = g.edges[e].dst
                if v not in region:
                    region.add(v)
                    stack.append(v)
        indeg = {}
        rel_in = {}
        for v in region:
            if v in seeds:
                continue
            ins = [e for e in g.in_edges[v] if g.edges[e].src in region]
            if not self.is_lt[v] and len(ins) > 1:
                return None
            rel_in[v] = ins
            indeg[v] = sum(1 for e in ins if g.edges[e].src not in seeds)
        p = {s: self.one for s in seeds}
        ready = [v for v, d in indeg.items() if d == 0]
        done = 0
        while ready:
            v = ready.pop()
            done += 1
            p[v] = sum((self.w[e] * p[g.edges[e].src] for e in rel_in[v]), self.zero)
            for e in g.out_edges[v]:
                x = g.edges[e].dst
                if x in indeg:
                    indeg[x] -= 1
                    if indeg[x] == 0:
                        ready.append(x)
        if done != len(indeg):
            return None  # cycle in the reachable region
        return sum((self.vw[v] * p[v] for v in region), self.zero)

    # -- lazy revelation -----------------------------------------------------

    def _lazy(self, seeds):
        memo: dict = {}
        g = self.g
        w, is_lt = self.w, self.is_lt
        one, zero = self.one, self.zero
        exact = self.exact
        out_edges = g.out_edges
        edges = g.edges
        vw = self.vw

        def close(infected: frozenset, blocked: frozenset):
            # follow certain edges without branching
            inf = set(infected)
            stack = list(inf)
            while stack:
                u = stack.pop()
                for e in out_edges[u]:
                    v = edges[e].dst
                    if v in inf or e in blocked:
                        continue
                    if _live_prob(v, e, blocked) >= 1:
                        inf.add(v)
                        stack.append(v)
            if len(inf) != len(infected):
                infected = frozenset(inf)
                blocked = frozenset(b for b in blocked if edges[b].dst not in infected)
            return infected, blocked

        def _live_prob(v, e, blocked):
            if not is_lt[v]:
                return w[e]
            mass = sum((w[b] for b in g.in_edges[v] if b in blocked), zero)
            rest = one - mass
            if rest <= 0 or (not exact and rest < 1e-15):
                return zero
            q = w[e] / rest
            return q if q < 1 else one

        def value(infected: frozenset, blocked: frozenset):
            key = (infected, blocked)
            hit = memo.get(key)
            if hit is not None:
                return hit
            if len(memo) >= self.cap:
                raise TooLargeToEnumerate(
                    f"exact evaluation needs more than {self.cap} states; use Monte Carlo")
            nxt = None
            for u in sorted(infected):
                for e in out_edges[u]:
                    if e not in blocked and edges[e].dst not in infected:
                        nxt = e
                        break
                if nxt is not None:
                    break
            if nxt is None:
                res = sum((vw[v] for v in infected), 0)
                res = Fraction(res) if exact else float(res)
            else:
                v = edges[nxt].dst
                q = _live_prob(v, nxt, blocked)
                res = zero
                if q > 0:
                    res += q * value(*close(infected | {v}, frozenset(b for b in blocked if edges[b].dst != v)))
                if q < 1:
                    res += (one - q) * value(*close(infected, blocked | {nxt}))
            memo[key] = res
            return res

        limit = sys.getrecursionlimit()
        need = 4 * g.m + 200
        if need > limit:
            sys.setrecursionlimit(need)
        try:
            return value(*close(frozenset(seeds), frozenset()))
        finally:
            if need > limit:
                sys.setrecursionlimit(limit)


# --------------------------------------------------------------------------
# brute-force oracle


def triggering_options(m: ModelSpec, v: int) -> list[tuple[frozenset, object]]:
    """All triggering sets of ``v`` (as sets of live in-edge ids) with probabilities."""
    g = m.graph
    exact = m.exact
    one = Fraction(1) if exact else 1.0
    ins = g.in_edges[v]
    ws = [_prob(g.edges[e].weight, exact) for e in ins]
    if m.labels[v] == LT:
        opts = [(frozenset([e]), w) for e, w in zip(ins, ws)]
        rest = one - sum(ws, Fraction(0) if exact else 0.0)
        if rest > 0:
            opts.append((frozenset(), rest))
        return opts
    opts = []
    for bits in itertools.product((False, True), repeat=len(ins)):
        p = one
        for b, w in zip(bits, ws):
            p *= w if b else one - w
        if p > 0:
            opts.append((frozenset(e for e, b in zip(ins, bits) if b), p))
    return opts


def realization_count(m: ModelSpec) -> int:
    total = 1
    for v in range(m.n):
        total *= len(triggering_options(m, v))
    return total


def enumerate_realizations(m: ModelSpec, cap: int = STATE_CAP) -> Iterator[tuple[Realization, object]]:
    """Every positive-probability realization with its probability."""
    m.require_triggering()
    if realization_count(m) > cap:
        raise TooLargeToEnumerate(f"more than {cap} realizations")
    per_vertex = [triggering_options(m, v) for v in range(m.n)]
    n_edges = m.graph.m
    for combo in itertools.product(*per_vertex):
        live = set()
        p = Fraction(1) if m.exact else 1.0
        for edges, q in combo:
            live |= edges
            p *= q
        yield Realization(tuple(EdgeStatus.LIVE if e in live else EdgeStatus.BLOCKED
                                for e in range(n_edges))), p


def brute_force_sigma(m: ModelSpec, seeds: Iterable[int], cap: int = STATE_CAP):
    seeds = m.graph.check_vertices(seeds)
    total = Fraction(0) if m.exact else 0.0
    for phi, p in enumerate_realizations(m, cap):
        total += p * m.weight_of(cascade(m, phi, seeds))
    return total
