"""Seed-selection policies and their evaluation.

Non-adaptive greedy, adaptive greedy, the risk-free variant that walks the
non-adaptive greedy order skipping vertices already known to be infected,
fixed lists and user callables.  Policies are evaluated by Monte Carlo over
realizations or exactly by expanding the policy's decision tree.
"""
from __future__ import annotations

import heapq
import itertools
import math
import sys
import weakref
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from ._exact import FLOAT_TIE, STATE_CAP, argmax_lowest
from .diffusion import (
    LT, EdgeStatus, Kind, ModelSpec, Realization, ThresholdRealization, cascade, cascade_batch,
    gtm_cascade, gtm_cascade_batch, sample_realizations, sample_threshold_matrix,
)
from .errors import (
    AllKnownInfected, NotEnoughCandidates, TooLargeToEnumerate, ValidationError, WrongModelKind,
)
from .feedback import (
    LevelRealization, PartialRealization, condition_model, feedback, gtm_condition, known_infected,
    parse_feedback,
)
from .rng import RngStream, as_generator, seed_of
from .sigma import EstimateCI, engine_for

DEFAULT_POOL = 10_000
NODE_CAP = 2 ** 20
COMBINATION_CAP = 10 ** 6


@dataclass(frozen=True)
class GreedyOrder:
    order: tuple[int, ...]
    marginal_at_pick: tuple

    def prefix(self, k: int) -> tuple[int, ...]:
        return self.order[:k]

    def __len__(self):
        return len(self.order)


@dataclass
class PolicyRun:
    seeds_in_order: list[int]
    feedback_snapshots: list
    infected: frozenset[int]
    objective: int


def _check_budget(m: ModelSpec, k: int):
    if not isinstance(k, int) or k < 0:
        raise ValidationError(f"budget must be a non-negative integer, got {k!r}")
    if k > len(m.candidates):
        raise NotEnoughCandidates(f"budget {k} exceeds the {len(m.candidates)} candidates")


# --------------------------------------------------------------------------
# common-random-number pools


def _pool_generator(rng, index: int):
    if isinstance(rng, RngStream):
        return rng.child(index).generator
    return as_generator(rng)


class _Pool:
    """A fixed batch of realizations shared by every candidate evaluation."""

    def __init__(self, m: ModelSpec, n: int, gen):
        self.m = m
        if m.kind is Kind.GTM:
            self.sample = sample_threshold_matrix(m, n, gen)
        else:
            self.sample = sample_realizations(m, n, gen)

    def weights(self, seeds) -> np.ndarray:
        m = self.m
        if m.kind is Kind.GTM:
            inf = gtm_cascade_batch(m, self.sample, seeds)
        else:
            inf = cascade_batch(m, self.sample, seeds)
        return inf @ m.weight_array


# --------------------------------------------------------------------------
# non-adaptive greedy


def _resolve_mode(m: ModelSpec, mode: str) -> str:
    if mode not in ("auto", "exact", "mc"):
        raise ValidationError(f"unknown evaluation mode {mode!r}")
    if m.kind is Kind.GTM:
        if mode == "exact":
            raise WrongModelKind("exact evaluation covers triggering models only")
        return "mc"
    return mode


def greedy_nonadaptive(m: ModelSpec, k: int, mode: str = "auto", n: int = DEFAULT_POOL,
                       rng=None, cap: int = STATE_CAP) -> GreedyOrder:
    """Greedy seed order of length ``k``; ties go to the lowest vertex id.

    Exact mode uses lazy re-evaluation keyed by stale marginals (valid since
    σ is submodular).  Monte Carlo mode draws one pool per iteration and
    scores every candidate on it.
    """
    _check_budget(m, k)
    mode = _resolve_mode(m, mode)
    if mode in ("auto", "exact"):
        try:
            return _greedy_exact(m, k, cap)
        except TooLargeToEnumerate:
            if mode == "exact":
                raise
    return _greedy_mc(m, k, n, rng)


def greedy_order(m: ModelSpec, mode: str = "auto", n: int = DEFAULT_POOL, rng=None,
                 cap: int = STATE_CAP) -> GreedyOrder:
    """Greedy order over every candidate."""
    return greedy_nonadaptive(m, len(m.candidates), mode, n, rng, cap)


def _greedy_exact(m: ModelSpec, k: int, cap: int) -> GreedyOrder:
    eng = engine_for(m, cap)
    exact = eng.exact
    tol = 0 if exact else FLOAT_TIE
    chosen: list[int] = []
    gains = []
    base = eng.sigma(())
    heap = [(-(eng.sigma({c}) - base), c, 0) for c in m.candidates]
    heapq.heapify(heap)
    for it in range(k):
        cur = frozenset(chosen)
        while heap[0][2] != it:
            _, c, _ = heapq.heappop(heap)
            heapq.heappush(heap, (-(eng.sigma(cur | {c}) - base), c, it))
        top = -heap[0][0]
        # anything whose bound reaches the tie band may still tie the leader
        band = []
        while heap and -heap[0][0] >= top - tol:
            neg, c, r = heapq.heappop(heap)
            band.append((c, -neg if r == it else eng.sigma(cur | {c}) - base))
        pick, gain = min(((c, g) for c, g in band if g >= top - tol), key=lambda t: t[0])
        for c, g in band:
            if c != pick:
                heapq.heappush(heap, (-g, c, it))
        chosen.append(pick)
        gains.append(gain)
        base = eng.sigma(frozenset(chosen))
    return GreedyOrder(tuple(chosen), tuple(gains))


def _greedy_mc(m: ModelSpec, k: int, n: int, rng) -> GreedyOrder:
    chosen: list[int] = []
    gains = []
    for it in range(k):
        pool = _Pool(m, n, _pool_generator(rng, it))
        base = pool.weights(chosen)
        scores = [(c, float((pool.weights(chosen + [c]) - base).mean()))
                  for c in m.candidates if c not in chosen]
        pick, gain = argmax_lowest(scores, exact=False)
        chosen.append(pick)
        gains.append(gain)
    return GreedyOrder(tuple(chosen), tuple(gains))


# --------------------------------------------------------------------------
# policies


class Policy:
    """Maps (seeds so far, feedback of those seeds) to the next seed."""

    name = "policy"

    def select(self, m: ModelSpec, seeds: tuple[int, ...], partial, feedback_kind: str) -> int:
        raise NotImplementedError


class AdaptiveGreedy(Policy):
    """Seed the candidate with the largest expected influence given feedback.

    ``mode`` is ``exact`` (conditioned model, exact σ), ``mc`` (common random
    numbers on the conditioned model) or ``auto``.  Decisions are cached per
    (seed set, feedback).
    """

    name = "adaptive_greedy"

    def __init__(self, mode: str = "auto", n: int = DEFAULT_POOL, rng=None, cap: int = STATE_CAP):
        self.mode = mode
        self.n = n
        self.rng = rng
        self.cap = cap
        self._cache: "weakref.WeakKeyDictionary[ModelSpec, dict]" = weakref.WeakKeyDictionary()
        self._calls = 0

    def select(self, m, seeds, partial, feedback_kind):
        memo = self._cache.setdefault(m, {})
        key = (frozenset(seeds), _partial_key(partial))
        hit = memo.get(key)
        if hit is None:
            hit = memo[key] = adaptive_greedy_step(
                m, seeds, partial, self.mode, self.n, self._next_rng(), self.cap)
        return hit

    def _next_rng(self):
        self._calls += 1
        if isinstance(self.rng, RngStream):
            return self.rng.child(self._calls)
        return self.rng


class RiskFree(Policy):
    """Walk the full non-adaptive greedy order, skipping known-infected vertices."""

    name = "risk_free"

    def __init__(self, order: GreedyOrder | None = None, mode: str = "auto", n: int = DEFAULT_POOL,
                 rng=None, cap: int = STATE_CAP):
        self.order = order
        self.mode, self.n, self.rng, self.cap = mode, n, rng, cap
        self._orders: "weakref.WeakKeyDictionary[ModelSpec, GreedyOrder]" = weakref.WeakKeyDictionary()

    def order_for(self, m: ModelSpec) -> GreedyOrder:
        if self.order is not None:
            return self.order
        if m not in self._orders:
            self._orders[m] = greedy_order(m, self.mode, self.n, self.rng, self.cap)
        return self._orders[m]

    def select(self, m, seeds, partial, feedback_kind):
        order = self.order_for(m)
        try:
            return risk_free_step(m, order, seeds, partial)
        except AllKnownInfected:
            # the budget must still be spent; an infected vertex changes nothing
            return next(v for v in order.order if v not in seeds)


class FixedPolicy(Policy):
    name = "fixed"

    def __init__(self, seeds: Sequence[int]):
        self.seeds = list(seeds)

    def select(self, m, seeds, partial, feedback_kind):
        return self.seeds[len(seeds)]


class CustomPolicy(Policy):
    name = "custom"

    def __init__(self, fn: Callable, name: str = "custom"):
        self.fn = fn
        self.name = name

    def select(self, m, seeds, partial, feedback_kind):
        return self.fn(m, seeds, partial, feedback_kind)


def make_policy(spec, **kwargs) -> Policy:
    if isinstance(spec, Policy):
        return spec
    if isinstance(spec, str):
        key = spec.lower().replace("-", "_")
        if key in ("greedy", "adaptive_greedy", "adaptive"):
            return AdaptiveGreedy(**kwargs)
        if key in ("riskfree", "risk_free"):
            return RiskFree(**kwargs)
        raise ValidationError(f"unknown policy {spec!r}")
    if callable(spec):
        return CustomPolicy(spec)
    return FixedPolicy(spec)


def _partial_key(partial):
    if isinstance(partial, PartialRealization):
        return partial.key()
    return tuple(partial.level)


def _known(m: ModelSpec, seeds, partial) -> frozenset[int]:
    if isinstance(partial, LevelRealization):
        return partial.infected | frozenset(seeds)
    return known_infected(m, partial, seeds)


def adaptive_greedy_step(m: ModelSpec, seeds: Iterable[int], partial, mode: str = "auto",
                         n: int = DEFAULT_POOL, rng=None, cap: int = STATE_CAP) -> int:
    """Candidate maximizing the conditional expected influence of ``seeds ∪ {c}``."""
    seeds = frozenset(seeds)
    cands = [c for c in m.candidates if c not in seeds]
    if not cands:
        raise NotEnoughCandidates("every candidate is already a seed")
    mode = _resolve_mode(m, mode)
    if isinstance(partial, LevelRealization):
        cond = gtm_condition(m, partial)
        removed = cond.known_infected
        red = cond.reduced
        pool = _Pool(red, n, _pool_generator(rng, 0))
        base = pool.weights([])
        scores = []
        for c in cands:
            if c in removed:
                scores.append((c, 0.0))
            else:
                (rc,) = cond.to_reduced([c])
                scores.append((c, float((pool.weights([rc]) - base).mean())))
        return argmax_lowest(scores, exact=False)[0]
    cond = condition_model(m, partial, seeds)
    known = cond.known_infected
    if mode in ("auto", "exact"):
        try:
            eng = engine_for(cond.reduced, cap)
            gains = eng.gains(known, cands)
            return argmax_lowest(gains.items(), eng.exact)[0]
        except TooLargeToEnumerate:
            if mode == "exact":
                raise
    pool = _Pool(cond.reduced, n, _pool_generator(rng, 0))
    base = pool.weights(sorted(known))
    scores = [(c, 0.0 if c in known else float((pool.weights(sorted(known | {c})) - base).mean()))
              for c in cands]
    return argmax_lowest(scores, exact=False)[0]


def risk_free_step(m: ModelSpec, order: GreedyOrder, seeds: Iterable[int], partial) -> int:
    """First vertex of the greedy order that is neither a seed nor known infected."""
    known = _known(m, seeds, partial) | frozenset(seeds)
    for v in order.order:
        if v not in known:
            return v
    raise AllKnownInfected("every vertex of the greedy order is already known to be infected")


# --------------------------------------------------------------------------
# running a policy on one realization


def run_policy(m: ModelSpec, policy, k: int, feedback_kind: str, phi) -> PolicyRun:
    """Pick ``k`` seeds one at a time, observing the feedback after each.

    ``feedback_snapshots[i]`` is the feedback of the first ``i`` seeds.
    """
    _check_budget(m, k)
    policy = make_policy(policy)
    fb = parse_feedback(feedback_kind)
    is_gtm = m.kind is Kind.GTM
    if is_gtm != isinstance(phi, ThresholdRealization):
        raise WrongModelKind("GTM models take threshold realizations, triggering models edge realizations")
    seeds: list[int] = []
    snaps = [feedback(m, phi, (), fb)]
    for _ in range(k):
        v = policy.select(m, tuple(seeds), snaps[-1], fb)
        if v in seeds or v not in m.candidates:
            raise ValidationError(f"policy {policy.name} chose {v!r}, not an unused candidate")
        seeds.append(v)
        snaps.append(feedback(m, phi, seeds, fb))
    infected = gtm_cascade(m, phi, seeds) if is_gtm else cascade(m, phi, seeds)
    return PolicyRun(seeds, snaps, infected, m.weight_of(infected))


def sigma_adaptive(m: ModelSpec, policy, k: int, feedback_kind: str = "full", n: int = 1000,
                   rng=None, mode: str = "mc", node_cap: int = NODE_CAP):
    """σ^feedback(policy, k): Monte Carlo estimate, or exact for triggering models."""
    policy = make_policy(policy)
    if mode == "exact":
        return adaptive_values_exact(m, policy, k, feedback_kind, node_cap=node_cap).values[k]
    if mode != "mc":
        raise ValidationError(f"unknown evaluation mode {mode!r}")
    if n < 2:
        raise ValidationError("Monte Carlo needs n >= 2 samples")
    _check_budget(m, k)
    gen = as_generator(rng)
    values = np.empty(n)
    if m.kind is Kind.GTM:
        thetas = sample_threshold_matrix(m, n, gen)
        for i in range(n):
            values[i] = run_policy(m, policy, k, feedback_kind, ThresholdRealization(tuple(thetas[i]))).objective
    else:
        live = sample_realizations(m, n, gen)
        for i in range(n):
            values[i] = run_policy(m, policy, k, feedback_kind, Realization.from_live(live[i])).objective
    return EstimateCI.from_samples(values, seed_of(rng))


# --------------------------------------------------------------------------
# exact decision trees


@dataclass
class AdaptiveValue:
    """Exact evaluation of a policy's decision tree.

    ``values[l]`` is σ^feedback(policy, l) for l = 0..k.  With a stop
    predicate, ``expected_seeds`` is the expected number of seeds picked
    before it fired (or the budget ran out).
    """

    values: list
    expected_seeds: object
    nodes: int
    leaves: int = 0


class _Tree:
    """Lazily reveals edge statuses along the feedback of each seed.

    Edges into vertices already known to be infected stay UNKNOWN: their
    status cannot change the objective, and every policy shipped here reads
    feedback only through the infected set and the conditioned model, which
    ignore them.  Edges are revealed in a fixed order, so each history maps
    to one partial realization.
    """

    def __init__(self, m: ModelSpec, feedback_kind: str, node_cap: int):
        m.require_triggering()
        self.m = m
        self.g = m.graph
        self.full = parse_feedback(feedback_kind) == "full"
        self.node_cap = node_cap
        self.nodes = 0
        self.exact = m.exact
        self.zero = Fraction(0) if self.exact else 0.0
        self.one = Fraction(1) if self.exact else 1.0
        self.w = [e.weight if self.exact else float(e.weight) for e in self.g.edges]
        self.is_lt = [lab == LT for lab in m.labels]

    def tick(self):
        self.nodes += 1
        if self.nodes > self.node_cap:
            raise TooLargeToEnumerate(f"decision tree exceeds {self.node_cap} nodes")

    def live_prob(self, e, status):
        v = self.g.edges[e].dst
        if not self.is_lt[v]:
            return self.w[e]
        mass = self.zero
        for b in self.g.in_edges[v]:
            s = status[b]
            if s == EdgeStatus.LIVE:
                return self.zero
            if s == EdgeStatus.BLOCKED:
                mass += self.w[b]
        rest = self.one - mass
        if rest <= 0 or (not self.exact and rest < 1e-15):
            return self.zero
        q = self.w[e] / rest
        return q if q < 1 else self.one

    def outcomes(self, status: tuple, known: frozenset, x: int):
        """Distribution of (status, known) after seeding ``x``."""
        g = self.g
        if self.full and x in known:
            return [(self.one, status, known)]
        out = []
        stack = [(self.one, list(status), set(known) | {x}, [x])]
        while stack:
            p, st, kn, pending = stack.pop()
            nxt = None
            while pending and nxt is None:
                u = pending[0]
                for e in g.out_edges[u]:
                    if st[e] == EdgeStatus.UNKNOWN and g.edges[e].dst not in kn:
                        nxt = e
                        break
                if nxt is None:
                    pending = pending[1:]
            if nxt is None:
                out.append((p, tuple(st), frozenset(kn)))
                continue
            self.tick()
            q = self.live_prob(nxt, st)
            v = g.edges[nxt].dst
            if q > 0:
                st2 = list(st)
                st2[nxt] = EdgeStatus.LIVE
                pend2 = pending + [v] if self.full else pending
                stack.append((p * q, st2, kn | {v}, pend2))
            if q < 1:
                st2 = list(st)
                st2[nxt] = EdgeStatus.BLOCKED
                stack.append((p * (self.one - q), st2, set(kn), list(pending)))
        return out

    def leaf_value(self, seeds, status, known):
        if self.full:
            w = self.m.weight_of(known)
            return Fraction(w) if self.exact else float(w)
        cond = condition_model(self.m, PartialRealization(status), seeds)
        return engine_for(cond.reduced).sigma(cond.known_infected)


def adaptive_values_exact(m: ModelSpec, policy, k: int, feedback_kind: str = "full",
                          stop: Callable[[frozenset], bool] | None = None,
                          node_cap: int = NODE_CAP) -> AdaptiveValue:
    """Exact per-budget values of ``policy`` by expanding its decision tree.

    ``stop(known_infected)`` ends a branch early; values at larger budgets
    then repeat the value at the stop.
    """
    _check_budget(m, k)
    policy = make_policy(policy)
    tree = _Tree(m, feedback_kind, node_cap)
    fb = "full" if tree.full else "myopic"
    zero = tree.zero
    leaves = 0

    def expand(seeds: tuple, status: tuple, known: frozenset):
        nonlocal leaves
        tree.tick()
        here = tree.leaf_value(seeds, status, known)
        depth = len(seeds)
        if depth == k or (stop is not None and stop(known)):
            leaves += 1
            return [here] * (k - depth + 1), Fraction(depth) if tree.exact else float(depth)
        x = policy.select(m, seeds, PartialRealization(status), fb)
        if x in seeds or x not in m.candidates:
            raise ValidationError(f"policy {policy.name} chose {x!r}, not an unused candidate")
        acc = [zero] * (k - depth)
        seeds_acc = zero
        for p, st, kn in tree.outcomes(status, known, x):
            vals, used = expand(seeds + (x,), st, kn)
            for i, val in enumerate(vals):
                acc[i] += p * val
            seeds_acc += p * used
        return [here] + acc, seeds_acc

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20 * (m.graph.m + k) + 1000))
    try:
        status0 = (EdgeStatus.UNKNOWN,) * m.graph.m
        vals, used = expand((), status0, frozenset())
    finally:
        sys.setrecursionlimit(limit)
    return AdaptiveValue(vals, used, tree.nodes, leaves)


def expected_seeds_to_target(m: ModelSpec, policy, target: int, feedback_kind: str = "full",
                             node_cap: int = NODE_CAP):
    """Exact expected number of seeds the policy picks until ``target`` is known infected."""
    res = adaptive_values_exact(m, policy, len(m.candidates), feedback_kind,
                                stop=lambda known: target in known, node_cap=node_cap)
    return res.expected_seeds


def optimal_adaptive_exact(m: ModelSpec, k: int, feedback_kind: str = "full",
                           node_cap: int = NODE_CAP):
    """Value of the best adaptive policy by backward induction over feedback states."""
    _check_budget(m, k)
    tree = _Tree(m, feedback_kind, node_cap)
    memo: dict = {}

    def best(seeds: frozenset, status: tuple, known: frozenset):
        key = (seeds, status)
        if key in memo:
            return memo[key]
        tree.tick()
        if len(seeds) == k:
            val = tree.leaf_value(seeds, status, known)
        else:
            val = None
            for x in m.candidates:
                if x in seeds:
                    continue
                exp = sum((p * best(seeds | {x}, st, kn) for p, st, kn in tree.outcomes(status, known, x)),
                          tree.zero)
                if val is None or exp > val:
                    val = exp
        memo[key] = val
        return val

    return best(frozenset(), (EdgeStatus.UNKNOWN,) * m.graph.m, frozenset())


def optimal_nonadaptive_exact(m: ModelSpec, k: int, cap: int = COMBINATION_CAP,
                              state_cap: int = STATE_CAP):
    """Best k-subset of the candidates by exhaustive exact σ (lexicographically first on ties)."""
    _check_budget(m, k)
    if math.comb(len(m.candidates), k) > cap:
        raise TooLargeToEnumerate(f"more than {cap} seed sets of size {k}")
    eng = engine_for(m, state_cap)
    best_set, best_val = None, None
    for combo in itertools.combinations(m.candidates, k):
        val = eng.sigma(combo)
        if best_val is None or (val > best_val if eng.exact else val > best_val + FLOAT_TIE):
            best_set, best_val = frozenset(combo), val
    return best_set, best_val
