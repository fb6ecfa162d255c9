"""Invariant checks on a single instance.

Each check returns :class:`CheckResult` records; ``run_all`` bundles the
ones that fit the instance and marks the rest skipped.  The brute-force
conditional oracles here are slow on purpose: they average over every
realization (or every accepted threshold sample) without using the
conditioned model, so they are independent of :mod:`gapbench.feedback`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from ._exact import FLOAT_TIE, enumerate_realizations, realization_count, brute_force_sigma
from .diffusion import Kind, ModelSpec, Realization, ThresholdRealization, cascade, gtm_cascade, \
    expand_model_weights, sample_realizations, sample_threshold_matrix
from .errors import GapBenchError, TooLargeToEnumerate
from .feedback import feedback, gtm_full_adoption_feedback, gtm_myopic_feedback, parse_feedback
from .policies import (
    AdaptiveGreedy, RiskFree, adaptive_values_exact, greedy_nonadaptive, greedy_order, optimal_adaptive_exact,
    optimal_nonadaptive_exact, run_policy,
)
from .rng import as_generator
from .sigma import EstimateCI, sigma_exact

BRUTE_CAP = 4096


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str          # "pass", "fail" or "skip"
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "fail"


def _tol(m: ModelSpec):
    return 0 if m.exact else FLOAT_TIE


# --------------------------------------------------------------------------
# brute-force conditional oracles


def brute_force_conditional(m: ModelSpec, partial, seeds, extra=(), cap: int = BRUTE_CAP):
    """E[f(seeds ∪ extra) | partial] by averaging over consistent realizations."""
    run = frozenset(seeds) | frozenset(extra)
    num = Fraction(0) if m.exact else 0.0
    den = Fraction(0) if m.exact else 0.0
    for phi, p in enumerate_realizations(m, cap):
        if partial.consistent_with(phi):
            num += p * m.weight_of(cascade(m, phi, run))
            den += p
    if den == 0:
        raise ValueError("partial realization has probability zero")
    return num / den


def rejection_conditional(m: ModelSpec, observed, seeds, extra, feedback_kind: str, n: int, rng,
                          batch: int = 20_000, max_draws: int = 10 ** 7) -> EstimateCI:
    """GTM: E[f(seeds ∪ extra) | observed levels] by rejection sampling.

    A threshold draw is accepted when the feedback of ``seeds`` under it
    equals ``observed``; levels are a function of the infected set, so this
    is equality of the (round-one, for myopic) infected sets.
    """
    fb = parse_feedback(feedback_kind)
    observe = gtm_full_adoption_feedback if fb == "full" else gtm_myopic_feedback
    gen = as_generator(rng)
    seeds = frozenset(seeds)
    run = seeds | frozenset(extra)
    want = observed.infected
    vals: list[int] = []
    draws = 0
    while len(vals) < n and draws < max_draws:
        thetas = sample_threshold_matrix(m, batch, gen)
        draws += batch
        for row in thetas:
            th = ThresholdRealization(tuple(float(x) for x in row))
            if observe(m, th, seeds).infected == want:
                vals.append(m.weight_of(gtm_cascade(m, th, run)))
                if len(vals) == n:
                    break
    if len(vals) < 2:
        raise TooLargeToEnumerate("rejection sampler accepted fewer than 2 draws")
    return EstimateCI.from_samples(vals)


# --------------------------------------------------------------------------
# individual checks


def check_exact_vs_brute(m: ModelSpec, max_size: int = 2, cap: int = BRUTE_CAP) -> CheckResult:
    name = "exact σ equals brute-force enumeration"
    if realization_count(m) > cap:
        return CheckResult(name, "skip", f"more than {cap} realizations")
    bad = []
    for r in range(max_size + 1):
        for s in itertools.combinations(range(m.n), r):
            a, b = sigma_exact(m, s), brute_force_sigma(m, s, cap)
            if abs(a - b) > _tol(m):
                bad.append((s, a, b))
    return CheckResult(name, "fail" if bad else "pass", f"mismatches: {bad[:3]}" if bad else "")


def check_submodular_monotone(m: ModelSpec, max_b: int = 4, tol: float = 1e-9,
                              limit: int = 200_000) -> list[CheckResult]:
    """All (A ⊊ B, v ∉ B) with |B| ≤ max_b."""
    n = m.n
    subsets = [frozenset(c) for r in range(min(max_b, n) + 1) for c in itertools.combinations(range(n), r)]
    work = sum(2 ** len(b) * (n - len(b)) for b in subsets)
    names = ("σ is monotone", "σ is submodular")
    if work > limit:
        return [CheckResult(x, "skip", f"{work} triples exceed {limit}") for x in names]
    sig = {s: sigma_exact(m, s) for s in subsets}
    sig_plus = {}
    mono, sub = [], []
    for b in subsets:
        for v in range(n):
            if v in b:
                continue
            bv = b | {v}
            if bv not in sig_plus:
                sig_plus[bv] = sig.get(bv) if bv in sig else sigma_exact(m, bv)
            gain_b = sig_plus[bv] - sig[b]
            if gain_b < -tol:
                mono.append((sorted(b), v))
            for r in range(len(b)):
                for a in itertools.combinations(sorted(b), r):
                    a = frozenset(a)
                    gain_a = sigma_exact(m, a | {v}) - sig[a]
                    if gain_a < gain_b - tol:
                        sub.append((sorted(a), sorted(b), v))
    return [CheckResult(names[0], "fail" if mono else "pass", str(mono[:3]) if mono else ""),
            CheckResult(names[1], "fail" if sub else "pass", str(sub[:3]) if sub else "")]


def check_gadget(m: ModelSpec, limit: int = 24) -> CheckResult:
    name = "weighted σ equals σ on the weight gadget"
    if sum(m.graph.vertex_weight) > limit:
        return CheckResult(name, "skip", f"expanded graph exceeds {limit} vertices")
    big = expand_model_weights(m)
    bad = [s for r in range(min(2, m.n) + 1) for s in itertools.combinations(range(m.n), r)
           if abs(sigma_exact(m, s) - sigma_exact(big, s)) > _tol(m)]
    return CheckResult(name, "fail" if bad else "pass", str(bad[:3]) if bad else "")


def check_conditioning(m: ModelSpec, rng, trials: int = 5, cap: int = BRUTE_CAP) -> CheckResult:
    """E[f(S ∪ X) | feedback of S] from the conditioned model against brute force."""
    from .sigma import conditional_sigma

    name = "conditioned model reproduces conditional expectations"
    if realization_count(m) > cap:
        return CheckResult(name, "skip", f"more than {cap} realizations")
    gen = as_generator(rng)
    bad = []
    for t in range(trials):
        live = sample_realizations(m, 1, gen)[0]
        phi = Realization.from_live(live)
        s = frozenset(int(x) for x in gen.choice(m.n, size=min(m.n, 1 + t % 2), replace=False))
        x = frozenset(int(v) for v in gen.choice(m.n, size=min(m.n, 1 + t % 3), replace=False))
        for fb in ("full", "myopic"):
            partial = feedback(m, phi, s, fb)
            want = brute_force_conditional(m, partial, s, x, cap)
            got = conditional_sigma(m, partial, s, x, "exact")
            if abs(want - got) > _tol(m):
                bad.append((fb, sorted(s), sorted(x), want, got))
    return CheckResult(name, "fail" if bad else "pass", str(bad[:2]) if bad else "")


def check_gtm_conditioning(m: ModelSpec, rng, n: int = 2000, feedback_kind: str = "full",
                           seeds=None, extra=None) -> CheckResult:
    """Conditioned GTM estimate against the rejection oracle (overlapping 99% CIs)."""
    from .sigma import conditional_sigma

    name = f"conditioned GTM matches rejection sampling ({feedback_kind})"
    gen = as_generator(rng)
    seeds = frozenset([0]) if seeds is None else frozenset(seeds)
    extra = frozenset([m.n - 1]) if extra is None else frozenset(extra)
    theta = ThresholdRealization(tuple(float(x) for x in sample_threshold_matrix(m, 1, gen)[0]))
    observe = gtm_full_adoption_feedback if parse_feedback(feedback_kind) == "full" else gtm_myopic_feedback
    levels = observe(m, theta, seeds)
    cond = conditional_sigma(m, levels, seeds, extra, "mc", n, gen)
    ref = rejection_conditional(m, levels, seeds, extra, feedback_kind, n, gen)
    ok = cond.overlaps(ref)
    return CheckResult(name, "pass" if ok else "fail",
                       f"conditioned {cond.mean:.4f}±{cond.half_width:.4f}, "
                       f"rejection {ref.mean:.4f}±{ref.half_width:.4f}")


def check_lower_bounds(m: ModelSpec, max_k: int = 3) -> CheckResult:
    """σ^f(π^g, ℓ) ≥ (1 − (1 − 1/k)^ℓ)·OPT_k and σ^f(π^g, k) ≥ (1 − 1/e)·σ(S^g(k))."""
    name = "adaptive greedy lower bounds"
    bad = []
    for k in range(1, min(max_k, len(m.candidates)) + 1):
        opt = optimal_nonadaptive_exact(m, k)[1]
        greedy = sigma_exact(m, greedy_nonadaptive(m, k, "exact").order)
        for fb in ("full", "myopic"):
            vals = adaptive_values_exact(m, AdaptiveGreedy("exact"), k, fb).values
            for ell in range(1, k + 1):
                frac = 1 - (1 - Fraction(1, k)) ** ell
                if vals[ell] < frac * opt - 1e-9:
                    bad.append(("opt", k, ell, fb))
            if vals[k] < (1 - 1 / math.e) * float(greedy) - 1e-9:
                bad.append(("greedy", k, fb))
    return CheckResult(name, "fail" if bad else "pass", str(bad[:3]) if bad else "")


def check_optimal_dominance(m: ModelSpec, max_k: int = 2) -> CheckResult:
    name = "optimal adaptive ≥ optimal non-adaptive ≥ greedy"
    bad = []
    for k in range(1, min(max_k, len(m.candidates)) + 1):
        opt_na = optimal_nonadaptive_exact(m, k)[1]
        greedy = sigma_exact(m, greedy_nonadaptive(m, k, "exact").order)
        if greedy > opt_na + _tol(m) or greedy < (1 - 1 / math.e) * float(opt_na) - 1e-9:
            bad.append(("nonadaptive", k))
        for fb in ("full", "myopic"):
            opt_a = optimal_adaptive_exact(m, k, fb)
            adaptive = adaptive_values_exact(m, AdaptiveGreedy("exact"), k, fb).values[k]
            if opt_a < opt_na - _tol(m) or opt_a < adaptive - _tol(m):
                bad.append(("adaptive", k, fb))
    return CheckResult(name, "fail" if bad else "pass", str(bad[:3]) if bad else "")


def check_risk_free(m: ModelSpec, rng, samples: int = 1000, k: int | None = None) -> CheckResult:
    """Per realization, π^g− infects a superset of what S^g(k) infects."""
    name = "risk-free policy dominates non-adaptive greedy per realization"
    k = min(len(m.candidates), 3 if k is None else k)
    order = greedy_order(m, "auto", rng=as_generator(rng))
    base = order.prefix(k)
    policy = RiskFree(order)
    gen = as_generator(rng)
    bad = 0
    if m.kind is Kind.GTM:
        rows = sample_threshold_matrix(m, samples, gen)
        phis = [ThresholdRealization(tuple(float(x) for x in r)) for r in rows]
        run = gtm_cascade
    else:
        phis = [Realization.from_live(r) for r in sample_realizations(m, samples, gen)]
        run = cascade
    for phi in phis:
        for fb in ("full", "myopic"):
            got = run_policy(m, policy, k, fb, phi).infected
            if not run(m, phi, base) <= got:
                bad += 1
    return CheckResult(name, "fail" if bad else "pass", f"{bad} violations" if bad else "")


def run_all(m: ModelSpec, rng=None, samples: int = 500) -> list[CheckResult]:
    """Every check that applies to ``m``; infeasible ones report ``skip``."""
    gen = as_generator(rng if rng is not None else 0)
    out: list[CheckResult] = []
    if m.kind is Kind.GTM:
        return [_guard("risk-free policy dominates non-adaptive greedy per realization",
                       lambda: check_risk_free(m, gen, samples))] + \
            [_guard(f"conditioned GTM matches rejection sampling ({fb})",
                    lambda fb=fb: check_gtm_conditioning(m, gen, samples, fb)) for fb in ("full", "myopic")]
    out.append(_guard("exact σ equals brute-force enumeration", lambda: check_exact_vs_brute(m)))
    try:
        out.extend(check_submodular_monotone(m))
    except GapBenchError as exc:
        out.append(CheckResult("σ is monotone and submodular", "skip", str(exc)))
    out.append(_guard("weighted σ equals σ on the weight gadget", lambda: check_gadget(m)))
    out.append(_guard("conditioned model reproduces conditional expectations",
                      lambda: check_conditioning(m, gen)))
    out.append(_guard("adaptive greedy lower bounds", lambda: check_lower_bounds(m)))
    out.append(_guard("optimal adaptive ≥ optimal non-adaptive ≥ greedy", lambda: check_optimal_dominance(m)))
    out.append(_guard("risk-free policy dominates non-adaptive greedy per realization",
                      lambda: check_risk_free(m, gen, samples)))
    return out


def _guard(name, fn) -> CheckResult:
    try:
        return fn()
    except TooLargeToEnumerate as exc:
        return CheckResult(name, "skip", str(exc))
