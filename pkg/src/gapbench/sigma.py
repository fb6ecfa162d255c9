"""Influence evaluation: exact σ, Monte Carlo σ, and σ given feedback."""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable

import numpy as np

from ._exact import STATE_CAP, ExpectationEngine
from .diffusion import (
    Kind, ModelSpec, cascade_batch, gtm_cascade_batch, original_icm_batch, original_ltm_batch,
    sample_realizations, sample_threshold_matrix,
)
from .errors import ValidationError, WrongModelKind
from .feedback import LevelRealization, PartialRealization, condition_model, gtm_condition
from .rng import as_generator, seed_of

Z99 = NormalDist().inv_cdf(0.995)


@dataclass(frozen=True)
class EstimateCI:
    mean: float
    half_width: float
    samples: int
    master_seed: int | None = None

    @property
    def std_error(self) -> float:
        return self.half_width / Z99

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def overlaps(self, other: "EstimateCI") -> bool:
        return abs(self.mean - other.mean) <= self.half_width + other.half_width

    def within_se(self, value: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - float(value)) <= n_se * self.std_error + 1e-12

    @classmethod
    def from_samples(cls, values, master_seed=None) -> "EstimateCI":
        x = np.asarray(values, dtype=float)
        n = x.size
        if n < 2:
            raise ValidationError("a confidence interval needs at least 2 samples")
        sd = float(x.std(ddof=1))
        return cls(float(x.mean()), Z99 * sd / math.sqrt(n), n, master_seed)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci99": self.half_width, "samples": self.samples,
                "seed": self.master_seed}


_ENGINES: "weakref.WeakKeyDictionary[ModelSpec, ExpectationEngine]" = weakref.WeakKeyDictionary()


def engine_for(m: ModelSpec, cap: int = STATE_CAP) -> ExpectationEngine:
    eng = _ENGINES.get(m)
    if eng is None or eng.cap != cap:
        eng = _ENGINES[m] = ExpectationEngine(m, cap)
    return eng


def sigma_exact(m: ModelSpec, seeds: Iterable[int], cap: int = STATE_CAP):
    """Expected infected weight; ``Fraction`` for rational weights, else float."""
    if m.kind is Kind.GTM:
        raise WrongModelKind("exact evaluation covers triggering models only; use Monte Carlo for GTM")
    return engine_for(m, cap).sigma(seeds)


def infected_weights(m: ModelSpec, seeds: Iterable[int], n: int, rng,
                     method: str = "triggering") -> np.ndarray:
    """Per-sample infected weight of ``seeds`` over ``n`` fresh samples."""
    seeds = m.graph.check_vertices(seeds)
    if m.kind is Kind.GTM:
        inf = gtm_cascade_batch(m, sample_threshold_matrix(m, n, rng), seeds)
    elif method == "triggering":
        inf = cascade_batch(m, sample_realizations(m, n, rng), seeds)
    elif method == "original":
        if m.kind is Kind.ICM:
            inf = original_icm_batch(m, seeds, n, rng)
        elif m.kind is Kind.LTM:
            inf = original_ltm_batch(m, seeds, n, rng)
        else:
            raise WrongModelKind("round-based processes exist for ICM and LTM only")
    else:
        raise ValidationError(f"unknown sampling method {method!r}")
    return inf @ m.weight_array


def sigma_mc(m: ModelSpec, seeds: Iterable[int], n: int, rng, method: str = "triggering") -> EstimateCI:
    if n < 2:
        raise ValidationError("Monte Carlo needs n >= 2 samples")
    gen = as_generator(rng)
    return EstimateCI.from_samples(infected_weights(m, seeds, n, gen, method), seed_of(rng))


def conditional_sigma(m: ModelSpec, partial, base_seeds: Iterable[int], extra: Iterable[int] = (),
                      mode: str = "exact", n: int = 10_000, rng=None, cap: int = STATE_CAP):
    """Expected infected weight of ``base ∪ extra`` given the feedback of ``base``.

    ``partial`` is a :class:`PartialRealization` for triggering models and a
    :class:`LevelRealization` for GTM (which supports ``mode="mc"`` only).
    """
    extra = frozenset(extra)
    if isinstance(partial, LevelRealization):
        cond = gtm_condition(m, partial)
        if mode != "mc":
            raise WrongModelKind("GTM conditioning supports Monte Carlo evaluation only")
        est = sigma_mc(cond.reduced, cond.to_reduced(extra), n, rng)
        return EstimateCI(est.mean + cond.removed_weight, est.half_width, est.samples, est.master_seed)
    if not isinstance(partial, PartialRealization):
        raise ValidationError("partial must be a PartialRealization or LevelRealization")
    cond = condition_model(m, partial, base_seeds)
    seeds = cond.known_infected | extra
    if mode == "exact":
        return sigma_exact(cond.reduced, seeds, cap)
    if mode == "mc":
        return sigma_mc(cond.reduced, seeds, n, rng)
    raise ValidationError(f"unknown evaluation mode {mode!r}")
