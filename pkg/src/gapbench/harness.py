"""Gap measurement and batch experiments.

:func:`measure_gap` compares non-adaptive greedy with adaptive greedy and
its risk-free variant on one instance.  :func:`run_experiment` runs a JSON
list of such jobs and writes ``results.json``, ``summary.csv`` and
``timings.json`` into an output directory.  The first two depend only on the
config and seeds; wall-clock times live in the third so reruns compare
byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .diffusion import Kind, ModelSpec
from .errors import ConfigError, GapBenchError, ValidationError
from .feedback import parse_feedback
from .instances import gen_icm_tight, gen_ltm_tight, gen_mixture, gen_random, gen_tree_prescribed
from .io import load_instance
from .policies import (
    DEFAULT_POOL, AdaptiveGreedy, RiskFree, greedy_nonadaptive, optimal_adaptive_exact,
    optimal_nonadaptive_exact, sigma_adaptive, adaptive_values_exact,
)
from .rng import RngStream
from .sigma import EstimateCI, sigma_exact, sigma_mc

SEED_ENV = "GAPBENCH_SEED"
DEFAULT_SEED = 20240601
DEFAULT_SAMPLES = 1000


# --------------------------------------------------------------------------
# ratios


@dataclass(frozen=True)
class Ratio:
    """Point ratio with a conservative interval from the operands' CIs."""

    value: float
    low: float
    high: float

    @classmethod
    def of(cls, num, den) -> "Ratio":
        if isinstance(num, EstimateCI) or isinstance(den, EstimateCI):
            n_mid, n_lo, n_hi = _bounds(num)
            d_mid, d_lo, d_hi = _bounds(den)
            point = _div(n_mid, d_mid)
            low = _div(max(n_lo, 0.0), d_hi)
            high = _div(n_hi, d_lo) if d_lo > 0 else math.inf
            return cls(point, low, high)
        point = _div(num, den)
        return cls(point, point, point)

    def to_dict(self) -> dict:
        return {"value": self.value, "low": self.low, "high": self.high}


def _bounds(x):
    if isinstance(x, EstimateCI):
        return x.mean, x.low, x.high
    x = float(x)
    return x, x, x


def _div(a, b) -> float:
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return float(Fraction(a) / Fraction(b)) if _is_exact(a) and _is_exact(b) else float(a) / float(b)


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction))


# --------------------------------------------------------------------------
# gap report


@dataclass
class GapReport:
    instance: str
    k: int
    mode: str
    greedy_seeds: tuple[int, ...]
    nonadaptive_greedy_value: object
    adaptive_greedy_value: dict = field(default_factory=dict)
    risk_free_value: dict = field(default_factory=dict)
    optimal_nonadaptive_value: object = None
    optimal_adaptive_value: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)
    risk_free_ratios: dict = field(default_factory=dict)
    samples: int | None = None
    seed: int | None = None

    def records(self) -> list[dict]:
        """One results record per (policy, feedback) value."""
        out = [_record(self, "nonadaptive_greedy", None, self.nonadaptive_greedy_value)]
        for fb, val in self.adaptive_greedy_value.items():
            out.append(_record(self, "adaptive_greedy", fb, val, self.ratios.get(fb)))
        for fb, val in self.risk_free_value.items():
            out.append(_record(self, "risk_free", fb, val, self.risk_free_ratios.get(fb)))
        if self.optimal_nonadaptive_value is not None:
            out.append(_record(self, "optimal_nonadaptive", None, self.optimal_nonadaptive_value))
        for fb, val in self.optimal_adaptive_value.items():
            out.append(_record(self, "optimal_adaptive", fb, val))
        return out


def _record(rep: GapReport, policy: str, fb, val, ratio: Ratio | None = None) -> dict:
    rec = {"instance": rep.instance, "policy": policy, "feedback": fb, "k": rep.k, "mode": rep.mode}
    if isinstance(val, EstimateCI):
        rec.update(value=val.mean, ci99=val.half_width, samples=val.samples)
    else:
        rec.update(value=float(val), ci99=0.0, samples=None)
        if isinstance(val, Fraction):
            rec["value_exact"] = f"{val.numerator}/{val.denominator}"
    rec["seed"] = rep.seed
    if policy == "nonadaptive_greedy":
        rec["seeds"] = list(rep.greedy_seeds)
    if ratio is not None:
        rec["ratio"] = ratio.to_dict()
    return rec


def _feedback_list(feedback_kind) -> list[str]:
    if feedback_kind in ("both", "all"):
        return ["full", "myopic"]
    if isinstance(feedback_kind, str):
        return [parse_feedback(feedback_kind)]
    return [parse_feedback(f) for f in feedback_kind]


def measure_gap(m: ModelSpec, k: int | None = None, feedback_kind="full", mode: str = "exact",
                n: int = DEFAULT_SAMPLES, rng=None, optimal: bool = False,
                pool: int = DEFAULT_POOL, instance: str = "instance") -> GapReport:
    """Greedy adaptivity gap of ``m`` at budget ``k``.

    ``feedback_kind`` is ``full``, ``myopic``, ``both`` or a list.  Exact mode
    expands decision trees; Monte Carlo mode estimates every value with
    ``n`` samples and lets greedy score candidates on pools of ``pool``
    realizations.  Each estimate draws from its own child of ``rng``.
    """
    k = m.k if k is None else k
    if k is None:
        raise ValidationError("no budget given and the instance carries none")
    fbs = _feedback_list(feedback_kind)
    if mode not in ("exact", "mc"):
        raise ValidationError(f"unknown evaluation mode {mode!r}")
    stream = rng if isinstance(rng, RngStream) else RngStream(DEFAULT_SEED if rng is None else int(rng))
    if mode == "exact" and m.kind is Kind.GTM:
        raise ValidationError("exact gap measurement covers triggering models only")

    if mode == "exact":
        order = greedy_nonadaptive(m, k, "exact")
        nonadaptive = sigma_exact(m, order.order)
    else:
        order = greedy_nonadaptive(m, k, "mc", pool, stream.child(0))
        nonadaptive = sigma_mc(m, order.order, n, stream.child(1))
    rep = GapReport(instance, k, mode, order.order, nonadaptive,
                    samples=None if mode == "exact" else n, seed=stream.master_seed)

    rf_order = greedy_nonadaptive(m, len(m.candidates), "exact" if mode == "exact" else "mc",
                                  pool, stream.child(0))
    for i, fb in enumerate(fbs):
        greedy = AdaptiveGreedy(mode, pool, stream.child(10 + i))
        risk_free = RiskFree(rf_order)
        if mode == "exact":
            a = adaptive_values_exact(m, greedy, k, fb).values[k]
            r = adaptive_values_exact(m, risk_free, k, fb).values[k]
        else:
            a = sigma_adaptive(m, greedy, k, fb, n, stream.child(20 + i))
            r = sigma_adaptive(m, risk_free, k, fb, n, stream.child(30 + i))
        rep.adaptive_greedy_value[fb] = a
        rep.risk_free_value[fb] = r
        rep.ratios[fb] = Ratio.of(a, nonadaptive)
        rep.risk_free_ratios[fb] = Ratio.of(r, nonadaptive)
        if optimal:
            rep.optimal_adaptive_value[fb] = optimal_adaptive_exact(m, k, fb)
    if optimal:
        rep.optimal_nonadaptive_value = optimal_nonadaptive_exact(m, k)[1]
    return rep


# --------------------------------------------------------------------------
# instance specs

GENERATORS = ("icm_tight", "ltm_tight", "tree_prescribed", "mixture", "file", "random")

_PARAMS = {
    "icm_tight": {"k": int, "W": int, "check": bool},
    "ltm_tight": {"k": int, "W": int, "check": bool},
    "tree_prescribed": {"d": int, "W": int, "levels": int, "explicit_pendants": bool},
    "mixture": {"d": int, "M": int, "W": int},
    "file": {"path": str},
    "random": {"n": int, "density": float, "kind": str, "seed": int, "rational": bool,
               "max_edges": int},
}
_REQUIRED = {
    "icm_tight": ("k", "W"), "ltm_tight": ("k", "W"), "tree_prescribed": ("d", "W"),
    "mixture": ("d", "M", "W"), "file": ("path",), "random": ("n", "density", "kind"),
}


def parse_params(text: str) -> dict:
    """``"k=2,W=1600"`` → ``{"k": 2, "W": 1600}`` (ints, floats, booleans, strings)."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ValidationError(f"parameter {part!r} is not of the form name=value")
        key, val = (x.strip() for x in part.split("=", 1))
        out[key] = _coerce(val)
    return out


def _coerce(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(val)
        except ValueError:
            pass
    return val


def build_instance(generator: str, params: dict, where: str = "instance", base_dir=None) -> ModelSpec:
    """Construct an instance from a generator name and its parameters."""
    if generator not in _PARAMS:
        raise ConfigError(f"{where}.generator: unknown generator {generator!r}; "
                          f"expected one of {', '.join(GENERATORS)}")
    allowed = _PARAMS[generator]
    for key, val in params.items():
        if key not in allowed:
            raise ConfigError(f"{where}.params.{key}: not a parameter of {generator}")
        want = allowed[key]
        ok = isinstance(val, (int, float)) and not isinstance(val, bool) if want is float else \
            isinstance(val, want) and (want is bool or not isinstance(val, bool))
        if not ok:
            raise ConfigError(f"{where}.params.{key}: expected {want.__name__}, got {val!r}")
    for key in _REQUIRED[generator]:
        if key not in params:
            raise ConfigError(f"{where}.params.{key}: required by {generator}")
    p = dict(params)
    if generator == "icm_tight":
        return gen_icm_tight(p["k"], p["W"], p.get("check", True))
    if generator == "ltm_tight":
        return gen_ltm_tight(p["k"], p["W"], p.get("check", True))
    if generator == "tree_prescribed":
        return gen_tree_prescribed(p["d"], p["W"], p.get("levels"), p.get("explicit_pendants", False))
    if generator == "mixture":
        return gen_mixture(p["d"], p["M"], p["W"], explicit_A=True)
    if generator == "file":
        path = Path(p["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_instance(path)
    return gen_random(p["n"], float(p["density"]), p["kind"], p.get("seed", 0),
                      rational=p.get("rational", True), max_edges=p.get("max_edges"))


def describe(generator: str, params: dict) -> str:
    inner = ",".join(f"{k}={params[k]}" for k in sorted(params))
    return f"{generator}({inner})"


# --------------------------------------------------------------------------
# experiments

_TOP_FIELDS = {"seed", "samples", "pool", "workers", "jobs"}
_JOB_FIELDS = {"name", "instance", "k", "feedback", "mode", "samples", "pool", "seed", "optimal", "sweep"}


@dataclass(frozen=True)
class Job:
    index: int
    name: str
    generator: str
    params: dict
    k: int | None
    feedback: tuple[str, ...]
    mode: str
    samples: int
    pool: int
    seed: int
    optimal: bool


def _json_line(text: str, key: str) -> int | None:
    """Line of the first occurrence of ``"key"`` in the raw config, for diagnostics."""
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _fail(text: str, path: str, key: str, msg: str):
    line = _json_line(text, key)
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{path}: {msg}")


def _expect(text, path, key, val, kinds, what):
    if isinstance(val, bool) and bool not in kinds or not isinstance(val, kinds):
        _fail(text, path, key, f"expected {what}, got {val!r}")


def load_config(path) -> tuple[dict, list[Job]]:
    """Parse and validate an experiment config into concrete jobs."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(doc, text)


def parse_config(doc, text: str = "") -> tuple[dict, list[Job]]:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    for key in doc:
        if key not in _TOP_FIELDS:
            _fail(text, key, key, f"unknown field (expected one of {sorted(_TOP_FIELDS)})")
    seed = doc.get("seed", DEFAULT_SEED)
    _expect(text, "seed", "seed", seed, (int,), "an integer")
    env = os.environ.get(SEED_ENV)
    override = None
    if env is not None:
        try:
            override = int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
        seed = override
    samples = doc.get("samples", DEFAULT_SAMPLES)
    _expect(text, "samples", "samples", samples, (int,), "an integer")
    pool = doc.get("pool", DEFAULT_POOL)
    _expect(text, "pool", "pool", pool, (int,), "an integer")
    workers = doc.get("workers", 1)
    _expect(text, "workers", "workers", workers, (int,), "an integer")
    if workers < 1:
        _fail(text, "workers", "workers", "must be at least 1")
    raw_jobs = doc.get("jobs", [])
    _expect(text, "jobs", "jobs", raw_jobs, (list,), "a list")
    jobs: list[Job] = []
    for j, raw in enumerate(raw_jobs):
        jp = f"jobs[{j}]"
        _expect(text, jp, "jobs", raw, (dict,), "an object")
        for key in raw:
            if key not in _JOB_FIELDS:
                _fail(text, f"{jp}.{key}", key, f"unknown field (expected one of {sorted(_JOB_FIELDS)})")
        inst = raw.get("instance")
        if not isinstance(inst, dict) or "generator" not in inst:
            _fail(text, f"{jp}.instance", "instance", "needs an object with a 'generator' field")
        gen = inst["generator"]
        if gen not in _PARAMS:
            _fail(text, f"{jp}.instance.generator", "generator",
                  f"unknown generator {gen!r}; expected one of {', '.join(GENERATORS)}")
        params = inst.get("params", {})
        _expect(text, f"{jp}.instance.params", "params", params, (dict,), "an object")
        mode = raw.get("mode", "exact")
        if mode not in ("exact", "mc"):
            _fail(text, f"{jp}.mode", "mode", f"expected 'exact' or 'mc', got {mode!r}")
        fb = raw.get("feedback", "full")
        try:
            fbs = tuple(_feedback_list(fb))
        except ValidationError as exc:
            _fail(text, f"{jp}.feedback", "feedback", str(exc))
        k = raw.get("k")
        if k is not None:
            _expect(text, f"{jp}.k", "k", k, (int,), "an integer")
        job_samples = raw.get("samples", samples)
        _expect(text, f"{jp}.samples", "samples", job_samples, (int,), "an integer")
        job_pool = raw.get("pool", pool)
        _expect(text, f"{jp}.pool", "pool", job_pool, (int,), "an integer")
        optimal = raw.get("optimal", False)
        _expect(text, f"{jp}.optimal", "optimal", optimal, (bool,), "true or false")
        job_seed = raw.get("seed")
        if job_seed is not None:
            _expect(text, f"{jp}.seed", "seed", job_seed, (int,), "an integer")
        sweep = raw.get("sweep", {})
        _expect(text, f"{jp}.sweep", "sweep", sweep, (dict,), "an object")
        names, values = list(sweep), []
        for key in names:
            vals = sweep[key]
            if not isinstance(vals, list) or not vals:
                _fail(text, f"{jp}.sweep.{key}", key, "expected a non-empty list")
            values.append(vals)
        combos = [()] if not names else _product(values)
        for combo in combos:
            p = dict(params)
            p.update(zip(names, combo))
            idx = len(jobs)
            # the env override replaces every seed; otherwise per-job seeds win
            s = override if override is not None else (job_seed if job_seed is not None else seed)
            label = raw.get("name", f"job{j}")
            if names:
                label += "[" + ",".join(f"{a}={b}" for a, b in zip(names, combo)) + "]"
            jobs.append(Job(idx, label, gen, p, k, fbs, mode, job_samples, job_pool, s, optimal))
    return {"seed": seed, "samples": samples, "pool": pool, "workers": workers}, jobs


def _product(values):
    out = [()]
    for vals in values:
        out = [c + (v,) for c in out for v in vals]
    return out


def _run_job(job: Job, base_dir) -> tuple[dict, float]:
    t0 = time.perf_counter()
    desc = describe(job.generator, job.params)
    out = {"job": job.index, "name": job.name, "instance": desc, "seed": job.seed}
    try:
        m = build_instance(job.generator, job.params, f"jobs[{job.index}].instance", base_dir)
        rep = measure_gap(m, job.k, list(job.feedback), job.mode, job.samples,
                          RngStream(job.seed, job.index), job.optimal, job.pool, desc)
        out["status"] = "ok"
        out["records"] = rep.records()
    except GapBenchError as exc:
        out["status"] = "error"
        out["error"] = f"{type(exc).__name__}: {exc}"
        out["records"] = []
    return out, time.perf_counter() - t0


SUMMARY_COLUMNS = ("job", "name", "instance", "k", "mode", "feedback", "nonadaptive", "adaptive",
                   "risk_free", "ratio", "ratio_low", "ratio_high", "samples", "seed", "status")


def _summary_rows(result: dict) -> list[dict]:
    recs = result["records"]
    base = {"job": result["job"], "name": result["name"], "instance": result["instance"],
            "seed": result["seed"], "status": result["status"]}
    if not recs:
        return [dict(base)]
    na = next(r for r in recs if r["policy"] == "nonadaptive_greedy")
    rows = []
    for r in recs:
        if r["policy"] != "adaptive_greedy":
            continue
        rf = next((x for x in recs if x["policy"] == "risk_free" and x["feedback"] == r["feedback"]), None)
        rows.append(dict(base, k=r["k"], mode=r["mode"], feedback=r["feedback"],
                         nonadaptive=_fmt(na["value"]), adaptive=_fmt(r["value"]),
                         risk_free=_fmt(rf["value"]) if rf else "",
                         ratio=_fmt(r["ratio"]["value"]), ratio_low=_fmt(r["ratio"]["low"]),
                         ratio_high=_fmt(r["ratio"]["high"]), samples=r["samples"] or ""))
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def run_experiment(config, outdir, workers: int | None = None) -> list[dict]:
    """Run every job of ``config`` and write the result files into ``outdir``.

    Jobs may run in parallel processes; each owns the stream
    ``RngStream(seed, job_index)``, so results do not depend on scheduling.
    """
    settings, jobs = load_config(config)
    workers = settings["workers"] if workers is None else workers
    base_dir = Path(config).resolve().parent
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            done = list(ex.map(_run_job, jobs, [base_dir] * len(jobs)))
    else:
        done = [_run_job(job, base_dir) for job in jobs]
    results = [r for r, _ in done]
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": settings["seed"], "samples": settings["samples"], "pool": settings["pool"],
            "seed_override": os.environ.get(SEED_ENV) is not None}
    (out / "results.json").write_text(json.dumps({"config": meta, "jobs": results}, indent=2) + "\n")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        for row in _summary_rows(r):
            writer.writerow(row)
    (out / "summary.csv").write_text(buf.getvalue())
    timings = [{"job": r["job"], "name": r["name"], "runtime_ms": int(round(dt * 1000))}
               for r, dt in done]
    (out / "timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    return results
