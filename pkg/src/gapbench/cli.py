"""Command-line interface.

Exit codes: 0 success, 1 an oracle check failed, 2 invalid input,
3 an exact computation would exceed its enumeration cap.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from .checks import run_all
from .errors import GapBenchError, TooLargeToEnumerate, ValidationError
from .harness import DEFAULT_SEED, SEED_ENV, build_instance, describe, measure_gap, parse_params, run_experiment
from .io import load_instance, save_instance
from .policies import (
    DEFAULT_POOL, adaptive_values_exact, greedy_nonadaptive, make_policy, sigma_adaptive,
)
from .rng import RngStream
from .sigma import EstimateCI, sigma_exact, sigma_mc

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_CAP = 0, 1, 2, 3


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"{SEED_ENV}={env!r} is not an integer") from None
    return DEFAULT_SEED


def _value(x) -> dict:
    if isinstance(x, EstimateCI):
        return x.to_dict()
    out = {"value": float(x)}
    if isinstance(x, Fraction):
        out["exact"] = f"{x.numerator}/{x.denominator}"
    return out


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated vertex ids, got {text!r}") from None


def _budget(args, m) -> int:
    k = args.k if args.k is not None else m.k
    if k is None:
        raise ValidationError("give a budget with -k (the instance carries none)")
    return k


def cmd_generate(args):
    params = parse_params(args.params or "")
    m = build_instance(args.gen, params, "params")
    save_instance(m, args.output)
    return {"instance": describe(args.gen, params), "n": m.n, "edges": m.graph.m, "kind": m.kind.value,
            "k": m.k, "output": args.output}


def cmd_sigma(args):
    m = load_instance(args.input)
    seeds = _ints(args.seeds)
    if args.mode == "exact":
        val = sigma_exact(m, seeds)
    else:
        val = sigma_mc(m, seeds, args.samples, RngStream(_seed(args)), args.method)
    return {"seeds": seeds, "mode": args.mode, **_value(val), "seed": _seed(args)}


def cmd_greedy(args):
    m = load_instance(args.input)
    k = _budget(args, m)
    order = greedy_nonadaptive(m, k, args.mode, args.pool, RngStream(_seed(args)))
    return {"k": k, "seeds": list(order.order),
            "marginals": [float(g) for g in order.marginal_at_pick], "seed": _seed(args)}


def cmd_adaptive(args):
    m = load_instance(args.input)
    k = _budget(args, m)
    stream = RngStream(_seed(args))
    policy = make_policy(args.policy, mode=args.mode, n=args.pool, rng=stream.child(0))
    if args.mode == "exact":
        val = adaptive_values_exact(m, policy, k, args.feedback).values[k]
    else:
        val = sigma_adaptive(m, policy, k, args.feedback, args.samples, stream.child(1))
    return {"policy": policy.name, "feedback": args.feedback, "k": k, "mode": args.mode, **_value(val),
            "seed": _seed(args)}


def cmd_gap(args):
    m = load_instance(args.input)
    rep = measure_gap(m, _budget(args, m), args.feedback, args.mode, args.samples, _seed(args),
                      args.optimal, args.pool, args.input)
    return {"records": rep.records()}


def cmd_oracle_check(args):
    m = load_instance(args.input)
    results = run_all(m, _seed(args), args.samples)
    failed = [r for r in results if r.status == "fail"]
    out = {"checks": [{"name": r.name, "status": r.status, "detail": r.detail} for r in results]}
    return out, (EXIT_CHECK_FAILED if failed else EXIT_OK)


def cmd_experiment(args):
    results = run_experiment(args.config, args.output, args.workers)
    return {"jobs": len(results), "errors": sum(r["status"] != "ok" for r in results),
            "output": args.output}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapbench", description="Influence cascades and greedy adaptivity gaps.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(fn=fn)
        sp.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or {DEFAULT_SEED})")
        return sp

    sp = add("generate", cmd_generate, "build an instance and write it as JSON")
    sp.add_argument("--gen", required=True, help="icm_tight, ltm_tight, tree_prescribed, mixture, random")
    sp.add_argument("--params", default="", help="comma-separated name=value pairs, e.g. k=2,W=1600")
    sp.add_argument("-o", "--output", required=True)

    sp = add("sigma", cmd_sigma, "expected infected weight of a seed set")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--seeds", default="")
    sp.add_argument("--mode", choices=("exact", "mc"), default="exact")
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--method", choices=("triggering", "original"), default="triggering")

    sp = add("greedy", cmd_greedy, "non-adaptive greedy seed order")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-k", type=int, default=None)
    sp.add_argument("--mode", choices=("auto", "exact", "mc"), default="auto")
    sp.add_argument("--pool", type=int, default=DEFAULT_POOL)

    sp = add("adaptive", cmd_adaptive, "value of an adaptive policy")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-k", type=int, default=None)
    sp.add_argument("--policy", choices=("greedy", "riskfree"), default="greedy")
    sp.add_argument("--feedback", choices=("full", "myopic"), default="full")
    sp.add_argument("--mode", choices=("exact", "mc"), default="exact")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--pool", type=int, default=DEFAULT_POOL)

    sp = add("gap", cmd_gap, "greedy adaptivity gap report")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("-k", type=int, default=None)
    sp.add_argument("--feedback", choices=("full", "myopic", "both"), default="full")
    sp.add_argument("--mode", choices=("exact", "mc"), default="exact")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--pool", type=int, default=DEFAULT_POOL)
    sp.add_argument("--optimal", action="store_true", help="also run the brute-force optimal oracles")

    sp = add("oracle-check", cmd_oracle_check, "run the invariant suite on one instance")
    sp.add_argument("-i", "--input", required=True)
    sp.add_argument("--samples", type=int, default=500)

    sp = add("experiment", cmd_experiment, "run a JSON experiment config")
    sp.add_argument("-c", "--config", required=True)
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = args.fn(args)
    except TooLargeToEnumerate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (GapBenchError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    code = EXIT_OK
    if isinstance(out, tuple):
        out, code = out
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
