"""Command line: solve, verify, gen, trace and fuzz.

Exit codes: 0 success, 1 not an equilibrium, 2 bad input, 3 no equilibrium
exists, 4 internal failure.
"""
from __future__ import annotations

import argparse
import json
import os
import random
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor

from .errors import NoEquilibriumError, SolverError, ValidationError
from .market import Market, validate
from .solver import SolverConfig, solve
from .verify import check_equilibrium

EXIT_OK, EXIT_NOT_EQ, EXIT_INPUT, EXIT_NO_EQ, EXIT_INTERNAL = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


def _read_json(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def load_instance(path):
    data = _read_json(path)
    if not isinstance(data, dict) or "utilities" not in data:
        raise InputError(f"{path}: expected an object with a 'utilities' matrix")
    u = data["utilities"]
    if not isinstance(u, list) or not all(isinstance(row, list) for row in u):
        raise InputError(f"{path}: 'utilities' must be a list of rows")
    try:
        return Market(u)
    except ValidationError as exc:
        raise InputError(f"{path}: {exc}") from exc


def load_prices(path):
    data = _read_json(path)
    if not isinstance(data, dict) or "prices" not in data:
        raise InputError(f"{path}: expected an object with 'prices'")
    try:
        prices = [int(v) if not isinstance(v, bool) else None for v in data["prices"]]
        den = int(data.get("denominator", "1"))
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: prices must be integer strings") from exc
    if None in prices or any(v < 1 for v in prices) or den < 1:
        raise InputError(f"{path}: prices must be positive integers")
    # a common denominator does not change which prices are equilibria
    return prices


def solution_json(result):
    return {
        "prices": [str(q) for q in result.prices],
        "denominator": "1",
        "allocations": [
            [{"num": str(x.numerator), "den": str(x.denominator)} for x in row]
            for row in result.allocations
        ],
        "iterations": result.iterations,
        "mode": result.mode,
        "verified": result.verified,
    }


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_solve(args):
    market = load_instance(args.input)
    profile = os.environ.get("AD_SOLVER_PROFILE") or args.profile
    try:
        config = SolverConfig(
            mode=args.mode,
            profile=profile,
            max_iterations=args.max_iters,
            trace_path=args.trace,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    rep = validate(market)
    if not (rep.likes_some_good and rep.every_good_liked):
        raise InputError("; ".join(rep.problems))
    result = solve(market, config)
    _emit(solution_json(result), args.out)
    return EXIT_OK if result.verified else EXIT_NOT_EQ


def cmd_verify(args):
    market = load_instance(args.instance)
    prices = load_prices(args.solution)
    if len(prices) != market.n:
        raise InputError(f"{len(prices)} prices for {market.n} agents")
    report = check_equilibrium(market, prices)
    _emit(report.as_dict())
    return EXIT_OK if report.ok else EXIT_NOT_EQ


def generate(n, umax, seed, irreducible=False, density=0.5):
    """Random utility matrix; every agent likes a good and every good is liked."""
    rng = random.Random(seed)
    while True:
        u = [[rng.randint(1, umax) if rng.random() < density else 0 for _ in range(n)]
             for _ in range(n)]
        m = Market(u)
        rep = validate(m)
        if not (rep.likes_some_good and rep.every_good_liked):
            continue
        if irreducible and not rep.irreducible:
            continue
        return u


def cmd_gen(args):
    if args.n < 1 or args.umax < 1:
        raise InputError("--n and --umax must be positive")
    u = generate(args.n, args.umax, args.seed, args.irreducible, args.density)
    _emit({"name": f"random-n{args.n}-u{args.umax}-s{args.seed}", "utilities": u}, args.out)
    return EXIT_OK


def cmd_trace(args):
    kinds, events = Counter(), Counter()
    count, backoffs = 0, 0
    max_price = 0.0
    components = set()
    try:
        with open(args.path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                count += 1
                kinds[rec["kind"]] += 1
                events[rec["binding_event"]] += 1
                backoffs += rec.get("backoff", 0)
                components.add((rec.get("component", 0), rec.get("attempt", "")))
                max_price = max(max_price, float(rec["max_price"]))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"{args.path}: {exc}") from exc
    _emit({
        "iterations": count,
        "kinds": dict(kinds),
        "binding_events": dict(events),
        "backoffs": backoffs,
        "runs": len(components),
        "max_price": max_price,
    })
    return EXIT_OK


def _fuzz_one(job):
    n, umax, seed, mode, profile = job
    u = generate(n, umax, seed, irreducible=True)
    try:
        res = solve(Market(u), SolverConfig(mode=mode, profile=profile, trace_level=0))
        ok = check_equilibrium(Market(u), res.prices).ok
        return {"seed": seed, "n": n, "ok": ok, "iterations": res.iterations}
    except SolverError as exc:
        return {"seed": seed, "n": n, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def cmd_fuzz(args):
    rng = random.Random(args.seed)
    jobs = [(rng.randint(args.n_min, args.n_max), args.umax, rng.getrandbits(32),
             args.mode, os.environ.get("AD_SOLVER_PROFILE") or args.profile)
            for _ in range(args.count)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_fuzz_one, jobs))
    else:
        results = [_fuzz_one(j) for j in jobs]
    failed = [r for r in results if not r["ok"]]
    _emit({
        "instances": len(results),
        "failed": len(failed),
        "max_iterations": max((r.get("iterations", 0) for r in results), default=0),
        "failures": failed,
    })
    return EXIT_OK if not failed else EXIT_NOT_EQ


def build_parser():
    p = argparse.ArgumentParser(prog="adsolver", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="compute equilibrium prices")
    s.add_argument("input")
    s.add_argument("--mode", choices=["exact", "fixed"], default="fixed")
    s.add_argument("--profile", choices=["paper", "fast"], default="fast")
    s.add_argument("--trace", help="write one JSON record per iteration here")
    s.add_argument("--max-iters", type=int, dest="max_iters")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check prices against an instance")
    v.add_argument("instance")
    v.add_argument("solution")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--umax", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--irreducible", action="store_true")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("trace", help="summarise a trace file")
    t.add_argument("path")
    t.set_defaults(func=cmd_trace)

    f = sub.add_parser("fuzz", help="solve and verify random irreducible instances")
    f.add_argument("--count", type=int, default=100)
    f.add_argument("--n-min", type=int, default=2)
    f.add_argument("--n-max", type=int, default=5)
    f.add_argument("--umax", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--mode", choices=["exact", "fixed"], default="fixed")
    f.add_argument("--profile", choices=["paper", "fast"], default="fast")
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=cmd_fuzz)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoEquilibriumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_EQ
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
