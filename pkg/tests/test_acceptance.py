"""Acceptance criteria 1-8.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output of ``-v`` runs).  The fuzz campaign shared by criteria 1, 3,
5 and 6 runs once per session.
"""
import math
import random
from fractions import Fraction
from itertools import product

import gmpy2
import mpmath
import pytest

from adsolver import (
    Market,
    NoEquilibriumError,
    SolverConfig,
    check_equilibrium,
    oracle_equilibria,
    solve,
    validate,
)
from adsolver.errors import IterationCapExceeded
from adsolver.numerics import (
    approx_power,
    fast_constants,
    make_constants,
    round_factor_to_power,
    round_to_denominator,
)
from adsolver.solver import run_loop
from support import InvariantMonitor, random_dag_market, random_irreducible

FUZZ_COUNT = 500
GRID_N3 = 150
POTENTIAL_RUNS = 80
NUMERIC_SAMPLES = 1000
DAG_COUNT = 120


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {detail}")


# ---------------------------------------------------------------- shared fuzz campaign


class ExtractionAudit:
    """Extraction observer checking the rounding bounds on every completed run."""

    def __init__(self):
        self.runs = 0
        self.problems = []

    def __call__(self, res, ext):
        self.runs += 1
        c = res.constants
        n, U = c.n, c.U
        scale = (n * U) ** n
        if ext.D > scale:
            self.problems.append(f"D={ext.D} exceeds (nU)^n={scale}")
        tol = 4 * c.eps * scale
        if c.L is not None:
            tol += Fraction(1, 4 * c.L)
        for p, q in zip(ext.prices, ext.q):
            if abs(p - Fraction(q, ext.D)) > tol:
                self.problems.append(f"|p - q/D| too large for q={q}, D={ext.D}")
        rep = check_equilibrium(Market(res.engine.u), list(ext.q))
        if not (rep.ok and rep.flow_value == sum(ext.q)):
            self.problems.append(f"min-cut test fails for q={ext.q}")


@pytest.fixture(scope="module")
def campaign():
    rng = random.Random(20240501)
    monitor = InvariantMonitor(l2_oracle_max_n=3)
    audit = ExtractionAudit()
    failures, sizes = [], []
    for t in range(FUZZ_COUNT):
        n = 2 + t % 4
        m = random_irreducible(rng, n, rng.randint(1, 10))
        sizes.append(n)
        try:
            res = solve(m, SolverConfig(mode="fixed", profile="fast"),
                        observer=monitor, extraction_observer=audit)
            if not check_equilibrium(m, res.prices).ok:
                failures.append((m.u, "verifier rejects prices"))
        except Exception as exc:  # any exception counts as a failed instance
            failures.append((m.u, f"{type(exc).__name__}: {exc}"))
    return {"monitor": monitor, "audit": audit, "failures": failures, "sizes": sizes}


def test_criterion_1_fuzzed_exact_correctness(campaign, capsys):
    fails = campaign["failures"]
    ok = len(campaign["sizes"]) >= 500 and not fails
    report(capsys, 1, ok, f"{len(campaign['sizes'])} irreducible markets (n=2..5, U<=10), "
           f"{len(fails)} failures")
    assert ok, fails[:5]


def test_criterion_3_balanced_flow_certificate(campaign, capsys):
    mon = campaign["monitor"]
    bad = mon.by_group.get("flow", [])
    ok = mon.counts["crossing"] > 0 and mon.counts["l2_oracle"] > 0 and not bad
    report(capsys, 3, ok, f"no-crossing checked on {mon.counts['crossing']} iterations, "
           f"l2 oracle matched on {mon.counts['l2_oracle']}, {len(bad)} violations")
    assert ok, bad[:5]


def test_criterion_5_structural_invariants(campaign, capsys):
    mon = campaign["monitor"]
    bad = mon.by_group.get("structure", [])
    ok = mon.iterations > 0 and not bad
    report(capsys, 5, ok, f"{mon.iterations} iterations checked, {len(bad)} violations")
    assert ok, bad[:5]


def test_criterion_6_extraction_bounds(campaign, capsys):
    audit = campaign["audit"]
    ok = audit.runs > 0 and not audit.problems
    report(capsys, 6, ok, f"{audit.runs} extractions checked, {len(audit.problems)} violations")
    assert ok, audit.problems[:5]


# ---------------------------------------------------------------- criterion 2


def grid_markets():
    out = []
    for v in product(range(5), repeat=4):
        m = Market([list(v[:2]), list(v[2:])])
        if validate(m).ok:
            out.append(m)
    rng = random.Random(3)
    seen = set()
    while len(seen) < GRID_N3:
        u = tuple(tuple(rng.randint(0, 4) for _ in range(3)) for _ in range(3))
        if u in seen:
            continue
        m = Market([list(r) for r in u])
        if validate(m).ok:
            seen.add(u)
            out.append(m)
    return out


def test_criterion_2_oracle_equivalence(capsys):
    markets = grid_markets()
    unique = multiple = 0
    bad = []
    for m in markets:
        q = solve(m).prices
        eqs = oracle_equilibria(m)
        if len(eqs) == 1:
            unique += 1
            o = eqs[0]
            if any(a * o[0] != b * q[0] for a, b in zip(o, q)):
                bad.append((m.u, q, o))
        else:
            # the equilibrium set is not a single ray: fall back to the exact verifier
            multiple += 1
            if not eqs or not check_equilibrium(m, q).ok:
                bad.append((m.u, q, eqs))
    ok = len(markets) >= 200 and not bad
    report(capsys, 2, ok, f"{len(markets)} grid markets (n<=3, U<=4): {unique} proportional to "
           f"the unique oracle equilibrium, {multiple} with several equilibria verified "
           f"exactly, {len(bad)} mismatches")
    assert ok, bad[:5]


# ---------------------------------------------------------------- criterion 4


def test_criterion_4_potential_bounds(capsys):
    rng = random.Random(404)
    mon = InvariantMonitor(potential_R=256)
    completed = capped = 0
    for t in range(POTENTIAL_RUNS):
        n = 2 + t % 3
        m = random_irreducible(rng, n, rng.randint(1, 6))
        fast = fast_constants(n, m.U, "exact", 0)
        consts = make_constants(n, m.U, "exact", R=256, eps=fast.eps)
        try:
            run_loop(m, consts, "exact", max_iterations=200, observer=mon,
                     bitlength_limit=1 << 14)
            completed += 1
        except IterationCapExceeded:
            capped += 1
    bad = mon.by_group.get("potential", [])
    ok = completed >= 20 and mon.counts["potential"] > 0 and not bad
    report(capsys, 4, ok, f"{completed} exact runs completed within 200 iterations "
           f"({capped} stopped early, also checked), {mon.counts['potential']} iterations, "
           f"{len(bad)} potential violations")
    assert ok, bad[:5]


# ---------------------------------------------------------------- criterion 7


def log_uniform(rng, lo, hi):
    return int(math.exp(rng.uniform(math.log(lo), math.log(hi + 1)))) if lo > 0 else 0


def exact_power(k, L):
    return gmpy2.mpz(L + 1) ** k, gmpy2.mpz(L) ** k


def sample_factor(rng, k, L):
    """A rational near (1 + 1/L)**k, jittered by up to one step either way."""
    mpmath.mp.prec = 128
    x = mpmath.power(1 + mpmath.mpf(1) / L, k) * (1 + mpmath.mpf(rng.uniform(-1, 1)) / L)
    man, exp = mpmath.mpf(x).man_exp
    val = Fraction(int(man)) * Fraction(2) ** int(exp)
    return max(val, Fraction(1))


def test_criterion_7_numerics(capsys):
    rng = random.Random(7)
    bad = {"approx_power": 0, "additive": 0, "multiplicative": 0, "factor": 0}
    for _ in range(NUMERIC_SAMPLES):
        L = log_uniform(rng, 3, 10**6)
        k = log_uniform(rng, 1, 10**6) if rng.random() < 0.95 else 0
        N, Dn = exact_power(k, L)
        b = approx_power(k, L)
        bn, bd = gmpy2.mpz(b.numerator), gmpy2.mpz(b.denominator)
        # |b - N/Dn| <= 1/(4L)
        if abs(bn * Dn - N * bd) * 4 * L > bd * Dn:
            bad["approx_power"] += 1
        q = round_to_denominator(b, L)
        # |N/Dn - q/L| <= 3/(4L) < 1/L
        if abs(N * L - q * Dn) * 4 > 3 * Dn:
            bad["additive"] += 1
        # (N/Dn) / (q/L) in [L/(L+1), (L+1)/L]
        if N * L * L > (L + 1) * q * Dn or N * (L + 1) < q * Dn:
            bad["multiplicative"] += 1
        x = sample_factor(rng, k, L)
        e = round_factor_to_power(x, L)
        P, Pd = exact_power(e, L)
        xn, xd = gmpy2.mpz(x.numerator), gmpy2.mpz(x.denominator)
        # x / (P/Pd) in [L/(L+1), (L+1)/L]
        if xn * Pd * L > (L + 1) * P * xd or xn * Pd * (L + 1) < L * P * xd:
            bad["factor"] += 1
    ok = not any(bad.values())
    report(capsys, 7, ok, f"{NUMERIC_SAMPLES} samples (k, L <= 10^6) against exact big-integer "
           f"powers, violations {bad}")
    assert ok


# ---------------------------------------------------------------- criterion 8


def test_criterion_8_general_markets(capsys):
    rng = random.Random(8)
    bad, rejected = [], 0
    for t in range(DAG_COUNT):
        m = random_dag_market(rng, rng.randint(2, 6), 10)
        try:
            q = solve(m).prices
            if not check_equilibrium(m, q).ok:
                bad.append((m.u, q))
        except Exception as exc:
            bad.append((m.u, f"{type(exc).__name__}: {exc}"))
    violators = 0
    for t in range(40):
        m = random_dag_market(rng, rng.randint(3, 6), 10, self_loop_ok=False)
        violators += 1
        try:
            solve(m)
            bad.append((m.u, "violator accepted"))
        except NoEquilibriumError:
            rejected += 1
    ok = DAG_COUNT >= 100 and not bad and rejected == violators
    report(capsys, 8, ok, f"{DAG_COUNT} DAG-of-components markets (n<=6) verified, "
           f"{rejected}/{violators} self-loop violators rejected, {len(bad)} failures")
    assert ok, bad[:5]
