"""The price-raising main loop, in exact-rational and fixed-precision flavours.

Both flavours share one driver.  An *engine* owns the price representation:
exact Fractions, or integer exponents of (1 + 1/L) together with their
denominator-L roundings.  The driver does active-set selection, tracing and
termination; the engine computes factors and moves prices and flows.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .balanced_flow import balance, surplus_of
from .errors import (
    ExtractionError,
    FlowError,
    IrreducibilityError,
    BitlengthExceeded,
    IterationCapExceeded,
    PrecisionError,
    ValidationError,
    VerificationFailed,
)
from .flow import FlowState, build_network, build_network_fixed, check_flow
from .market import compose_equilibria, scc_decompose, validate
from .numerics import (
    approx_power,
    ceil_log2,
    fast_constants,
    make_constants,
    round_factor_to_power,
    round_to_denominator,
    round_utility,
)
from .price_update import (
    Event,
    augment_new_edge,
    check_no_inflow,
    compute_x_23_x_24,
    compute_x_eq,
    compute_x_eq_exp,
    new_equality_edges,
    pick_factor,
    scale_flow,
    select_active_set,
)

ITERATION_C = 64
EXACT_ITERATION_CAP = 200
FAST_TIERS = 3


def default_max_iterations(n, U, mode="fixed"):
    if mode == "exact":
        return EXACT_ITERATION_CAP
    return ITERATION_C * n**5 * max(1, ceil_log2(n * U))


@dataclass
class SolverConfig:
    mode: str = "fixed"
    profile: str = "fast"  # "fast" (reduced constants, retried) or "paper"
    constants: object = None  # explicit SolverConstants; disables the retry ladder
    max_iterations: int | None = None
    trace_level: int = 1  # 0: nothing, 1: per-iteration records
    trace_path: str | None = None
    bitlength_warning: int = 4096  # exact mode only
    bitlength_limit: int = 1 << 16  # exact mode: abort beyond this many bits

    def __post_init__(self):
        if self.mode not in ("exact", "fixed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.profile not in ("fast", "paper"):
            raise ValueError(f"unknown profile {self.profile!r}")


@dataclass
class IterationTrace:
    iteration: int
    kind: str  # XMAX or BALANCING
    binding_event: str
    x: object  # factor (Fraction), or exponent of 1 + 1/L in fixed mode
    ell: int
    size_B: int
    l1_before: Fraction
    l2_sq_before: Fraction
    l1_raised: Fraction  # after the raise (and new-edge augmentation), before re-balancing
    l2_sq_raised: Fraction
    l1_after: Fraction
    l2_sq_after: Fraction
    max_price: str  # decimal rendering of the largest price
    max_exponent: int | None = None
    backoff: int = 0
    component: int = 0
    attempt: str = ""

    def as_dict(self):
        out = asdict(self)
        for key, val in out.items():
            if isinstance(val, Fraction):
                out[key] = format_rational(val)
        return out


TRACE_EXACT_BITS = 2048


def format_rational(v):
    """Exact "a/b" text, or "~float" once the bitlength gets out of hand."""
    if v.numerator.bit_length() + v.denominator.bit_length() <= TRACE_EXACT_BITS:
        return str(v)
    return f"~{float(v):.17g}"


@dataclass
class IterationSnapshot:
    """Everything an observer may want to check about one iteration."""

    iteration: int
    active: object
    factors: object
    net_before: object
    flow_before: object
    caps_before: tuple
    net_after: object
    flow_raised: object
    flow_after: object
    caps_after: tuple
    prices_before: tuple  # exact prices or exponents
    prices_after: tuple
    record: IterationTrace
    constants: object
    mode: str
    market: object  # the (component) market the loop runs on


# ---------------------------------------------------------------- engines


class ExactEngine:
    mode = "exact"

    def __init__(self, market, consts):
        self.u = market.u
        self.n = market.n
        self.consts = consts
        self.prices = [Fraction(1)] * self.n

    def network(self):
        return build_network(self.prices, self.u)

    def caps(self):
        return tuple(self.prices)

    def price_state(self):
        return tuple(self.prices)

    def true_prices(self):
        return list(self.prices)

    def factors(self, active, net, sv):
        x_eq, edge = compute_x_eq(active, self.prices, self.u, net)
        x23, x24 = compute_x_23_x_24(active, self.prices, sv.r_b)
        return pick_factor(x_eq, x23, x24, self.consts.x_max, edge)

    def raise_prices(self, active, fac, net, flow):
        check_no_inflow(active, flow)
        x = fac.x
        new_prices = [p * x if j in active.gamma else p for j, p in enumerate(self.prices)]
        f2 = scale_flow(flow, active, [x] * self.n)
        net2 = build_network(new_prices, self.u)
        rb = f2.buyer_surplus(net2)
        if any(r < 0 for r in rb):
            # follows from the meeting-point factors; a violation is a bug
            raise FlowError(f"negative buyer surplus after raise by {x}")
        self.prices = new_prices
        if fac.event is Event.EQ:
            f2 = _augment_first_new_edge(active, net2, f2)
        return net2, f2, x, 0

    def x_is_max(self, x):
        return x == self.consts.x_max

    def max_price(self):
        # values stay bounded while numerators and denominators grow
        return f"{float(max(self.prices)):.17g}", None

    def bitlength(self):
        return max(p.numerator.bit_length() + p.denominator.bit_length() for p in self.prices)

    # extraction hooks
    def join_factor(self, buyers, goods, net):
        best, edge = None, None
        for i in sorted(buyers):
            for k in range(self.n):
                if k in goods or self.u[i][k] <= 0:
                    continue
                val = net.alpha[i] * self.prices[k] / self.u[i][k]
                if best is None or val < best:
                    best, edge = val, (i, k)
        return best, edge

    def scale_goods(self, goods, factor):
        for j in goods:
            self.prices[j] *= factor


class FixedEngine:
    mode = "fixed"

    def __init__(self, market, consts):
        self.u = market.u
        self.n = market.n
        self.consts = consts
        self.L = consts.L
        self.util_exp = [
            [round_utility(v, self.L) if v > 0 else None for v in row] for row in market.u
        ]
        self.exps = [0] * self.n
        self.hat = [Fraction(1)] * self.n
        self._approx = {0: Fraction(1)}

    def approx(self, k):
        b = self._approx.get(k)
        if b is None:
            b = self._approx[k] = approx_power(k, self.L)
        return b

    def rounded(self, k):
        return Fraction(round_to_denominator(self.approx(k), self.L), self.L)

    def network(self):
        return build_network_fixed(self.exps, self.util_exp, self.hat)

    def caps(self):
        return tuple(self.hat)

    def price_state(self):
        return tuple(self.exps)

    def true_prices(self):
        """Fixed-point values of the powers, each within 1/(4L) of the truth."""
        return [self.approx(k) for k in self.exps]

    def factors(self, active, net, sv):
        x_eq, edge = compute_x_eq_exp(active, self.exps, self.util_exp, net)
        x23, x24 = compute_x_23_x_24(active, self.hat, sv.r_b)
        e23 = round_factor_to_power(x23, self.L) if x23 is not None else None
        e24 = round_factor_to_power(x24, self.L) if x24 is not None else None
        return pick_factor(x_eq, e23, e24, self.consts.xmax_exp, edge)

    def raise_prices(self, active, fac, net, flow):
        check_no_inflow(active, flow)
        x = max(fac.x, 1)
        backoff = 0
        while x >= 1:
            exps = [k + x if j in active.gamma else k for j, k in enumerate(self.exps)]
            hat = [self.rounded(k) if j in active.gamma else h
                   for j, (k, h) in enumerate(zip(exps, self.hat))]
            ratio = [hat[j] / self.hat[j] for j in range(self.n)]
            f2 = scale_flow(flow, active, ratio)
            net2 = build_network_fixed(exps, self.util_exp, hat)
            if all(r >= 0 for r in f2.buyer_surplus(net2)):
                break
            # rounding overshot a meeting point; take a smaller power
            x -= 1
            backoff += 1
        else:
            raise PrecisionError("no feasible price raise; L is too small for this instance")
        self.exps, self.hat = exps, hat
        if fac.event is Event.EQ and x == fac.x_eq:
            f2 = _augment_first_new_edge(active, net2, f2)
        return net2, f2, x, backoff

    def x_is_max(self, x):
        return x == self.consts.xmax_exp

    def max_price(self):
        k = max(self.exps)
        return f"{float(self.approx(k)):.17g}", k

    # extraction hooks
    def join_factor(self, buyers, goods, net):
        best, edge = None, None
        for i in sorted(buyers):
            for k in range(self.n):
                if k in goods or self.util_exp[i][k] is None:
                    continue
                val = net.alpha[i] - (self.util_exp[i][k] - self.exps[k])
                if best is None or val < best:
                    best, edge = val, (i, k)
        return best, edge

    def scale_goods(self, goods, factor):
        for j in goods:
            self.exps[j] += factor
            self.hat[j] = self.rounded(self.exps[j])


def _augment_first_new_edge(active, net2, f2):
    edges = new_equality_edges(active, net2)
    if not edges:
        raise FlowError("binding event is a new equality edge but none appeared")
    f2 = augment_new_edge(net2, f2, edges[0], active)
    check_flow(net2, f2)
    return f2


# ---------------------------------------------------------------- main loop


@dataclass
class LoopResult:
    engine: object
    net: object
    flow: FlowState
    trace: list
    constants: object

    @property
    def mode(self):
        return self.engine.mode

    @property
    def iterations(self):
        return len(self.trace)

    @property
    def prices(self):
        return self.engine.price_state()


def _make_engine(market, consts, mode):
    return ExactEngine(market, consts) if mode == "exact" else FixedEngine(market, consts)


def run_loop(market, consts, mode="fixed", max_iterations=None, observer=None,
             trace_sink=None, component=0, attempt="", bitlength_warning=4096,
             bitlength_limit=1 << 16):
    """Raise prices until the total buyer surplus drops below eps.

    ``observer`` is called with an :class:`IterationSnapshot` after every
    iteration; ``trace_sink`` receives each :class:`IterationTrace`.
    """
    if not validate(market).irreducible:
        raise IrreducibilityError("the main loop needs an irreducible market")
    n = market.n
    if max_iterations is None:
        max_iterations = default_max_iterations(n, market.U, mode)
    engine = _make_engine(market, consts, mode)
    net = engine.network()
    flow = balance(net)
    trace = []
    warned = False
    it = 0
    while True:
        sv = surplus_of(net, flow)
        if sv.l1 < consts.eps:
            return LoopResult(engine, net, flow, trace, consts)
        if it >= max_iterations:
            raise IterationCapExceeded(
                f"no convergence within {max_iterations} iterations "
                f"(surplus {float(sv.l1):.3g}, eps {float(consts.eps):.3g})",
                trace,
            )
        it += 1
        active = select_active_set(sv.r_b, net, n)
        fac = engine.factors(active, net, sv)
        caps_before, prices_before = engine.caps(), engine.price_state()
        net2, raised, applied, backoff = engine.raise_prices(active, fac, net, flow)
        mid = surplus_of(net2, raised)
        flow2 = balance(net2, raised)
        after = surplus_of(net2, flow2)
        max_p, max_k = engine.max_price()
        rec = IterationTrace(
            iteration=it,
            kind="XMAX" if engine.x_is_max(applied) else "BALANCING",
            binding_event=fac.event.value,
            x=applied,
            ell=active.ell,
            size_B=len(active.members),
            l1_before=sv.l1,
            l2_sq_before=sv.l2_sq,
            l1_raised=mid.l1,
            l2_sq_raised=mid.l2_sq,
            l1_after=after.l1,
            l2_sq_after=after.l2_sq,
            max_price=max_p,
            max_exponent=max_k,
            backoff=backoff,
            component=component,
            attempt=attempt,
        )
        trace.append(rec)
        if trace_sink is not None:
            trace_sink(rec)
        if observer is not None:
            observer(IterationSnapshot(
                it, active, fac, net, flow, caps_before, net2, raised, flow2,
                engine.caps(), prices_before, engine.price_state(), rec, consts, mode, market,
            ))
        if mode == "exact":
            bits = engine.bitlength()
            if bits > bitlength_limit:
                raise BitlengthExceeded(
                    f"exact prices need {bits} bits at iteration {it} "
                    f"(limit {bitlength_limit})",
                    trace,
                )
            if not warned and bits > bitlength_warning:
                warned = True
                warnings.warn(
                    f"exact prices exceed {bitlength_warning} bits at iteration {it}",
                    RuntimeWarning,
                    stacklevel=2,
                )
        net, flow = net2, flow2


def solve_exact(market, config=None, observer=None, trace_sink=None):
    """Exact-rational loop.  Returns (prices, flow, trace)."""
    config = config or SolverConfig(mode="exact")
    consts = config.constants or _constants_for(market, "exact", config.profile, 0)
    res = run_loop(market, consts, "exact", config.max_iterations, observer, trace_sink,
                   bitlength_warning=config.bitlength_warning,
                   bitlength_limit=config.bitlength_limit)
    return list(res.engine.prices), res.flow, res.trace


def solve_fixed(market, config=None, observer=None, trace_sink=None):
    """Fixed-precision loop.  Returns (price exponents, flow, trace)."""
    config = config or SolverConfig(mode="fixed")
    consts = config.constants or _constants_for(market, "fixed", config.profile, 0)
    res = run_loop(market, consts, "fixed", config.max_iterations, observer, trace_sink)
    return list(res.engine.exps), res.flow, res.trace


def _constants_for(market, mode, profile, tier):
    if profile == "fast":
        return fast_constants(market.n, market.U, mode, tier)
    return make_constants(market.n, market.U, mode)


# ---------------------------------------------------------------- full solve


@dataclass
class ComponentResult:
    agents: tuple
    q: tuple  # integer prices of the component, gcd-normalised
    D: int
    iterations: int
    attempt: str
    constants: object
    extraction: object = None


@dataclass
class SolveResult:
    prices: list  # positive integers
    allocations: list  # x[i][j] as Fractions
    iterations: int
    mode: str
    verified: bool
    components: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (component, attempt, message) of discarded attempts


def _attempt_plan(market, config):
    if config.constants is not None:
        return [(config.constants.profile, config.constants)]
    plan = []
    if config.profile == "fast":
        plan += [(f"fast{t}", None) for t in range(FAST_TIERS)]
    plan.append(("paper", None))
    return plan


def solve_component(market, config, observer=None, trace_sink=None, component=0,
                    failures=None, extraction_observer=None):
    """Loop plus extraction on one irreducible market, walking the retry ladder."""
    from .extraction import extract
    from .verify import check_equilibrium

    if market.n == 1:
        # a single agent owning a good it values is its own equilibrium at price 1
        return ComponentResult((0,), (1,), 1, 0, "trivial", None), []
    last = None
    for name, consts in _attempt_plan(market, config):
        if consts is None:
            if name == "paper":
                consts = make_constants(market.n, market.U, config.mode)
            else:
                consts = fast_constants(market.n, market.U, config.mode, int(name[4:]))
        try:
            res = run_loop(market, consts, config.mode, config.max_iterations, observer,
                           trace_sink, component, name, config.bitlength_warning,
                           config.bitlength_limit)
            ext = extract(res, market)
            if extraction_observer is not None:
                extraction_observer(res, ext)
            report = check_equilibrium(market, list(ext.q))
            if not report.ok:
                raise VerificationFailed("extracted prices fail verification", report, res.trace)
        except IterationCapExceeded:
            # a smaller eps only needs more iterations
            raise
        except (ExtractionError, VerificationFailed, PrecisionError) as exc:
            last = exc
            if failures is not None:
                failures.append((component, name, str(exc)))
            continue
        g = math.gcd(*ext.q)
        return ComponentResult(
            tuple(range(market.n)), tuple(v // g for v in ext.q), ext.D,
            res.iterations, name, consts, ext,
        ), res.trace
    raise last


def solve(market, config=None, observer=None, extraction_observer=None):
    """Equilibrium prices and allocations for any market with an equilibrium.

    Splits the market into strongly connected components, solves each one,
    glues the prices together and verifies the result exactly.
    """
    from .verify import check_equilibrium

    config = config or SolverConfig()
    report = validate(market)
    if not (report.likes_some_good and report.every_good_liked):
        raise ValidationError("; ".join(report.problems))
    decomposition = scc_decompose(market)

    sink_file = open(config.trace_path, "w") if config.trace_path else None
    trace, failures, comps = [], [], []

    def sink(rec):
        if config.trace_level > 0:
            trace.append(rec)
        if sink_file is not None:
            sink_file.write(json.dumps(rec.as_dict()) + "\n")

    try:
        for idx, agents in enumerate(decomposition.components):
            sub = market.restrict(agents)
            comp, _ = solve_component(sub, config, observer, sink, idx, failures,
                                      extraction_observer)
            comp.agents = tuple(agents)
            comps.append(comp)
    except Exception as exc:
        if hasattr(exc, "trace") and not exc.trace:
            exc.trace = trace
        raise
    finally:
        if sink_file is not None:
            sink_file.close()

    prices = compose_equilibria(decomposition, [list(c.q) for c in comps], market.U)
    check = check_equilibrium(market, prices)
    if not check.ok:
        raise VerificationFailed("composed prices fail verification", check, trace)
    return SolveResult(
        prices=prices,
        allocations=check.allocation,
        iterations=sum(c.iterations for c in comps),
        mode=config.mode,
        verified=True,
        components=comps,
        trace=trace,
        failures=failures,
    )


__all__ = [
    "ComponentResult",
    "ExactEngine",
    "FixedEngine",
    "IterationSnapshot",
    "IterationTrace",
    "LoopResult",
    "SolveResult",
    "SolverConfig",
    "default_max_iterations",
    "run_loop",
    "solve",
    "solve_component",
    "solve_exact",
    "solve_fixed",
]
