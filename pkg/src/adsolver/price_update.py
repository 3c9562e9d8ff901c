"""One iteration's combinatorial core.

Pick the buyers with large surplus, raise the prices of the goods they are
attached to by a common factor, move the flow along, and, when a new
equality edge appears, push surplus across it.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .errors import FlowError, SolverError
from .flow import ZERO


class Event(str, Enum):
    EQ = "EQ"
    BAL23 = "BAL23"
    BAL24 = "BAL24"
    XMAX = "XMAX"


# Order used to break ties between factors of equal value.
EVENT_PRIORITY = (Event.EQ, Event.BAL23, Event.BAL24, Event.XMAX)


@dataclass(frozen=True)
class ActiveSet:
    order: tuple  # buyers by decreasing surplus, ties by index
    ell: int  # number of buyers in B(S)
    S: Fraction
    members: frozenset  # B(S)
    gamma: frozenset  # goods adjacent to B(S) in the equality graph
    types: tuple  # buyer type 1..4 per agent

    def of_type(self, t):
        return [i for i, ty in enumerate(self.types) if ty == t]


@dataclass(frozen=True)
class UpdateFactors:
    x_eq: object  # None stands for +infinity
    x_23: object
    x_24: object
    x_max: object
    x: object
    event: Event
    eq_edge: tuple | None = None  # (buyer, good) attaining x_eq


def select_active_set(r_b, net, n=None):
    """Threshold the buyers at the first surplus gap larger than 1 + 1/n."""
    n = len(r_b) if n is None else n
    if not any(r > 0 for r in r_b):
        raise SolverError("select_active_set called with zero total surplus")
    order = sorted(range(len(r_b)), key=lambda i: (-r_b[i], i))
    ell = len(order)
    for pos in range(len(order) - 1):
        hi, lo = r_b[order[pos]], r_b[order[pos + 1]]
        # hi / lo > 1 + 1/n, without dividing by a possibly zero lo
        if hi * n > lo * (n + 1):
            ell = pos + 1
            break
    members = frozenset(order[:ell])
    gamma = frozenset(j for i in members for j in net.buyer_adj[i])
    types = []
    for i in range(len(r_b)):
        inside, owned = i in members, i in gamma
        types.append(1 if inside and owned else 2 if inside else 3 if owned else 4)
    return ActiveSet(tuple(order), ell, r_b[order[ell - 1]], members, gamma, tuple(types))


def compute_x_eq(active, prices, u, net):
    """Smallest factor at which some B(S) buyer ties with a good outside Gamma.

    Exact prices: ratio alpha_i * p_k / u_ik.  Returns (factor or None, edge).
    """
    best, edge = None, None
    n = len(prices)
    for i in sorted(active.members):
        for k in range(n):
            if k in active.gamma or u[i][k] <= 0:
                continue
            val = net.alpha[i] * prices[k] / u[i][k]
            if best is None or val < best:
                best, edge = val, (i, k)
    return best, edge


def compute_x_eq_exp(active, price_exp, util_exp, net):
    """Exponent version of :func:`compute_x_eq` for powers of 1 + 1/L."""
    best, edge = None, None
    n = len(price_exp)
    for i in sorted(active.members):
        for k in range(n):
            if k in active.gamma or util_exp[i][k] is None:
                continue
            val = net.alpha[i] - (util_exp[i][k] - price_exp[k])
            if best is None or val < best:
                best, edge = val, (i, k)
    return best, edge


def compute_x_23_x_24(active, caps, r_b):
    """Factors at which a type 2 surplus meets a type 3 / type 4 surplus.

    Terms with a non-positive denominator never meet and are skipped.
    """
    x23 = x24 = None
    twos = active.of_type(2)
    threes = active.of_type(3)
    fours = active.of_type(4)
    for i in twos:
        for j in threes:
            den = caps[i] + caps[j] - r_b[i]
            if den > 0:
                val = (caps[i] + caps[j] - r_b[j]) / den
                if x23 is None or val < x23:
                    x23 = val
        den = caps[i] - r_b[i]
        if den <= 0:
            continue
        for j in fours:
            val = (caps[i] - r_b[j]) / den
            if x24 is None or val < x24:
                x24 = val
    return x23, x24


def pick_factor(x_eq, x_23, x_24, x_max, eq_edge=None):
    """Minimum of the candidates; ties resolved EQ > BAL23 > BAL24 > XMAX."""
    cands = {Event.EQ: x_eq, Event.BAL23: x_23, Event.BAL24: x_24, Event.XMAX: x_max}
    x = min(v for v in cands.values() if v is not None)
    event = next(e for e in EVENT_PRIORITY if cands[e] is not None and cands[e] == x)
    return UpdateFactors(x_eq, x_23, x_24, x_max, x, event, eq_edge if event is Event.EQ else None)


def check_no_inflow(active, flow):
    """A balanced flow sends nothing from outside B(S) into Gamma(B(S))."""
    for i in range(flow.n):
        if i in active.members:
            continue
        for j in active.gamma:
            if flow.f[i][j] != 0:
                raise FlowError(
                    f"buyer {i + 1} outside B(S) sends {flow.f[i][j]} to good {j + 1} in Gamma"
                )


def apply_update(prices, flow, x, active):
    """Multiply Gamma prices and all flow into Gamma by x (exact prices)."""
    check_no_inflow(active, flow)
    new_prices = [p * x if j in active.gamma else p for j, p in enumerate(prices)]
    return new_prices, scale_flow(flow, active, [x] * len(prices))


def scale_flow(flow, active, factors):
    """Scale the flow into each good of Gamma by that good's factor."""
    out = flow.copy()
    for i in range(flow.n):
        for j in active.gamma:
            if out.f[i][j]:
                out.f[i][j] = out.f[i][j] * factors[j]
    return out


def predicted_surplus(active, caps, r_b, x):
    """Buyer surpluses after a price raise by x, by buyer type."""
    out = []
    for i, t in enumerate(active.types):
        p, r = caps[i], r_b[i]
        if t == 1:
            out.append(x * r)
        elif t == 2:
            out.append((1 - x) * p + x * r)
        elif t == 3:
            out.append((x - 1) * p + r)
        else:
            out.append(r)
    return out


def new_equality_edges(active, net_after):
    """Equality edges from B(S) to goods outside Gamma after the raise."""
    return [
        (i, j)
        for i in sorted(active.members)
        for j in net_after.buyer_adj[i]
        if j not in active.gamma
    ]


def augment_new_edge(net, flow, edge, active):
    """Use a new equality edge (b_i, c_j) to shed surplus of b_i.

    First fill c_j from b_i until b_i's surplus drops to w (largest surplus
    outside B(S), or zero) or c_j is sold out.  Then, for each buyer b_k
    already buying c_j (ascending index), reroute c_j's supply from b_k to b_i
    until b_i's surplus meets max(r(b_k), w) or b_k no longer buys c_j.
    """
    i, j = edge
    f = flow.copy()
    rb = f.buyer_surplus(net)
    rc_j = net.cap[j] - f.in_c(j)
    outside = [rb[k] for k in range(net.n) if k not in active.members]
    w = max(outside) if outside else ZERO

    delta = min(rb[i] - w, rc_j)
    if delta < 0:
        raise FlowError(f"buyer {i + 1} starts below w on its new edge")
    f.f[i][j] += delta
    rb[i] -= delta
    if rb[i] == w:
        return f
    holders = [k for k in range(net.n) if k != i and flow.f[k][j] > 0]
    for k in holders:
        # rerouting delta raises r(b_k) by delta and lowers r(b_i) by delta
        if rb[k] + (rb[i] - w) <= w:
            delta = rb[i] - w
        else:
            delta = (rb[i] - rb[k]) / 2
        delta = min(delta, f.f[k][j])
        f.f[i][j] += delta
        f.f[k][j] -= delta
        rb[i] -= delta
        rb[k] += delta
        w = max(rb[k], w)
        if rb[i] == w:
            break
    return f


__all__ = [
    "ActiveSet",
    "Event",
    "UpdateFactors",
    "apply_update",
    "augment_new_edge",
    "check_no_inflow",
    "compute_x_23_x_24",
    "compute_x_eq",
    "compute_x_eq_exp",
    "new_equality_edges",
    "pick_factor",
    "predicted_surplus",
    "scale_flow",
    "select_active_set",
]
