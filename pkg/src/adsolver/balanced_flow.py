"""Balanced flows: maximum flows minimising the l2 norm of buyer surpluses.

The construction is divide and conquer.  After making the flow maximum, the
buyers reachable from s carry all the surplus; inside that part every buyer
gets a supply (surplus above average) or demand (at or below average) and
supplies are routed to demands through residual buyer-good-buyer paths.  If
everything routes, all surpluses equal the average.  Otherwise the nodes
reachable from unrouted supply form a min cut and both sides recurse.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import FlowError
from .flow import (
    ZERO,
    path_to_buyer,
    max_flow,
    path_capacity,
    push_path,
    residual_reachable,
    residual_search,
)


@dataclass(frozen=True)
class SurplusVector:
    r_b: tuple
    r_c: tuple

    @property
    def l1(self):
        return sum(self.r_b, ZERO)

    @property
    def l2_sq(self):
        return sum((r * r for r in self.r_b), ZERO)


def surplus_of(net, flow):
    return SurplusVector(tuple(flow.buyer_surplus(net)), tuple(flow.good_surplus(net)))


def balance(net, flow=None):
    """Balanced flow in ``net`` obtained from ``flow`` (zero flow if omitted).

    Goods without surplus in ``flow`` keep zero surplus.
    """
    f = max_flow(net, flow)
    rb = f.buyer_surplus(net)
    if not any(rb):
        return f
    s_buyers, s_goods = residual_reachable(net, f)
    _balance_part(net, f, set(s_buyers), set(s_goods))
    return f


def _balance_part(net, f, buyers, goods):
    if len(buyers) <= 1:
        return
    rb = f.buyer_surplus(net)
    avg = sum((rb[i] for i in buyers), ZERO) / len(buyers)
    supply = {i: rb[i] - avg for i in buyers if rb[i] > avg}
    if not supply:
        return
    # ties with the average are demand nodes
    demand = {i: avg - rb[i] for i in buyers if rb[i] <= avg}
    while True:
        sources = [i for i, s in supply.items() if s > 0]
        if not sources:
            return
        bpar, cpar = residual_search(net, f, sources, buyers, goods)
        target = next((b for b in sorted(bpar) if demand.get(b, ZERO) > 0), None)
        if target is None:
            break
        path = path_to_buyer(bpar, cpar, target)
        amount = min(supply[path[0]], demand[target])
        back = path_capacity(f, path)
        if back is not None:
            amount = min(amount, back)
        push_path(f, path, amount)
        supply[path[0]] -= amount
        demand[target] -= amount

    # unrouted supply: split along the induced min cut
    sources = [i for i, s in supply.items() if s > 0]
    bpar, cpar = residual_search(net, f, sources, buyers, goods)
    high_b, high_c = set(bpar), set(cpar)
    _balance_part(net, f, high_b, high_c)
    _balance_part(net, f, buyers - high_b, goods - high_c)


def crossing_pairs(net, flow):
    """Pairs (a, z) with a residual path from buyer a to buyer z and r(a) > r(z).

    A balanced flow has none; this is the certificate checked by tests.
    """
    rb = flow.buyer_surplus(net)
    bad = []
    for a in range(net.n):
        if rb[a] <= 0:
            continue
        bpar, _ = residual_search(net, flow, [a])
        bad.extend((a, z) for z in sorted(bpar) if rb[z] < rb[a])
    return bad


def is_balanced(net, flow):
    """Maximum flow with no crossing residual path."""
    try:
        residual_reachable(net, flow)
    except FlowError:
        return False
    return not crossing_pairs(net, flow)


def common_denominator_ok(flow, d):
    return all((v * d).denominator == 1 for row in flow.f for v in row)

