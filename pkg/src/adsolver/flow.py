"""Equality networks s -> buyers -> goods -> t and exact max-flow on them.

Buyer i and good i share the capacity ``cap[i]`` (the price of good i, or
its rounded version in fixed-precision mode).  Buyer-good edges are the
equality edges and have no upper bound; "infinite" is never represented by
a number.  Flows are stored as an n x n matrix of Fractions; the source and
sink arcs carry whatever conservation dictates.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from fractions import Fraction

from .errors import FlowError

ZERO = Fraction(0)


@dataclass(frozen=True)
class EqualityNetwork:
    n: int
    cap: tuple  # Fraction per agent: capacity of (s, b_i) and of (c_i, t)
    buyer_adj: tuple  # buyer_adj[i]: sorted goods j with (b_i, c_j) an equality edge
    alpha: tuple = ()  # bang per buck per buyer (Fraction, or exponent in fixed mode)

    @cached_property
    def good_adj(self):
        adj = [[] for _ in range(self.n)]
        for i, goods in enumerate(self.buyer_adj):
            for j in goods:
                adj[j].append(i)
        return tuple(tuple(a) for a in adj)

    @property
    def edges(self):
        return frozenset((i, j) for i, goods in enumerate(self.buyer_adj) for j in goods)

    def has_edge(self, i, j):
        return j in self.buyer_adj[i]

    def with_caps(self, cap):
        return EqualityNetwork(self.n, tuple(Fraction(c) for c in cap), self.buyer_adj, self.alpha)


def build_network(prices, u, capacities=None):
    """N_p for exact rational prices; capacities default to the prices themselves."""
    n = len(prices)
    prices = [Fraction(p) for p in prices]
    if any(p < 1 for p in prices):
        raise ValueError("prices must be at least one")
    adj, alpha = [], []
    for i in range(n):
        best = None
        goods = []
        for j in range(n):
            if u[i][j] <= 0:
                continue
            # u_ij / p_j versus the running maximum, by cross-multiplication
            if best is None:
                best, goods = j, [j]
                continue
            lhs = u[i][j] * prices[best]
            rhs = u[i][best] * prices[j]
            if lhs > rhs:
                best, goods = j, [j]
            elif lhs == rhs:
                goods.append(j)
        if best is None:
            raise ValueError(f"buyer {i + 1} values no good")
        adj.append(tuple(goods))
        alpha.append(Fraction(u[i][best]) / prices[best])
    cap = prices if capacities is None else [Fraction(c) for c in capacities]
    return EqualityNetwork(n, tuple(cap), tuple(adj), tuple(alpha))


def build_network_fixed(price_exp, util_exp, capacities):
    """N(p, p_hat): edges from exponents (utilities and prices are powers of 1+1/L).

    ``util_exp[i][j]`` is None for a zero utility.
    """
    n = len(price_exp)
    adj, alpha = [], []
    for i in range(n):
        vals = [
            (util_exp[i][j] - price_exp[j]) if util_exp[i][j] is not None else None
            for j in range(n)
        ]
        best = max(v for v in vals if v is not None)
        adj.append(tuple(j for j in range(n) if vals[j] == best))
        alpha.append(best)
    return EqualityNetwork(n, tuple(Fraction(c) for c in capacities), tuple(adj), tuple(alpha))


class FlowState:
    """Flow on the buyer-good edges; arcs at s and t follow by conservation."""

    __slots__ = ("f",)

    def __init__(self, f):
        self.f = [list(row) for row in f]

    @classmethod
    def zero(cls, n):
        return cls([[ZERO] * n for _ in range(n)])

    def copy(self):
        return FlowState(self.f)

    @property
    def n(self):
        return len(self.f)

    def out_b(self, i):
        return sum(self.f[i], ZERO)

    def in_c(self, j):
        return sum((row[j] for row in self.f), ZERO)

    def value(self):
        return sum((sum(row, ZERO) for row in self.f), ZERO)

    def buyer_surplus(self, net):
        return [net.cap[i] - self.out_b(i) for i in range(self.n)]

    def good_surplus(self, net):
        return [net.cap[j] - self.in_c(j) for j in range(self.n)]

    def __eq__(self, other):
        return isinstance(other, FlowState) and self.f == other.f

    def __repr__(self):
        return f"FlowState({[[str(v) for v in row] for row in self.f]})"


def check_flow(net, flow):
    """Raise FlowError unless flow is feasible in net."""
    n = net.n
    for i in range(n):
        for j in range(n):
            v = flow.f[i][j]
            if v < 0:
                raise FlowError(f"negative flow {v} on (b{i + 1}, c{j + 1})")
            if v > 0 and not net.has_edge(i, j):
                raise FlowError(f"flow {v} on non-equality edge (b{i + 1}, c{j + 1})")
    for i, r in enumerate(flow.buyer_surplus(net)):
        if r < 0:
            raise FlowError(f"buyer {i + 1} spends {-r} more than its budget")
    for j, r in enumerate(flow.good_surplus(net)):
        if r < 0:
            raise FlowError(f"good {j + 1} receives {-r} more than its capacity")


def residual_search(net, flow, starts, buyers=None, goods=None):
    """BFS over buyer/good nodes of the residual graph, ascending index order.

    Forward arcs b -> c exist for every equality edge, backward arcs c -> b
    wherever the edge carries flow.  ``buyers``/``goods`` restrict the search
    to a node subset.  Returns parent maps (buyer -> good it was reached
    from, or None for a start; good -> buyer).
    """
    bpar = {}
    cpar = {}
    queue = deque()
    for b in sorted(starts):
        if b not in bpar:
            bpar[b] = None
            queue.append(b)
    gadj = None
    while queue:
        b = queue.popleft()
        for c in net.buyer_adj[b]:
            if c in cpar or (goods is not None and c not in goods):
                continue
            cpar[c] = b
            if gadj is None:
                gadj = net.good_adj
            for b2 in gadj[c]:
                if b2 in bpar or (buyers is not None and b2 not in buyers):
                    continue
                if flow.f[b2][c] > 0:
                    bpar[b2] = c
                    queue.append(b2)
    return bpar, cpar


def path_to_good(bpar, cpar, c):
    """Alternating node list [b0, c0, b1, c1, ..., c] ending at good c."""
    path = [c]
    b = cpar[c]
    while True:
        path.append(b)
        prev = bpar[b]
        if prev is None:
            break
        path.append(prev)
        b = cpar[prev]
    path.reverse()
    return path


def path_to_buyer(bpar, cpar, b):
    path = [b]
    c = bpar[b]
    while c is not None:
        path.append(c)
        b = cpar[c]
        path.append(b)
        c = bpar[b]
    path.reverse()
    return path


def push_path(flow, path, amount):
    """Push along alternating [b, c, b, c, ...]: forward on b->c, cancel on c->b."""
    for k in range(0, len(path) - 1):
        if k % 2 == 0:
            flow.f[path[k]][path[k + 1]] += amount
        else:
            flow.f[path[k + 1]][path[k]] -= amount


def path_capacity(flow, path):
    """Smallest backward-arc capacity along the path (None if no backward arcs)."""
    best = None
    for k in range(1, len(path) - 1, 2):
        v = flow.f[path[k + 1]][path[k]]
        if best is None or v < best:
            best = v
    return best


def max_flow(net, warm_start=None):
    """Maximum flow by shortest augmenting paths, started from ``warm_start``.

    Augmenting only ever adds flow into t, so goods saturated in the warm
    start stay saturated.
    """
    flow = FlowState.zero(net.n) if warm_start is None else warm_start.copy()
    check_flow(net, flow)
    while True:
        rb = flow.buyer_surplus(net)
        rc = flow.good_surplus(net)
        starts = [i for i in range(net.n) if rb[i] > 0]
        if not starts:
            return flow
        bpar, cpar = residual_search(net, flow, starts)
        target = next((c for c in sorted(cpar) if rc[c] > 0), None)
        if target is None:
            return flow
        path = path_to_good(bpar, cpar, target)
        amount = min(rb[path[0]], rc[target])
        back = path_capacity(flow, path)
        if back is not None:
            amount = min(amount, back)
        push_path(flow, path, amount)


def residual_reachable(net, flow):
    """Buyers and goods reachable from s in the residual graph of a maximum flow.

    Returns (S_buyers, S_goods); everything else is on the sink side.
    """
    rb = flow.buyer_surplus(net)
    bpar, cpar = residual_search(net, flow, [i for i in range(net.n) if rb[i] > 0])
    rc = flow.good_surplus(net)
    if any(rc[c] > 0 for c in cpar):
        raise FlowError("flow is not maximum: t is reachable from s")
    return frozenset(bpar), frozenset(cpar)


def cut_capacity(net, s_buyers, s_goods):
    """Capacity of the cut (s + S, T + t); None when an equality edge crosses it."""
    for i in s_buyers:
        if any(j not in s_goods for j in net.buyer_adj[i]):
            return None
    return sum((net.cap[i] for i in range(net.n) if i not in s_buyers), ZERO) + sum(
        (net.cap[j] for j in s_goods), ZERO
    )


def surplus_totals(net, flow):
    rb = flow.buyer_surplus(net)
    return sum(rb, ZERO), sum(r * r for r in rb)
