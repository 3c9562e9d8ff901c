"""Solver-independent equilibrium checks and a brute-force oracle for n <= 3.

Nothing here uses the solver's own flow code: the check runs networkx's
max-flow on integer capacities, and the oracle tests candidate prices with
Hall's condition by subset enumeration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product

import networkx as nx
from networkx.algorithms.flow import edmonds_karp

from .errors import SolverError


@dataclass
class EquilibriumReport:
    goods_cleared: bool
    budgets_spent: bool
    bang_per_buck_optimal: bool
    unsold_goods: list = field(default_factory=list)  # (good, unsold money)
    unspent_buyers: list = field(default_factory=list)  # (buyer, leftover money)
    suboptimal_purchases: list = field(default_factory=list)  # (buyer, good)
    flow_value: int = 0
    total_money: int = 0
    allocation: list | None = None  # x[i][j]: fraction of good j bought by agent i

    @property
    def ok(self):
        return self.goods_cleared and self.budgets_spent and self.bang_per_buck_optimal

    def as_dict(self):
        return {
            "equilibrium": self.ok,
            "goods_cleared": self.goods_cleared,
            "budgets_spent": self.budgets_spent,
            "bang_per_buck_optimal": self.bang_per_buck_optimal,
            "flow_value": str(self.flow_value),
            "total_money": str(self.total_money),
            "violations": {
                "unsold_goods": [[j + 1, str(v)] for j, v in self.unsold_goods],
                "unspent_buyers": [[i + 1, str(v)] for i, v in self.unspent_buyers],
                "suboptimal_purchases": [[i + 1, j + 1] for i, j in self.suboptimal_purchases],
            },
        }


def best_goods(u, prices, i):
    """Goods maximising u_ij / p_j for buyer i, by cross-multiplication."""
    best = []
    for j, v in enumerate(u[i]):
        if v <= 0:
            continue
        if not best:
            best = [j]
            continue
        k = best[0]
        lhs, rhs = v * prices[k], u[i][k] * prices[j]
        if lhs > rhs:
            best = [j]
        elif lhs == rhs:
            best.append(j)
    return best


def check_equilibrium(market, q):
    """Exact equilibrium test for positive integer prices q."""
    u, n = market.u, market.n
    q = [int(v) for v in q]
    if len(q) != n or any(v < 1 for v in q):
        raise ValueError("prices must be n positive integers")
    g = nx.DiGraph()
    g.add_nodes_from(["s", "t"])
    for i in range(n):
        g.add_edge("s", ("b", i), capacity=q[i])
        g.add_edge(("c", i), "t", capacity=q[i])
        for j in best_goods(u, q, i):
            g.add_edge(("b", i), ("c", j))  # no capacity attribute: unbounded
    value, fd = nx.maximum_flow(g, "s", "t", flow_func=edmonds_karp)
    total = sum(q)
    spent = [sum(fd[("b", i)].values()) for i in range(n)]
    sold = [fd[("c", j)]["t"] for j in range(n)]
    unspent = [(i, q[i] - spent[i]) for i in range(n) if spent[i] != q[i]]
    unsold = [(j, q[j] - sold[j]) for j in range(n) if sold[j] != q[j]]

    bad = []
    for i in range(n):
        for (_, j), f in fd[("b", i)].items():
            if f <= 0:
                continue
            # u_ij q_k >= u_ik q_j for all k
            if any(u[i][k] * q[j] > u[i][j] * q[k] for k in range(n)):
                bad.append((i, j))
    report = EquilibriumReport(
        goods_cleared=not unsold,
        budgets_spent=not unspent,
        bang_per_buck_optimal=not bad,
        unsold_goods=unsold,
        unspent_buyers=unspent,
        suboptimal_purchases=bad,
        flow_value=value,
        total_money=total,
    )
    if report.ok:
        report.allocation = [
            [Fraction(fd[("b", i)].get(("c", j), 0), q[j]) for j in range(n)] for i in range(n)
        ]
    return report


# ---------------------------------------------------------------- oracle


def _is_equilibrium(u, p):
    """Equality graph plus Hall's condition on every buyer subset."""
    n = len(p)
    adj = [set(best_goods(u, p, i)) for i in range(n)]
    for size in range(1, n + 1):
        for X in combinations(range(n), size):
            nbrs = set().union(*(adj[i] for i in X))
            if sum(p[i] for i in X) > sum(p[j] for j in nbrs):
                return False
    return True


def _normalise(vec):
    g = math.gcd(*vec)
    if g == 0:
        return None
    vec = tuple(v // g for v in vec)
    first = next(v for v in vec if v)
    return vec if first > 0 else tuple(-v for v in vec)


def _hyperplanes(u):
    n = len(u)
    planes = set()
    for i in range(n):
        for j, k in combinations(range(n), 2):
            if u[i][j] > 0 and u[i][k] > 0:
                vec = [0] * n
                vec[k] += u[i][j]
                vec[j] -= u[i][k]
                h = _normalise(vec)
                if h:
                    planes.add(h)
    for vec in product((-1, 0, 1), repeat=n):
        h = _normalise(list(vec))
        if h:
            planes.add(h)
    return sorted(planes)


def _solve_fixed_first(rows, n):
    """Solve rows . p = 0 together with p_0 = 1; None unless the solution is unique."""
    M = [[Fraction(v) for v in r] + [Fraction(0)] for r in rows]
    M.append([Fraction(1)] + [Fraction(0)] * (n - 1) + [Fraction(1)])
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return None
        M[c], M[piv] = M[piv], M[c]
        for r in range(n):
            if r != c and M[r][c] != 0:
                fac = M[r][c] / M[c][c]
                M[r] = [a - fac * b for a, b in zip(M[r], M[c])]
    return [M[i][n] / M[i][i] for i in range(n)]


def _as_integers(p):
    d = math.lcm(*(v.denominator for v in p))
    ints = [int(v * d) for v in p]
    g = math.gcd(*ints)
    return tuple(v // g for v in ints)


def oracle_equilibria(market):
    """All distinct vertex equilibria of a market with at most three agents.

    Equilibrium prices are a vertex of the arrangement formed by the price
    ratio hyperplanes u_ij p_k = u_ik p_j and the money-balance hyperplanes
    with coefficients in {-1, 0, 1}.  Every vertex is tested directly.
    Returns primitive integer vectors in sorted order.
    """
    u, n = market.u, market.n
    if n > 3:
        raise ValueError("the oracle only handles n <= 3")
    if n == 1:
        return [(1,)] if u[0][0] > 0 else []
    found = set()
    for rows in combinations(_hyperplanes(u), n - 1):
        p = _solve_fixed_first(rows, n)
        if p is None or any(v <= 0 for v in p):
            continue
        if _is_equilibrium(u, p):
            found.add(_as_integers(p))
    return sorted(found)


def oracle_solve(market):
    """Integer equilibrium prices for n <= 3; the smallest vertex if several exist."""
    eqs = oracle_equilibria(market)
    if not eqs:
        raise SolverError("oracle found no equilibrium")
    return list(eqs[0])


__all__ = [
    "EquilibriumReport",
    "best_goods",
    "check_equilibrium",
    "oracle_equilibria",
    "oracle_solve",
]
