"""From a price vector with tiny surplus to exact integer equilibrium prices.

The loop leaves prices that are within a tiny perturbation of an
equilibrium.  Its equality graph pins the equilibrium down: spanning-tree
ratio equations inside each connected piece, money balance per piece, and
one price normalised to one.  The resulting integer system is solved by
fraction-free elimination, and the answer is checked by a max-flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx

from .errors import ExtractionError, SingularMatrixError, VerificationFailed
from .flow import build_network, max_flow


@dataclass(frozen=True)
class Piece:
    buyers: frozenset
    goods: frozenset

    @property
    def key(self):
        return min([("c", j) for j in self.goods] + [("d", i) for i in self.buyers])


@dataclass(frozen=True)
class ComponentStructure:
    """One connected component of the equality graph plus the (b_i, c_i) pairs."""

    buyers: frozenset
    goods: frozenset
    pieces: tuple  # components of the equality graph alone, inside this one
    has_surplus: bool
    surplus_good: int | None


@dataclass
class ExtractionSystem:
    goods: tuple  # global good index of each column
    A: list  # square integer matrix
    rhs: list  # unit vector at the normalisation row
    rows: list = field(default_factory=list)  # human-readable row labels


@dataclass
class ExtractionResult:
    q: tuple  # integers; q[j] / D is the price of good j
    D: int
    prices: list  # loop prices after joining (fixed mode: certified approximations)
    structures: list
    systems: list
    dets: list
    joins: int
    anchors: frozenset
    edges_preserved: bool


def _pieces(n, edge_iter, nodes_b, nodes_c):
    g = nx.Graph()
    g.add_nodes_from(("b", i) for i in nodes_b)
    g.add_nodes_from(("c", j) for j in nodes_c)
    g.add_edges_from((("b", i), ("c", j)) for i, j in edge_iter)
    out = []
    for comp in nx.connected_components(g):
        out.append(Piece(
            frozenset(v for t, v in comp if t == "b"),
            frozenset(v for t, v in comp if t == "c"),
        ))
    out.sort(key=lambda p: p.key)
    return out


def f_components(net, buyers=None, goods=None):
    buyers = range(net.n) if buyers is None else buyers
    goods = range(net.n) if goods is None else goods
    gs = set(goods)
    edges = [(i, j) for i in buyers for j in net.buyer_adj[i] if j in gs]
    return _pieces(net.n, edges, buyers, goods)


def f_prime_components(net):
    edges = list(net.edges) + [(i, i) for i in range(net.n)]
    return _pieces(net.n, edges, range(net.n), range(net.n))


def component_structures(net, anchors):
    out = []
    for comp in f_prime_components(net):
        mine = sorted(comp.goods & anchors)
        out.append(ComponentStructure(
            comp.buyers,
            comp.goods,
            tuple(f_components(net, comp.buyers, comp.goods)),
            bool(mine),
            mine[0] if mine else None,
        ))
    return out


def join_components(engine, net, anchors):
    """Scale anchor-free components up until each one is glued to an anchored one.

    Returns (network, number of joins).  Each join merges two components.
    """
    joins = 0
    while True:
        free = [c for c in f_prime_components(net) if not (c.goods & anchors)]
        if not free:
            return net, joins
        if joins >= net.n:
            raise ExtractionError("component joining does not terminate")
        comp = free[0]
        factor, edge = engine.join_factor(comp.buyers, comp.goods, net)
        if factor is None:
            raise ExtractionError(
                f"component with goods {sorted(j + 1 for j in comp.goods)} has no outside good "
                "of positive utility"
            )
        engine.scale_goods(comp.goods, factor)
        net = engine.network()
        if not net.has_edge(*edge):
            raise ExtractionError(f"joining factor {factor} did not create edge {edge}")
        joins += 1


def build_system(structure, net, u):
    """Integer system for the prices of one component (columns: its goods, ascending)."""
    goods = tuple(sorted(structure.goods))
    col = {j: c for c, j in enumerate(goods)}
    m = len(goods)
    A, rows = [], []
    for piece in structure.pieces:
        if not piece.goods:
            raise ExtractionError("equality piece without goods")
        # breadth-first spanning tree from the lowest good, ascending order
        start = min(piece.goods)
        seen_c, seen_b = {start}, set()
        frontier = [start]
        while frontier:
            nxt = []
            for j in frontier:
                for i in sorted(b for b in net.good_adj[j] if b in piece.buyers):
                    if i in seen_b:
                        continue
                    seen_b.add(i)
                    for j2 in net.buyer_adj[i]:
                        if j2 in seen_c or j2 not in piece.goods:
                            continue
                        seen_c.add(j2)
                        nxt.append(j2)
                        # u_ij2 p_j - u_ij p_j2 = 0: buyer i is indifferent
                        row = [0] * m
                        row[col[j]] += u[i][j2]
                        row[col[j2]] -= u[i][j]
                        A.append(row)
                        rows.append(f"tie b{i + 1}: c{j + 1} ~ c{j2 + 1}")
            frontier = sorted(nxt)
    for piece in structure.pieces:
        if structure.surplus_good in piece.goods:
            continue
        row = [0] * m
        for i in piece.buyers:
            row[col[i]] += 1
        for j in piece.goods:
            row[col[j]] -= 1
        A.append(row)
        rows.append(f"balance piece {min(piece.goods) + 1}")
    norm = [0] * m
    norm[col[structure.surplus_good]] = 1
    A.append(norm)
    rows.append(f"normalise c{structure.surplus_good + 1}")
    if len(A) != m:
        raise ExtractionError(f"system has {len(A)} rows for {m} unknowns")
    rhs = [0] * (m - 1) + [1]
    return ExtractionSystem(goods, A, rhs, rows)


def solve_system(system):
    """Integer solution (q, D) of A (q / D) = rhs with D = |det A|, by Bareiss elimination."""
    A, b = system.A, system.rhs
    m = len(A)
    M = [list(map(int, row)) + [int(v)] for row, v in zip(A, b)]
    prev = 1
    for k in range(m):
        piv = next((r for r in range(k, m) if M[r][k] != 0), None)
        if piv is None:
            raise SingularMatrixError("extraction matrix is singular")
        if piv != k:
            M[k], M[piv] = M[piv], M[k]
        for r in range(k + 1, m):
            for c in range(k + 1, m + 1):
                M[r][c] = (M[r][c] * M[k][k] - M[r][k] * M[k][c]) // prev
            M[r][k] = 0
        prev = M[k][k]
    det = M[m - 1][m - 1]
    q = [0] * m
    for i in range(m - 1, -1, -1):
        acc = det * M[i][m] - sum(M[i][j] * q[j] for j in range(i + 1, m))
        quot, rem = divmod(acc, M[i][i])
        if rem:
            raise ArithmeticError("inexact division in back substitution")
        q[i] = quot
    if det < 0:
        det, q = -det, [-v for v in q]
    for row, v in zip(A, b):
        if sum(a * x for a, x in zip(row, q)) != det * v:
            raise ArithmeticError("back substitution does not satisfy the system")
    return q, det


def mincut_ok(u, q):
    """Both trivial cuts of N_q are minimum: max-flow value equals the sum of q."""
    net = build_network(q, u)
    return max_flow(net).value() == sum(q)


def extract(loop_result, market):
    """Exact integer prices from the final state of the main loop."""
    engine = loop_result.engine
    net, flow = loop_result.net, loop_result.flow
    u = market.u
    n = market.n
    r_c = flow.good_surplus(net)
    anchors = frozenset(j for j in range(n) if r_c[j] > 0)

    if not anchors and engine.mode == "exact":
        # already an equilibrium: clear denominators
        prices = engine.true_prices()
        D = math.lcm(*(p.denominator for p in prices))
        q = tuple(int(p * D) for p in prices)
        return _finish(u, q, D, prices, [], [], [], 0, anchors, net)
    if not anchors:
        # exact clearing with rounded capacities; pin the cheapest goods instead
        low = min(engine.price_state())
        anchors = frozenset(j for j, k in enumerate(engine.price_state()) if k == low)

    net, joins = join_components(engine, net, anchors)
    structures = component_structures(net, anchors)
    q = [0] * n
    systems, dets, sols = [], [], []
    for st in structures:
        system = build_system(st, net, u)
        try:
            sol, det = solve_system(system)
        except SingularMatrixError as exc:
            raise ExtractionError(f"rank-deficient system: {exc}") from exc
        systems.append(system)
        dets.append(det)
        sols.append(sol)
    D = math.lcm(*dets)
    for system, det, sol in zip(systems, dets, sols):
        for j, v in zip(system.goods, sol):
            q[j] = v * (D // det)
    if any(v <= 0 for v in q):
        raise ExtractionError(f"extracted prices are not positive: {q}")
    return _finish(u, tuple(q), D, engine.true_prices(), structures, systems, dets, joins,
                   anchors, net)


def _finish(u, q, D, prices, structures, systems, dets, joins, anchors, net):
    if not mincut_ok(u, list(q)):
        raise VerificationFailed(f"min-cut test fails for q={list(q)}")
    preserved = net.edges <= build_network(list(q), u).edges
    return ExtractionResult(q, D, prices, structures, systems, dets, joins, anchors, preserved)


__all__ = [
    "ComponentStructure",
    "ExtractionResult",
    "ExtractionSystem",
    "build_system",
    "component_structures",
    "extract",
    "f_components",
    "f_prime_components",
    "join_components",
    "mincut_ok",
    "solve_system",
]
