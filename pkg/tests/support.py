"""Shared helpers for the test-suite: instance generators, an exact l2 oracle
for surplus vectors, and an observer that checks per-iteration invariants."""
from __future__ import annotations

from fractions import Fraction
from itertools import combinations

from adsolver.balanced_flow import crossing_pairs
from adsolver.errors import FlowError
from adsolver.flow import residual_reachable
from adsolver.market import Market, validate
from adsolver.numerics import E_UPPER, approx_power


def random_irreducible(rng, n, umax, density=0.6):
    while True:
        u = [[rng.randint(1, umax) if rng.random() < density else 0 for _ in range(n)]
             for _ in range(n)]
        m = Market(u)
        rep = validate(m)
        if rep.ok:
            return m


def random_dag_market(rng, n, umax, self_loop_ok=True):
    """Market whose liking graph is a DAG of strongly connected blocks.

    With ``self_loop_ok`` every singleton block likes its own good; otherwise
    one singleton is forced not to.  Such a market needs n >= 3: the singleton
    must like a later good and its own good must be liked by an earlier block.
    """
    if not self_loop_ok and n < 3:
        raise ValueError("no valid market violates the self-loop condition for n < 3")
    while True:
        sizes = []
        left = n
        while left:
            s = rng.randint(1, min(3, left))
            sizes.append(s)
            left -= s
        perm = list(range(n))
        rng.shuffle(perm)
        blocks, pos = [], 0
        for s in sizes:
            blocks.append(perm[pos:pos + s])
            pos += s
        u = [[0] * n for _ in range(n)]
        for b in blocks:
            sub = random_irreducible(rng, len(b), umax).u
            for a, i in enumerate(b):
                for c, j in enumerate(b):
                    u[i][j] = sub[a][c]
        # forward edges between blocks (earlier block buyers like later goods)
        for x in range(len(blocks)):
            for y in range(x + 1, len(blocks)):
                for i in blocks[x]:
                    for j in blocks[y]:
                        if rng.random() < 0.3:
                            u[i][j] = rng.randint(1, umax)
        if not self_loop_ok:
            singles = [b[0] for b in blocks if len(b) == 1]
            if not singles:
                continue
            i = rng.choice(singles)
            u[i][i] = 0
        m = Market(u)
        rep = validate(m)
        if not (rep.likes_some_good and rep.every_good_liked):
            continue
        return m


# ---------------------------------------------------------------- l2 oracle


def _max_flow_value(net):
    """Minimum cut over buyer sets X: cap(B - X) + cap(Gamma(X))."""
    n = net.n
    best = None
    for size in range(n + 1):
        for X in combinations(range(n), size):
            goods = set().union(*(net.buyer_adj[i] for i in X)) if X else set()
            val = sum((net.cap[i] for i in range(n) if i not in X), Fraction(0))
            val += sum((net.cap[j] for j in goods), Fraction(0))
            if best is None or val < best:
                best = val
    return best


def _min_norm_point(rows, rhs, n):
    """Minimum-norm solution of rows . r = rhs, or None when inconsistent."""
    M = [[Fraction(v) for v in r] + [Fraction(b)] for r, b in zip(rows, rhs)]
    basis = []
    for r in M:
        r = list(r)
        for br, piv in basis:
            if r[piv]:
                f = r[piv] / br[piv]
                r = [a - f * b for a, b in zip(r, br)]
        piv = next((k for k in range(n) if r[k] != 0), None)
        if piv is None:
            if r[n] != 0:
                return None
            continue
        basis.append((r, piv))
    if not basis:
        return [Fraction(0)] * n
    A = [br[:n] for br, _ in basis]
    b = [br[n] for br, _ in basis]
    m = len(A)
    G = [[sum(x * y for x, y in zip(A[i], A[j])) for j in range(m)] + [b[i]] for i in range(m)]
    for c in range(m):
        piv = next(r for r in range(c, m) if G[r][c] != 0)
        G[c], G[piv] = G[piv], G[c]
        for r in range(m):
            if r != c and G[r][c]:
                f = G[r][c] / G[c][c]
                G[r] = [a - f * bb for a, bb in zip(G[r], G[c])]
    y = [G[i][m] / G[i][i] for i in range(m)]
    return [sum(A[i][k] * y[i] for i in range(m)) for k in range(n)]


def l2_oracle(net):
    """Smallest sum of squared buyer surpluses over all maximum flows of ``net``.

    Feasible surplus vectors r: 0 <= r <= cap, sum r = sum cap - F, and for
    every buyer set X the spending on X fits into Gamma(X).  The optimum is
    the minimum-norm point of the affine hull of some face, so enumerating
    small active sets and keeping feasible candidates finds it exactly.
    """
    n = net.n
    cap = list(net.cap)
    F = _max_flow_value(net)
    total = sum(cap, Fraction(0)) - F
    cons = []  # (row, bound) meaning row . r >= bound
    for i in range(n):
        e = [0] * n
        e[i] = 1
        cons.append((e, Fraction(0)))
        cons.append(([-v for v in e], -cap[i]))
    for size in range(1, n + 1):
        for X in combinations(range(n), size):
            goods = set().union(*(net.buyer_adj[i] for i in X))
            # sum_X (cap_i - r_i) <= cap(Gamma(X))  <=>  sum_X r_i >= cap(X) - cap(Gamma(X))
            row = [1 if i in X else 0 for i in range(n)]
            cons.append((row, sum((cap[i] for i in X), Fraction(0)) - sum((cap[j] for j in goods), Fraction(0))))
    best = None
    # with the sum row, n - 1 further independent rows already pin a vertex
    for size in range(0, n):
        for act in combinations(cons, size):
            rows = [[1] * n] + [r for r, _ in act]
            rhs = [total] + [b for _, b in act]
            r = _min_norm_point(rows, rhs, n)
            if r is None:
                continue
            if all(sum(a * x for a, x in zip(row, r)) >= b for row, b in cons):
                val = sum(x * x for x in r)
                if best is None or val < best:
                    best = val
    return best


# ---------------------------------------------------------------- invariants


class InvariantMonitor:
    """Observer for the solver loop that records invariant violations.

    ``potential_R`` enables the exact-mode potential checks with that R.
    ``l2_oracle_max_n`` compares balanced flows against :func:`l2_oracle`.
    """

    def __init__(self, potential_R=None, l2_oracle_max_n=0):
        self.potential_R = potential_R
        self.l2_oracle_max_n = l2_oracle_max_n
        self.violations = []
        self.by_group = {}  # "flow", "structure" or "potential"
        self.iterations = 0
        self.counts = {"crossing": 0, "l2_oracle": 0, "potential": 0}

    def fail(self, snap, what, group="structure"):
        self.violations.append((snap.record.attempt, snap.iteration, what))
        self.by_group.setdefault(group, []).append(self.violations[-1])

    def __call__(self, snap):
        self.iterations += 1
        n, U = snap.market.n, snap.market.U
        net, f = snap.net_after, snap.flow_after

        # balanced flow: maximum and no crossing residual paths
        try:
            residual_reachable(net, f)
        except FlowError:
            self.fail(snap, "flow not maximum", "flow")
        if crossing_pairs(net, f):
            self.fail(snap, f"crossing pairs {crossing_pairs(net, f)}", "flow")
        self.counts["crossing"] += 1
        if n <= self.l2_oracle_max_n:
            if snap.record.l2_sq_after != l2_oracle(net):
                self.fail(snap, "l2 differs from oracle", "flow")
            self.counts["l2_oracle"] += 1

        # prices never decrease
        if any(a < b for a, b in zip(snap.prices_after, snap.prices_before)):
            self.fail(snap, "price decreased")

        # price bound (nU)^(n-1); fixed mode certifies via b + 1/(4L)
        bound = (n * U) ** (n - 1)
        if snap.mode == "exact":
            if max(snap.prices_after) > bound:
                self.fail(snap, "price bound")
        else:
            L = snap.constants.L
            for k in snap.prices_after:
                if k and approx_power(k, L) + Fraction(1, 4 * L) > bound:
                    self.fail(snap, f"price bound exponent {k}")

        # zero-surplus goods stay at zero, goods with surplus keep price one
        rc_before = snap.flow_before.good_surplus(snap.net_before)
        rc_after = f.good_surplus(net)
        for j in range(n):
            if rc_before[j] == 0 and rc_after[j] != 0:
                self.fail(snap, f"good {j + 1} regained surplus")
            if rc_after[j] > 0:
                one = Fraction(1) if snap.mode == "exact" else 0
                if snap.prices_after[j] != one:
                    self.fail(snap, f"good {j + 1} has surplus but price {snap.prices_after[j]}")

        # the threshold buyer holds a fair share of the surplus
        if snap.active.S < snap.record.l1_before / (E_UPPER * n):
            self.fail(snap, "r(b_l) below |r|/(e n)")

        if self.potential_R is not None and snap.mode == "exact":
            self.counts["potential"] += 1
            rec = snap.record
            if rec.kind == "BALANCING":
                fac = (1 - Fraction(1, self.potential_R * n**3)) ** 2
                if rec.l2_sq_after > rec.l2_sq_before * fac:
                    self.fail(snap, "balancing potential", "potential")
            else:
                if rec.l2_sq_after > rec.l2_sq_before * snap.constants.x_max**2:
                    self.fail(snap, "x_max potential", "potential")
