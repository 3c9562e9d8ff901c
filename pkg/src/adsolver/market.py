"""Linear exchange market instances, their validation and SCC decomposition.

Agents are 0-based here; I/O layers add one when printing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from numbers import Integral

import networkx as nx

from .errors import NoEquilibriumError, ValidationError


@dataclass(frozen=True)
class Market:
    """Utility matrix ``u[i][j]``: value of good j to agent i (agent i owns good i)."""

    u: tuple[tuple[int, ...], ...]

    def __init__(self, u):
        rows = tuple(tuple(row) for row in u)
        n = len(rows)
        if n == 0:
            raise ValidationError("market needs at least one agent")
        for i, row in enumerate(rows):
            if len(row) != n:
                raise ValidationError(f"row {i + 1} has {len(row)} entries, expected {n}")
            for j, v in enumerate(row):
                if isinstance(v, bool) or not isinstance(v, Integral):
                    raise ValidationError(f"u[{i + 1}][{j + 1}] = {v!r} is not an integer")
                if v < 0:
                    raise ValidationError(f"u[{i + 1}][{j + 1}] = {v} is negative")
        object.__setattr__(self, "u", tuple(tuple(int(v) for v in row) for row in rows))

    @property
    def n(self):
        return len(self.u)

    @property
    def U(self):
        return max(1, max(max(row) for row in self.u))

    def liking_graph(self):
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(
            (i, j) for i in range(self.n) for j in range(self.n) if self.u[i][j] > 0 and i != j
        )
        return g

    def restrict(self, agents):
        """Sub-market on the given agents, in the given order."""
        agents = list(agents)
        return Market([[self.u[i][j] for j in agents] for i in agents])

    def tolist(self):
        return [list(row) for row in self.u]


@dataclass
class ValidationReport:
    likes_some_good: bool  # assumption 4
    every_good_liked: bool  # assumption 5
    irreducible: bool  # assumption 6
    integral_bounded: bool  # assumption 7
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self):
        return self.likes_some_good and self.every_good_liked and self.irreducible

    def as_dict(self):
        return {
            "assumption_4": self.likes_some_good,
            "assumption_5": self.every_good_liked,
            "assumption_6": self.irreducible,
            "assumption_7": self.integral_bounded,
            "problems": list(self.problems),
        }


def validate(market):
    n, u = market.n, market.u
    problems = []
    rows_ok = True
    for i in range(n):
        if not any(u[i]):
            rows_ok = False
            problems.append(f"agent {i + 1} likes no good")
    cols_ok = True
    for j in range(n):
        if not any(u[i][j] for i in range(n)):
            cols_ok = False
            problems.append(f"good {j + 1} is liked by nobody")
    irreducible = nx.is_strongly_connected(market.liking_graph())
    if not irreducible:
        problems.append("liking graph is not strongly connected")
    return ValidationReport(rows_ok, cols_ok, irreducible, True, problems)


@dataclass(frozen=True)
class SccDecomposition:
    components: tuple[tuple[int, ...], ...]

    @property
    def is_irreducible(self):
        return len(self.components) == 1


def scc_decompose(market):
    """Strongly connected components of the liking graph in topological order.

    Liking edges only point from earlier to later components.  Incomparable
    components are ordered by their smallest agent.  A singleton component
    whose agent does not like its own good has no equilibrium.
    """
    g = market.liking_graph()
    comps = [tuple(sorted(c)) for c in nx.strongly_connected_components(g)]
    dag = nx.condensation(g, scc=[set(c) for c in comps])
    order = nx.lexicographical_topological_sort(dag, key=lambda v: min(dag.nodes[v]["members"]))
    ordered = tuple(tuple(sorted(dag.nodes[v]["members"])) for v in order)
    for comp in ordered:
        if len(comp) == 1 and market.u[comp[0]][comp[0]] == 0:
            raise NoEquilibriumError(comp[0])
    return SccDecomposition(ordered)


def compose_equilibria(decomposition, sub_prices, U):
    """Glue per-component integer equilibria into a global one.

    Component i is scaled by (U + 1) times the largest (already scaled) price
    of component i - 1, so buyers in earlier components strictly prefer their
    own goods over anything later in the order.
    """
    comps = decomposition.components
    if len(sub_prices) != len(comps):
        raise ValueError("need one price vector per component")
    n = sum(len(c) for c in comps)
    prices = [0] * n
    factor = 1
    prev_max = None
    for comp, sub in zip(comps, sub_prices):
        if len(sub) != len(comp):
            raise ValueError("component/price length mismatch")
        if prev_max is not None:
            factor = (U + 1) * prev_max
        scaled = [factor * q for q in sub]
        for agent, q in zip(comp, scaled):
            prices[agent] = q
        prev_max = max(scaled)
    return prices
