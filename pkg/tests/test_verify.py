import random
from fractions import Fraction

import pytest

from adsolver import Market, SolverConfig, check_equilibrium, oracle_equilibria, oracle_solve, solve
from adsolver.verify import best_goods
from support import random_irreducible


def proportional(p, q):
    return all(a * q[0] == b * p[0] for a, b in zip(p, q))


def test_single_agent():
    assert check_equilibrium(Market([[1]]), [1]).ok


def test_swap_market():
    m = Market([[0, 1], [1, 0]])
    assert check_equilibrium(m, [1, 1]).ok
    rep = check_equilibrium(m, [1, 2])
    assert not rep.ok
    assert not rep.goods_cleared and not rep.budgets_spent
    d = rep.as_dict()
    assert d["equilibrium"] is False and d["violations"]["unsold_goods"]


def test_reducible_pair():
    m = Market([[1, 1], [0, 1]])
    rep = check_equilibrium(m, [1, 2])
    assert rep.ok
    assert rep.flow_value == rep.total_money == 3
    # every good is fully allocated
    for j in range(2):
        assert sum(row[j] for row in rep.allocation) == 1


def test_rejects_bad_prices():
    with pytest.raises(ValueError):
        check_equilibrium(Market([[1]]), [0])
    with pytest.raises(ValueError):
        check_equilibrium(Market([[1]]), [1, 1])


def test_best_goods_ties():
    assert best_goods([[2, 1, 0]], [2, 1, 5], 0) == [0, 1]
    assert best_goods([[2, 1, 0]], [1, 1, 1], 0) == [0]


def test_wrong_ratio_rejected():
    # at (1, 2) each buyer wants the other's good: good 1 receives 2, good 2 receives 1
    m = Market([[1, 3], [1, 1]])
    assert check_equilibrium(m, [1, 1]).ok
    rep = check_equilibrium(m, [1, 2])
    assert not rep.ok and rep.flow_value < rep.total_money


def test_oracle_examples():
    assert oracle_solve(Market([[1]])) == [1]
    assert oracle_solve(Market([[1, 2], [1, 1]])) == [1, 1]
    assert oracle_equilibria(Market([[2, 1], [1, 1]])) == [(1, 1), (2, 1)]


def test_oracle_rejects_large():
    with pytest.raises(ValueError):
        oracle_solve(Market([[1] * 4] * 4))


def test_oracle_vertices_are_equilibria():
    rng = random.Random(8)
    for _ in range(40):
        m = random_irreducible(rng, rng.randint(2, 3), 4)
        eqs = oracle_equilibria(m)
        assert eqs
        for q in eqs:
            assert check_equilibrium(m, list(q)).ok


def test_solver_agrees_with_oracle():
    rng = random.Random(9)
    for _ in range(40):
        m = random_irreducible(rng, rng.randint(2, 3), 4)
        q = solve(m, SolverConfig()).prices
        eqs = oracle_equilibria(m)
        if len(eqs) == 1:
            assert proportional(q, eqs[0])
        assert check_equilibrium(m, q).ok


def test_allocation_matches_prices():
    m = Market([[3, 1, 0], [0, 2, 5], [4, 0, 1]])
    q = solve(m).prices
    rep = check_equilibrium(m, q)
    for i in range(3):
        assert sum(rep.allocation[i][j] * q[j] for j in range(3)) == q[i]
    assert all(isinstance(x, Fraction) for row in rep.allocation for x in row)
