import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defiers.least_squares import (
    enumerate_subsets,
    ls_estimate,
    ls_estimate_free_p,
    objective_S,
    optimal_p_for_splits,
    randomization_error,
)
from defiers.model import CountMatrix, GroupedData, TypeVector
from oracles import all_count_matrices, ls_brute_minimum, ls_objectives


def matrix(entries):
    m = np.zeros((4, 4), dtype=int)
    for (i, j), v in entries.items():
        m[i - 1, j - 1] = v
    return CountMatrix(m)


def check_feasible(sol, g):
    cells = np.asarray(sol.n_hat.cells)
    assert (cells >= 0).all()
    assert tuple(cells.sum(axis=0)) == tuple(g)
    assert tuple(cells.sum(axis=1)) == tuple(sol.t_hat)
    assert sol.objective == pytest.approx(objective_S(sol.n_hat, sol.p_used), abs=1e-12)


def test_subsets():
    subs = enumerate_subsets()
    assert len(subs) == 15 == len(set(subs))
    assert subs[0] == (1,)
    assert subs[-1] == (1, 2, 3, 4)
    assert [len(s) for s in subs] == sorted(len(s) for s in subs)


class TestRandomizationError:
    def test_compliers_only(self):
        n = matrix({(3, 1): 3, (3, 4): 4, (4, 1): 2})
        assert randomization_error(n, {3}, 0.5) == pytest.approx(-0.5)

    def test_full_sample_vanishes_at_empirical_p(self):
        n = matrix({(1, 2): 2, (1, 4): 1, (2, 2): 3, (3, 1): 4, (4, 3): 5})
        p = 9 / 15
        assert randomization_error(n, (1, 2, 3, 4), p) == pytest.approx(0.0, abs=1e-12)

    def test_empty_rows(self):
        n = matrix({(1, 2): 4})
        assert randomization_error(n, (2, 3), 0.3) == 0.0


class TestObjective:
    def test_perfect_compliance_zero(self):
        assert objective_S(matrix({(3, 1): 5, (3, 4): 5}), 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_single_never_taker(self):
        assert objective_S(matrix({(1, 2): 1}), 0.5) == pytest.approx(8.0)

    def test_all_zero(self):
        assert objective_S(matrix({}), 0.4) == 0.0

    def test_rejects_bad_p(self):
        with pytest.raises(ValueError):
            objective_S(matrix({(1, 2): 1}), 1.0)

    def test_matches_oracle(self):
        g = (3, 2, 4, 1)
        N = all_count_matrices(g)
        ref = ls_objectives(N, 0.37)
        for m, r in zip(N[::7], ref[::7]):
            assert objective_S(CountMatrix(m), 0.37) == pytest.approx(r, rel=1e-12, abs=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 6), min_size=4, max_size=4))
    def test_full_sample_error_zero_for_every_matrix(self, g):
        g = GroupedData.of(g)
        if g.n == 0:
            return
        p = g.empirical_p
        for m in all_count_matrices(tuple(g)):
            assert abs(randomization_error(CountMatrix(m), (1, 2, 3, 4), p)) < 1e-12


class TestLsEstimate:
    def test_perfect_compliance(self):
        sol = ls_estimate(GroupedData(5, 0, 0, 5), 0.5)
        assert sol.t_hat == TypeVector(0, 0, 10, 0)
        assert sol.objective == pytest.approx(0.0, abs=1e-15)
        assert ls_brute_minimum((5, 0, 0, 5), 0.5) == (0.0, [(0, 0, 10, 0)])

    def test_all_ones(self):
        # Brute force: zero is attained by (0,2,2,0) and (2,0,0,2).
        sol = ls_estimate(GroupedData(1, 1, 1, 1), 0.5)
        assert sol.t_hat == TypeVector(0, 2, 2, 0)
        assert sol.objective == pytest.approx(0.0, abs=1e-15)
        assert TypeVector(2, 0, 0, 2) in {m.type_vector() for m in sol.ties}

    @pytest.mark.parametrize(
        "g,p", [((4, 3, 2, 5), 0.3), ((7, 1, 6, 2), 0.5), ((0, 5, 3, 9), 0.5), ((12, 10, 11, 12), 0.3)]
    )
    def test_matches_exhaustive_minimum(self, g, p):
        best, types = ls_brute_minimum(g, p)
        sol = ls_estimate(GroupedData(*g), p, seed=4)
        assert sol.objective <= best + 1e-12 * max(1.0, best)
        assert tuple(sol.t_hat) == types[0]
        check_feasible(sol, g)

    def test_feasible_and_deterministic(self):
        g = GroupedData(40, 55, 31, 70)
        a = ls_estimate(g, 0.48, seed=7, restarts=16)
        b = ls_estimate(g, 0.48, seed=7, restarts=16)
        check_feasible(a, g)
        assert a == b and a.diagnostics == b.diagnostics

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            ls_estimate(GroupedData(1, 1, 1, 1), 0.0)
        with pytest.raises(ValueError):
            ls_estimate(GroupedData(1, 1, 1, 1), 0.5, restarts=0)
        with pytest.raises(ValueError):
            ls_estimate(GroupedData(0, 0, 0, 0), 0.5)

    def test_single_restart(self):
        sol = ls_estimate(GroupedData(3, 3, 2, 4), 0.5, restarts=1)
        check_feasible(sol, (3, 3, 2, 4))


class TestFreeP:
    def test_perfect_compliance(self):
        sol = ls_estimate_free_p(GroupedData(5, 0, 0, 5))
        assert sol.t_hat == TypeVector(0, 0, 10, 0)
        assert sol.objective == pytest.approx(0.0, abs=1e-15)
        assert sol.p_used == 0.5

    def test_single_arm_rejected(self):
        with pytest.raises(ValueError):
            ls_estimate_free_p(GroupedData(3, 0, 0, 0))

    def test_never_worse_than_empirical(self):
        g = GroupedData(9, 4, 6, 11)
        free = ls_estimate_free_p(g, seed=1)
        fixed = ls_estimate(g, g.empirical_p, seed=1)
        assert free.objective <= fixed.objective + 1e-12
        check_feasible(free, g)

    def test_closed_form_p(self):
        g = GroupedData(6, 5, 4, 7)
        v = (2, 3, 1, 4)
        p = optimal_p_for_splits(g, v, 0.05, 0.95)
        m = CountMatrix.from_splits(g, *v)
        grid = np.linspace(0.05, 0.95, 2001)
        assert objective_S(m, p) <= min(objective_S(m, q) for q in grid) + 1e-12
