import itertools

import numpy as np
import pytest

from fmqa_rna.annealer import AnnealSchedule, ProblemTooLarge, all_states, exhaustive_solve, replay_flips, sa_solve
from fmqa_rna.surrogate import QuboProblem


def random_qubo(n, seed):
    rng = np.random.default_rng(seed)
    return QuboProblem(np.triu(rng.uniform(-1, 1, (n, n))), float(rng.normal()))


def test_all_states_order():
    assert all_states(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert all_states(5).shape == (32, 5)


class TestExhaustive:
    def test_matches_itertools(self):
        q = random_qubo(8, 0)
        values = [q.evaluate(np.array(x)) for x in itertools.product((0, 1), repeat=8)]
        assert exhaustive_solve(q).value == pytest.approx(min(values))

    def test_tie_breaks_lexicographically(self):
        q = QuboProblem(np.zeros((3, 3)))
        assert exhaustive_solve(q).x.tolist() == [0, 0, 0]
        q = QuboProblem(np.diag([0.0, -1.0, -1.0]) + np.triu(np.full((3, 3), 1.0), 1) * np.array([[0, 0, 0], [0, 0, 1], [0, 0, 0]]))
        # minima at 010 and 001 (value -1); 001 comes first
        assert exhaustive_solve(q).x.tolist() == [0, 0, 1]

    def test_too_large(self):
        with pytest.raises(ProblemTooLarge):
            exhaustive_solve(QuboProblem(np.zeros((21, 21))))


class TestAnneal:
    def test_finds_optimum_on_small_problems(self):
        hits = 0
        schedule = AnnealSchedule(sweeps=200, restarts=4)
        for seed in range(100):
            q = random_qubo(16, seed)
            best = exhaustive_solve(q).value
            hits += abs(sa_solve(q, AnnealSchedule(sweeps=200, restarts=4, seed=seed)).value - best) < 1e-9
        assert hits >= 95
        assert schedule.betas()[0] == pytest.approx(0.1)

    def test_reported_value_is_energy(self):
        q = random_qubo(30, 1)
        res = sa_solve(q, AnnealSchedule(sweeps=100, restarts=3))
        assert res.value == pytest.approx(q.evaluate(res.x))
        assert res.value == min(res.restart_values)
        assert len(res.restart_values) == 3

    def test_deterministic(self):
        q = random_qubo(40, 2)
        a = sa_solve(q, AnnealSchedule(sweeps=50, seed=3))
        b = sa_solve(q, AnnealSchedule(sweeps=50, seed=3))
        np.testing.assert_array_equal(a.x, b.x)

    def test_more_restarts_never_worse(self):
        q = random_qubo(60, 4)
        values = [sa_solve(q, AnnealSchedule(sweeps=30, restarts=r, seed=1)).value for r in (1, 2, 4, 8)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_incremental_energy(self):
        q = random_qubo(25, 5)
        linear, coupling = q.symmetric()
        rng = np.random.default_rng(0)
        x = rng.integers(0, 2, 25).astype(np.int8)
        flips = rng.integers(0, 25, 200)
        tracked = replay_flips(linear, coupling, x, flips)
        y = x.copy()
        for t, i in enumerate(flips):
            y[i] ^= 1
            assert tracked[t] + q.offset == pytest.approx(q.evaluate(y), abs=1e-9)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            AnnealSchedule(sweeps=0)
        with pytest.raises(ValueError):
            AnnealSchedule(beta_start=5, beta_end=1)
        assert AnnealSchedule(sweeps=1).betas().tolist() == [50.0]

    def test_single_variable(self):
        assert sa_solve(QuboProblem(np.array([[-1.0]]))).x.tolist() == [1]
        assert sa_solve(QuboProblem(np.array([[1.0]]))).x.tolist() == [0]


class TestWorkedExamples:
    def test_two_variables(self):
        q = QuboProblem(np.array([[-1.0, 3.0], [0.0, -1.0]]))
        res = sa_solve(q)
        assert res.value == -1.0 and res.x.tolist() in ([1, 0], [0, 1])

    def test_flat(self):
        assert sa_solve(QuboProblem(np.zeros((5, 5)))).value == 0.0

    def test_single_variable_values(self):
        assert sa_solve(QuboProblem(np.array([[5.0]]))).value == 0.0
        assert sa_solve(QuboProblem(np.array([[-5.0]]))).value == -5.0

    def test_cross_check_small(self):
        agree = 0
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            n = int(rng.integers(2, 13))
            q = random_qubo(n, 1000 + seed)
            agree += abs(sa_solve(q, AnnealSchedule(seed=seed)).value - exhaustive_solve(q).value) < 1e-9
        assert agree >= 99
