import math
import random

import pytest

from circuitsched.model import CircuitState, CircuitType, SimConfig
from circuitsched.optsched import (
    OracleSizeError,
    WaterfillProblem,
    log_utility,
    optpf_schedule,
    oracle_solve,
    waterfill_solve,
)


def kkt_ok(p, u, tol=1e-9):
    """Check stationarity: equal marginals on the interior, consistent
    inequalities at the box faces."""
    total = sum(u)
    target = min(p.budget, sum(p.caps))
    if abs(total - target) > tol:
        return False
    interior = [
        (a, x) for a, x, c in zip(p.gains, u, p.caps) if tol < x < c - tol
    ]
    if interior:
        nus = [a / (1.0 + a * x) for a, x in interior]
        nu = nus[0]
        if any(abs(v - nu) > 1e-6 * max(1.0, abs(nu)) for v in nus):
            return False
    else:
        nu = None
    if nu is not None:
        for a, x, c in zip(p.gains, u, p.caps):
            marg = a / (1.0 + a * x)
            at_zero = x <= tol
            at_cap = x >= c - tol
            if at_zero and at_cap:
                continue  # cap is zero: both faces bind, any marginal works
            if at_zero and marg > nu + 1e-6 * max(1.0, nu):
                return False  # at zero, marginal must not beat the water level
            if at_cap and marg < nu - 1e-6 * max(1.0, nu):
                return False  # at cap, marginal must not be below it
    return True


class TestWaterfillBranches:
    def test_empty_problem(self):
        assert waterfill_solve(WaterfillProblem((), (), 10.0)) == []

    def test_zero_budget(self):
        p = WaterfillProblem((1.0, 2.0), (5, 5), 0.0)
        assert waterfill_solve(p) == [0.0, 0.0]

    def test_slack_budget_fills_caps(self):
        p = WaterfillProblem((1.0, 2.0), (5, 7), 64.0)
        assert waterfill_solve(p) == [5.0, 7.0]

    def test_single_circuit(self):
        p = WaterfillProblem((0.5,), (100,), 30.0)
        u = waterfill_solve(p)
        assert u[0] == pytest.approx(30.0, abs=1e-9)

    def test_known_two_circuit_solution(self):
        # equal marginals: u = (25.25, 24.75) at water level 25.75
        p = WaterfillProblem((2.0, 1.0), (100, 100), 50.0)
        u = waterfill_solve(p)
        assert u[0] == pytest.approx(25.25, abs=1e-6)
        assert u[1] == pytest.approx(24.75, abs=1e-6)

    def test_weak_circuit_left_dry(self):
        # small budget goes entirely to the strong gain
        p = WaterfillProblem((10.0, 0.1), (100, 100), 5.0)
        u = waterfill_solve(p)
        assert u[0] == pytest.approx(5.0, abs=1e-6)
        assert u[1] == pytest.approx(0.0, abs=1e-6)

    def test_cap_binds_then_spills(self):
        p = WaterfillProblem((2.0, 1.0), (10, 100), 50.0)
        u = waterfill_solve(p)
        assert u[0] == pytest.approx(10.0, abs=1e-6)
        assert u[1] == pytest.approx(40.0, abs=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            WaterfillProblem((1.0,), (1, 2), 5.0)
        with pytest.raises(ValueError):
            WaterfillProblem((0.0,), (1,), 5.0)
        with pytest.raises(ValueError):
            WaterfillProblem((1.0,), (-1,), 5.0)
        with pytest.raises(ValueError):
            WaterfillProblem((1.0,), (1,), -5.0)


class TestWaterfillAgainstOracle:
    def test_grid_oracle_never_beats_solver(self):
        rng = random.Random(31)
        for _ in range(200):
            n = rng.randint(2, 4)
            p = WaterfillProblem(
                tuple(rng.uniform(0.01, 10.0) for _ in range(n)),
                tuple(rng.randint(0, 60) for _ in range(n)),
                float(rng.randint(0, 80)),
            )
            u = waterfill_solve(p)
            ref = oracle_solve(p, grid=13, mode="grid")
            assert log_utility(u, p.gains) >= log_utility(ref, p.gains) - 1e-6

    def test_gradient_oracle_agrees(self):
        rng = random.Random(37)
        for _ in range(30):
            n = rng.randint(2, 10)
            p = WaterfillProblem(
                tuple(rng.uniform(0.05, 5.0) for _ in range(n)),
                tuple(rng.randint(1, 50) for _ in range(n)),
                float(rng.randint(1, 100)),
            )
            u = waterfill_solve(p)
            ref = oracle_solve(p, mode="gradient")
            assert log_utility(u, p.gains) >= log_utility(ref, p.gains) - 1e-6
            # and the oracle should come close to the true optimum too
            assert log_utility(ref, p.gains) >= log_utility(u, p.gains) - 1e-4

    def test_kkt_and_feasibility_fuzz(self):
        rng = random.Random(41)
        for _ in range(300):
            n = rng.randint(1, 12)
            p = WaterfillProblem(
                tuple(rng.uniform(1e-3, 1e3) for _ in range(n)),
                tuple(rng.randint(0, 500) for _ in range(n)),
                float(rng.uniform(0, 600)),
            )
            u = waterfill_solve(p)
            assert all(-1e-12 <= x <= c + 1e-9 for x, c in zip(u, p.caps))
            assert sum(u) <= p.budget + 1e-9
            assert kkt_ok(p, u)

    def test_extreme_gain_spread_converges(self):
        p = WaterfillProblem((1e-6, 1e6, 3.0), (1000, 1000, 1000), 500.0)
        u = waterfill_solve(p)
        assert abs(sum(u) - 500.0) <= 1e-9
        assert kkt_ok(p, u)

    def test_monotone_in_gain(self):
        # raising one gain never lowers its share
        base = WaterfillProblem((1.0, 1.0), (100, 100), 40.0)
        bumped = WaterfillProblem((2.0, 1.0), (100, 100), 40.0)
        assert waterfill_solve(bumped)[0] > waterfill_solve(base)[0] - 1e-9


class TestOracle:
    def test_grid_size_limit(self):
        p = WaterfillProblem((1.0,) * 5, (10,) * 5, 20.0)
        with pytest.raises(OracleSizeError):
            oracle_solve(p, mode="grid")

    def test_auto_dispatch(self):
        small = WaterfillProblem((1.0, 2.0), (10, 10), 5.0)
        large = WaterfillProblem((1.0,) * 6, (10,) * 6, 5.0)
        assert len(oracle_solve(small)) == 2
        assert len(oracle_solve(large)) == 6

    def test_grid_points_feasible(self):
        p = WaterfillProblem((1.0, 3.0, 0.5), (20, 20, 20), 15.0)
        u = oracle_solve(p, grid=7, mode="grid")
        assert sum(u) <= 15.0 + 1e-9
        assert all(0 <= x <= 20 for x in u)

    def test_unknown_mode(self):
        p = WaterfillProblem((1.0,), (1,), 1.0)
        with pytest.raises(ValueError):
            oracle_solve(p, mode="newton")


class TestLogUtility:
    def test_zero_allocation(self):
        assert log_utility([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_hand_value(self):
        assert log_utility([1.0], [1.0]) == pytest.approx(math.log(2.0))


class TestOptpfSchedule:
    def cfg(self):
        return SimConfig()

    def circuits(self, queues, types):
        return [
            CircuitState(circuit_id=i, ctype=t, queue_cells=q)
            for i, (q, t) in enumerate(zip(queues, types))
        ]

    def test_equal_circuits_split_evenly(self):
        cs = self.circuits([500, 500], [CircuitType.WEB, CircuitType.WEB])
        decision = optpf_schedule(cs, 48, self.cfg())
        assert decision.cells == [24, 24]

    def test_higher_priority_gets_more(self):
        cs = self.circuits([5000, 5000], [CircuitType.WEB, CircuitType.BULK])
        decision = optpf_schedule(cs, 48, self.cfg())
        assert decision.cells[0] > decision.cells[1]
        assert sum(decision.cells) == 48

    def test_work_conserving_fuzz(self):
        rng = random.Random(51)
        cfg = self.cfg()
        types = [CircuitType.WEB, CircuitType.STREAMING, CircuitType.BULK]
        for _ in range(300):
            n = rng.randint(1, 10)
            queues = [rng.randint(0, 400) for _ in range(n)]
            cs = self.circuits(queues, [rng.choice(types) for _ in range(n)])
            free = rng.randint(0, 130)
            decision = optpf_schedule(cs, free, cfg)
            assert sum(decision.cells) == min(free, sum(queues))
            assert all(0 <= c <= q for c, q in zip(decision.cells, queues))

    def test_zero_free_or_empty(self):
        cs = self.circuits([10], [CircuitType.WEB])
        assert optpf_schedule(cs, 0, self.cfg()).cells == [0]
        cs = self.circuits([0, 0], [CircuitType.WEB, CircuitType.BULK])
        assert optpf_schedule(cs, 48, self.cfg()).cells == [0, 0]
