import random

import pytest

from circuitsched.model import CircuitState, CircuitType, SimConfig
from circuitsched.sched import (
    RateTracker,
    UnknownSchedulerError,
    arpf_schedule,
    arpf_update_tracker,
    classify_by_ewma,
    ewma_decay_then_add,
    ewma_schedule,
    make_scheduler,
    median_threshold,
    round_robin,
)


def circuits_from_queues(queues, ctype=CircuitType.WEB, ewma=None):
    out = []
    for i, q in enumerate(queues):
        c = CircuitState(circuit_id=i, ctype=ctype, queue_cells=q)
        if ewma is not None:
            c.ewma_value = ewma[i]
        out.append(c)
    return out


def trackers_with_h(hs):
    return [RateTracker(h=h) for h in hs]


class TestRoundRobin:
    def test_even_split(self):
        decision, last = round_robin(circuits_from_queues([5, 5]), 4)
        assert decision.cells == [2, 2]
        assert last == 1

    def test_short_queue_exhausts_then_rest_rotates(self):
        # one cell to the short queue, the remaining three to the other
        decision, _ = round_robin(circuits_from_queues([1, 5]), 4)
        assert decision.cells == [1, 3]

    def test_single_circuit(self):
        decision, last = round_robin(circuits_from_queues([5]), 2)
        assert decision.cells == [2]
        assert last == 0

    def test_cursor_starts_after_last_served(self):
        circuits = circuits_from_queues([5, 5, 5])
        decision, last = round_robin(circuits, 1, start_after=None)
        assert decision.cells == [1, 0, 0]
        decision, last = round_robin(circuits, 1, start_after=last)
        assert decision.cells == [0, 1, 0]
        decision, last = round_robin(circuits, 1, start_after=last)
        assert decision.cells == [0, 0, 1]
        decision, last = round_robin(circuits, 1, start_after=last)
        assert decision.cells == [1, 0, 0]

    def test_cursor_skips_empty(self):
        decision, last = round_robin(
            circuits_from_queues([5, 0, 5]), 1, start_after=0
        )
        assert decision.cells == [0, 0, 1]
        assert last == 2

    def test_work_conserving_and_capped(self):
        rng = random.Random(13)
        for _ in range(300):
            queues = [rng.randint(0, 30) for _ in range(rng.randint(1, 9))]
            free = rng.randint(0, 70)
            cursor = rng.choice([None] + list(range(len(queues))))
            decision, _ = round_robin(circuits_from_queues(queues), free, cursor)
            assert sum(decision.cells) == min(free, sum(queues))
            assert all(0 <= c <= q for c, q in zip(decision.cells, queues))
            # one-cell rotation never lets two grants differ by more than
            # the queue shortfall allows
            full = [c for c, q in zip(decision.cells, queues) if c < q]
            if full:
                assert max(full) - min(full) <= 1

    def test_matches_naive_single_cell_simulation(self):
        rng = random.Random(99)

        def naive(queues, free, start_after):
            order = list(range(len(queues)))
            if start_after is not None:
                pivot = start_after + 1
                order = [i for i in order if i >= pivot] + [
                    i for i in order if i < pivot
                ]
            rem = list(queues)
            cells = [0] * len(queues)
            left = free
            while left > 0 and any(rem[i] > 0 for i in order):
                for i in order:
                    if left == 0:
                        break
                    if rem[i] > 0:
                        cells[i] += 1
                        rem[i] -= 1
                        left -= 1
            return cells

        for _ in range(200):
            queues = [rng.randint(0, 12) for _ in range(rng.randint(1, 6))]
            free = rng.randint(0, 40)
            cursor = rng.choice([None] + list(range(len(queues))))
            decision, _ = round_robin(circuits_from_queues(queues), free, cursor)
            assert decision.cells == naive(queues, free, cursor)


class TestEwmaCounter:
    def test_half_life_halves(self):
        assert ewma_decay_then_add(10.0, 0, 3000.0, 3000.0) == pytest.approx(5.0)

    def test_two_half_lives_then_add(self):
        assert ewma_decay_then_add(10.0, 3, 6000.0, 3000.0) == pytest.approx(5.5)

    def test_zero_elapsed_just_adds(self):
        assert ewma_decay_then_add(4.0, 7, 0.0, 3000.0) == pytest.approx(11.0)

    def test_decay_composes(self):
        # decaying 30ms then 70ms equals decaying 100ms in one step
        two = ewma_decay_then_add(
            ewma_decay_then_add(8.0, 0, 30.0, 500.0), 0, 70.0, 500.0
        )
        one = ewma_decay_then_add(8.0, 0, 100.0, 500.0)
        assert two == pytest.approx(one, rel=1e-12)


class TestEwmaSchedule:
    def test_quietest_circuit_flushes_first(self):
        circuits = circuits_from_queues([10, 10], ewma=[2.0, 9.0])
        decision = ewma_schedule(circuits, 12)
        assert decision.cells == [10, 2]

    def test_tie_broken_by_lower_id(self):
        circuits = circuits_from_queues([8, 8], ewma=[3.0, 3.0])
        decision = ewma_schedule(circuits, 10)
        assert decision.cells == [8, 2]

    def test_zero_free(self):
        circuits = circuits_from_queues([5, 5], ewma=[1.0, 2.0])
        assert ewma_schedule(circuits, 0).cells == [0, 0]

    def test_empty_circuit_skipped(self):
        circuits = circuits_from_queues([0, 4], ewma=[0.0, 50.0])
        assert ewma_schedule(circuits, 10).cells == [0, 4]

    def test_work_conserving_fuzz(self):
        rng = random.Random(5)
        for _ in range(300):
            n = rng.randint(1, 8)
            queues = [rng.randint(0, 25) for _ in range(n)]
            ewma = [rng.uniform(0, 100) for _ in range(n)]
            free = rng.randint(0, 60)
            decision = ewma_schedule(circuits_from_queues(queues, ewma=ewma), free)
            assert sum(decision.cells) == min(free, sum(queues))
            assert all(0 <= c <= q for c, q in zip(decision.cells, queues))

    def test_strict_priority_of_lower_counter(self):
        # a circuit only receives cells once every quieter queue got all it wanted
        circuits = circuits_from_queues([6, 6, 6], ewma=[5.0, 1.0, 3.0])
        decision = ewma_schedule(circuits, 13)
        assert decision.cells == [1, 6, 6]


class TestClassifier:
    def test_below_threshold_is_web(self):
        assert classify_by_ewma(1.0, 5.0) is CircuitType.WEB

    def test_at_threshold_is_bulk(self):
        assert classify_by_ewma(5.0, 5.0) is CircuitType.BULK

    def test_above_threshold_is_bulk(self):
        assert classify_by_ewma(9.0, 5.0) is CircuitType.BULK

    def test_median_threshold(self):
        assert median_threshold([4.0, 1.0, 9.0]) == 4.0
        assert median_threshold([1.0, 3.0]) == 2.0
        with pytest.raises(ValueError):
            median_threshold([])


class TestRateTracker:
    def cfg(self, **kw):
        return SimConfig(**kw)

    def test_bootstrap_uses_rate_floor(self):
        cfg = self.cfg(rate_floor=1e-6)
        c = CircuitState(0, CircuitType.WEB)
        tr = RateTracker.bootstrap(c, cfg)
        assert tr.avg_rate == pytest.approx(1e-6)
        assert tr.h > 0

    def test_average_rate_over_elapsed_time(self):
        # 100 cells flushed over the first 5 ticks of 10ms: R = 2 cells/ms at tick 6
        cfg = self.cfg()
        c = CircuitState(0, CircuitType.BULK, queue_cells=0)
        tr = RateTracker()
        c.flushed_total = 100
        arpf_update_tracker(tr, c, cfg, tick=6)
        assert tr.avg_rate == pytest.approx(100 / 50.0)
        assert tr.inst_rate == pytest.approx(100 / 10.0)

    def test_first_tick_has_no_history(self):
        cfg = self.cfg()
        c = CircuitState(0, CircuitType.WEB)
        tr = arpf_update_tracker(RateTracker(), c, cfg, tick=1)
        assert tr.avg_rate == pytest.approx(cfg.rate_floor)

    def test_floor_applies_when_starved(self):
        cfg = self.cfg(rate_floor=0.5)
        c = CircuitState(0, CircuitType.WEB)
        c.flushed_total = 1
        tr = arpf_update_tracker(RateTracker(), c, cfg, tick=1000)
        assert tr.avg_rate == pytest.approx(0.5)

    def test_h_inversely_proportional_to_priority(self):
        cfg = self.cfg()
        web = CircuitState(0, CircuitType.WEB)
        bulk = CircuitState(1, CircuitType.BULK)
        web.flushed_total = bulk.flushed_total = 60
        tw = arpf_update_tracker(RateTracker(), web, cfg, tick=4)
        tb = arpf_update_tracker(RateTracker(), bulk, cfg, tick=4)
        # same R, gamma_web > gamma_bulk, so h_web < h_bulk
        assert tw.h < tb.h

    def test_history_sum_tracks_circuit_total(self):
        cfg = self.cfg()
        c = CircuitState(0, CircuitType.WEB)
        tr = RateTracker()
        for tick, flush in enumerate([5, 0, 7], start=1):
            c.flushed_total += flush
            arpf_update_tracker(tr, c, cfg, tick + 1)
        assert tr.flushed_history_sum == 12


class TestArpfSchedule:
    def cfg(self):
        return SimConfig()

    def test_allocation_proportional_to_h(self):
        circuits = circuits_from_queues([20, 40])
        trackers = trackers_with_h([2.0, 1.0])
        decision = arpf_schedule(circuits, trackers, 30, self.cfg())
        assert decision.lambdas[0] == pytest.approx(1.0)
        assert decision.lambdas[1] == pytest.approx(0.25)
        assert decision.cells == [20, 10]

    def test_clamp_then_redistribute(self):
        circuits = circuits_from_queues([10, 40])
        trackers = trackers_with_h([3.0, 1.0])
        decision = arpf_schedule(circuits, trackers, 40, self.cfg())
        assert decision.lambdas[0] == pytest.approx(1.0)
        assert decision.lambdas[1] == pytest.approx(0.75)
        assert decision.cells == [10, 30]

    def test_single_circuit_partial_flush(self):
        circuits = circuits_from_queues([50])
        decision = arpf_schedule(circuits, trackers_with_h([1.0]), 30, self.cfg())
        assert decision.lambdas[0] == pytest.approx(0.6)
        assert decision.cells == [30]

    def test_underload_flushes_everything(self):
        circuits = circuits_from_queues([5, 7])
        decision = arpf_schedule(circuits, trackers_with_h([1.0, 9.0]), 64, self.cfg())
        assert decision.cells == [5, 7]
        assert decision.lambdas == [1.0, 1.0]

    def test_zero_free(self):
        circuits = circuits_from_queues([5, 7])
        decision = arpf_schedule(circuits, trackers_with_h([1.0, 1.0]), 0, self.cfg())
        assert decision.cells == [0, 0]

    def test_empty_circuits_get_nothing(self):
        circuits = circuits_from_queues([0, 30])
        decision = arpf_schedule(circuits, trackers_with_h([9.0, 1.0]), 10, self.cfg())
        assert decision.cells == [0, 10]

    def test_equal_ratio_law_fuzz(self):
        # lambda_i * zeta_i / h_i identical across unclamped circuits
        rng = random.Random(21)
        cfg = self.cfg()
        for _ in range(500):
            n = rng.randint(2, 10)
            queues = [rng.randint(0, 400) for _ in range(n)]
            hs = [rng.uniform(1e-6, 50.0) for _ in range(n)]
            free = rng.randint(1, 120)
            circuits = circuits_from_queues(queues)
            decision = arpf_schedule(circuits, trackers_with_h(hs), free, cfg)
            ratios = [
                decision.lambdas[i] * queues[i] / hs[i]
                for i in range(n)
                if queues[i] > 0 and 0.0 < decision.lambdas[i] < 1.0
            ]
            for r in ratios[1:]:
                assert r == pytest.approx(ratios[0], rel=1e-9)

    def test_work_conservation_exact_fuzz(self):
        rng = random.Random(22)
        cfg = self.cfg()
        for _ in range(500):
            n = rng.randint(1, 10)
            queues = [rng.randint(0, 300) for _ in range(n)]
            hs = [rng.uniform(1e-9, 100.0) for _ in range(n)]
            free = rng.randint(0, 150)
            circuits = circuits_from_queues(queues)
            decision = arpf_schedule(circuits, trackers_with_h(hs), free, cfg)
            assert sum(decision.cells) == min(free, sum(queues))
            assert all(
                0 <= c <= q for c, q in zip(decision.cells, queues)
            )


class TestRegistry:
    def test_all_four_constructible(self):
        for name in ("rr", "ewma", "arpf", "optpf"):
            assert make_scheduler(name).name == name

    def test_unknown_name_lists_valid_ones(self):
        with pytest.raises(UnknownSchedulerError) as e:
            make_scheduler("fifo")
        msg = str(e.value)
        for name in ("rr", "ewma", "arpf", "optpf"):
            assert name in msg

    def test_instances_are_fresh(self):
        a = make_scheduler("rr")
        b = make_scheduler("rr")
        assert a is not b
