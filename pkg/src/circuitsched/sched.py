"""Circuit schedulers: round-robin, EWMA, and average-rate proportional fair.

Every scheduler maps (circuit states, rate trackers, free buffer space) to a
ScheduleDecision and is work-conserving: granted cells total
min(free, total queued).  The optimization-based scheduler lives in
optsched; the registry at the bottom knows all four.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Type

from .model import (
    CircuitState,
    CircuitType,
    ScheduleDecision,
    SimConfig,
    integerize,
    priority,
)


class UnknownSchedulerError(ValueError):
    """Raised when a scheduler name is not in the registry."""


@dataclass
class RateTracker:
    """Running rate statistics for one circuit under AR-PF.

    flushed_history_sum counts every cell flushed so far; avg_rate is the
    long-run average writing rate R (cells per ms, floored at rate_floor);
    inst_rate is last tick's rate r; h = delta_t * R / gamma is the weight the
    AR-PF allocation rule consumes.
    """

    flushed_history_sum: int = 0
    inst_rate: float = 0.0
    avg_rate: float = 0.0
    h: float = 0.0

    @classmethod
    def bootstrap(cls, circuit: CircuitState, cfg: SimConfig) -> "RateTracker":
        # No history yet: R starts at the floor so every circuit has h > 0.
        r = cfg.rate_floor
        return cls(0, 0.0, r, cfg.tick_ms * r / priority(circuit, cfg))


def arpf_update_tracker(
    tracker: RateTracker, circuit: CircuitState, cfg: SimConfig, tick: int
) -> RateTracker:
    """Refresh a tracker after a flush, for use at tick `tick`.

    The engine calls this at the end of tick j with tick = j + 1: the average
    rate the scheduler consults at tick j+1 covers everything flushed through
    tick j over (tick-1) * delta_t of elapsed time.  Cells flushed this tick
    are recovered from the circuit's running total, so the tracker lags it by
    exactly one tick.
    """
    flushed_now = circuit.flushed_total - tracker.flushed_history_sum
    tracker.flushed_history_sum = circuit.flushed_total
    tracker.inst_rate = flushed_now / cfg.tick_ms
    if tick >= 2:
        elapsed_ms = (tick - 1) * cfg.tick_ms
        tracker.avg_rate = max(
            cfg.rate_floor, tracker.flushed_history_sum / elapsed_ms
        )
    else:
        tracker.avg_rate = cfg.rate_floor
    tracker.h = cfg.tick_ms * tracker.avg_rate / priority(circuit, cfg)
    return tracker


def round_robin(
    circuits: Sequence[CircuitState],
    free: int,
    start_after: Optional[int] = None,
) -> Tuple[ScheduleDecision, Optional[int]]:
    """Classic fair rotation: one cell per visit, cycling in circuit-id order.

    The cycle starts just after circuit id start_after (None starts at the
    lowest id) and keeps granting single cells until free space or every
    queue is exhausted.  Returns the decision and the id of the last circuit
    granted a cell, which the caller carries as the next cursor.
    """
    n = len(circuits)
    cells = [0] * n
    order = sorted(range(n), key=lambda i: circuits[i].circuit_id)
    start = 0
    if start_after is not None:
        for pos, i in enumerate(order):
            if circuits[i].circuit_id > start_after:
                start = pos
                break
        else:
            start = 0
    remaining = [c.queue_cells for c in circuits]
    left = free
    last_served = start_after
    # Rotate so the scan begins just past the cursor.
    active = [i for i in order[start:] + order[:start] if remaining[i] > 0]
    while left > 0 and active:
        nxt = []
        for i in active:
            if left == 0:
                break
            cells[i] += 1
            remaining[i] -= 1
            left -= 1
            last_served = circuits[i].circuit_id
            if remaining[i] > 0:
                nxt.append(i)
        active = nxt
    lambdas = [
        cells[i] / circuits[i].queue_cells if circuits[i].queue_cells else 0.0
        for i in range(n)
    ]
    return ScheduleDecision(lambdas, cells), last_served


def ewma_decay_then_add(
    value: float, sent: int, elapsed_ms: float, half_life_ms: float
) -> float:
    """Tick update for the EWMA cell counter: decay by elapsed time, then add.

    value * 0.5 ** (elapsed_ms / half_life_ms) + sent
    """
    return value * 0.5 ** (elapsed_ms / half_life_ms) + sent


def ewma_schedule(
    circuits: Sequence[CircuitState], free: int
) -> ScheduleDecision:
    """Serve circuits in ascending EWMA order, whole queues greedily.

    The least-recently-busy circuit (lowest counter) flushes its entire queue
    first, capped by remaining buffer space; ties go to the lower circuit id.
    """
    n = len(circuits)
    cells = [0] * n
    order = sorted(
        (i for i in range(n) if circuits[i].queue_cells > 0),
        key=lambda i: (circuits[i].ewma_value, circuits[i].circuit_id),
    )
    left = free
    for i in order:
        if left <= 0:
            break
        grant = min(circuits[i].queue_cells, left)
        cells[i] = grant
        left -= grant
    lambdas = [
        cells[i] / circuits[i].queue_cells if circuits[i].queue_cells else 0.0
        for i in range(n)
    ]
    return ScheduleDecision(lambdas, cells)


def classify_by_ewma(value: float, threshold: float) -> CircuitType:
    """Two-class traffic split on the EWMA counter: quiet means web-like."""
    return CircuitType.WEB if value < threshold else CircuitType.BULK


def median_threshold(values: Sequence[float]) -> float:
    """Default classifier threshold: median of the current counters."""
    if not values:
        raise ValueError("no ewma values to take a median of")
    s = sorted(values)
    mid = len(s) // 2
    if len(s) % 2:
        return s[mid]
    return 0.5 * (s[mid - 1] + s[mid])


def arpf_schedule(
    circuits: Sequence[CircuitState],
    trackers: Sequence[RateTracker],
    free: int,
    cfg: SimConfig,
) -> ScheduleDecision:
    """Average-rate proportional fair allocation.

    Over non-empty circuits, lambda_i = h_i * x / (zeta_i * sum_k h_k) with
    x the free buffer space, so the granted cells lambda_i * zeta_i are
    proportional to the weights h_i and the products lambda_i*zeta_i/h_i are
    equal.  Any lambda_i > 1 is clamped to 1 (a queue cannot flush more than
    itself); the freed budget is redistributed by re-applying the rule over
    the still-unclamped set until none exceeds 1.
    """
    n = len(circuits)
    lambdas = [0.0] * n
    queues = [c.queue_cells for c in circuits]
    if free <= 0:
        return ScheduleDecision(lambdas, [0] * n)
    unclamped = [i for i in range(n) if queues[i] > 0]
    budget = float(min(free, sum(queues)))
    total_q = sum(queues[i] for i in unclamped)
    if budget >= total_q:
        for i in unclamped:
            lambdas[i] = 1.0
        cells = [queues[i] if lambdas[i] == 1.0 else 0 for i in range(n)]
        return ScheduleDecision(lambdas, cells)
    for _ in range(len(unclamped)):
        h_sum = sum(trackers[i].h for i in unclamped)
        clamped_now = []
        for i in unclamped:
            lam = trackers[i].h * budget / (queues[i] * h_sum)
            lambdas[i] = lam
            if lam > 1.0:
                clamped_now.append(i)
        if not clamped_now:
            break
        for i in clamped_now:
            lambdas[i] = 1.0
            budget -= queues[i]
        unclamped = [i for i in unclamped if i not in clamped_now]
        if not unclamped:
            break
    targets = [lambdas[i] * queues[i] for i in range(n)]
    cells = integerize(targets, queues, free)
    return ScheduleDecision(lambdas, cells)


class Scheduler:
    """Common interface: schedule() one tick.  Subclasses may keep cursor or
    counter state, which the engine owns via its scheduler instance."""

    name = "?"

    def schedule(
        self,
        circuits: Sequence[CircuitState],
        trackers: Sequence[RateTracker],
        free: int,
        cfg: SimConfig,
    ) -> ScheduleDecision:
        raise NotImplementedError


class RoundRobinScheduler(Scheduler):
    name = "rr"

    def __init__(self) -> None:
        self.last_served: Optional[int] = None

    def schedule(self, circuits, trackers, free, cfg) -> ScheduleDecision:
        decision, self.last_served = round_robin(
            circuits, free, self.last_served
        )
        return decision


class EwmaScheduler(Scheduler):
    name = "ewma"

    def schedule(self, circuits, trackers, free, cfg) -> ScheduleDecision:
        return ewma_schedule(circuits, free)


class ArpfScheduler(Scheduler):
    name = "arpf"

    def schedule(self, circuits, trackers, free, cfg) -> ScheduleDecision:
        return arpf_schedule(circuits, trackers, free, cfg)


def _registry() -> Dict[str, Type[Scheduler]]:
    from .optsched import OptPfScheduler  # late import, one-way dependency

    return {
        "rr": RoundRobinScheduler,
        "ewma": EwmaScheduler,
        "arpf": ArpfScheduler,
        "optpf": OptPfScheduler,
    }


SCHEDULER_NAMES = ("rr", "ewma", "arpf", "optpf")


def make_scheduler(name: str) -> Scheduler:
    reg = _registry()
    if name not in reg:
        raise UnknownSchedulerError(
            f"unknown scheduler {name!r}; valid names: {', '.join(SCHEDULER_NAMES)}"
        )
    return reg[name]()
