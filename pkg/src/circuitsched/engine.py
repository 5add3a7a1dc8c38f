"""Deterministic tick loop tying traffic, scheduler and buffer together.

Tick sequence (1-based ticks):
  1. arrivals append to circuit queues (independent of the scheduler),
  2. the connection buffer drains,
  3. free space is measured,
  4. the scheduler decides,
  5. granted cells move queue -> buffer,
  6. rate trackers and EWMA counters update,
  7. flush completions and the throughput window are recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .metrics import CircuitOutcome, RunRecord
from .model import (
    CircuitState,
    ConnectionState,
    ScheduleDecision,
    SimConfig,
    free_space,
)
from .sched import (
    RateTracker,
    Scheduler,
    arpf_update_tracker,
    ewma_decay_then_add,
    make_scheduler,
)
from .traffic import TrafficSource, WorkloadSpec


@dataclass
class SimState:
    cfg: SimConfig
    circuits: List[CircuitState]
    sources: List[TrafficSource]
    trackers: List[RateTracker]
    conn: ConnectionState
    scheduler: Scheduler
    tick: int = 0
    window_cells: int = 0
    windows: List = field(default_factory=list)

    @property
    def total_queued(self) -> int:
        return sum(c.queue_cells for c in self.circuits)

    def all_sources_done(self) -> bool:
        return all(s.done for s in self.sources)


def build_state(
    cfg: SimConfig, specs: Sequence[WorkloadSpec], scheduler_name: str
) -> SimState:
    """Assemble a fresh simulation; unknown scheduler names fail here,
    before the first tick."""
    scheduler = make_scheduler(scheduler_name)
    circuits = [
        CircuitState(circuit_id=i, ctype=spec.ctype)
        for i, spec in enumerate(specs)
    ]
    sources = [
        TrafficSource(spec, cfg.seed, i) for i, spec in enumerate(specs)
    ]
    trackers = [RateTracker.bootstrap(c, cfg) for c in circuits]
    conn = ConnectionState(capacity_cells=cfg.buffer_capacity_cells)
    return SimState(cfg, circuits, sources, trackers, conn, scheduler)


def step(state: SimState) -> ScheduleDecision:
    """Advance one tick and return the scheduling decision applied."""
    cfg = state.cfg
    state.tick += 1
    tick = state.tick

    # 1. arrivals
    for circuit, source in zip(state.circuits, state.sources):
        cells = source.next_arrivals(tick)
        if cells:
            circuit.queue_cells += cells
            circuit.arrived_total += cells
            if circuit.first_arrival_tick is None:
                circuit.first_arrival_tick = tick
        circuit.generator_done = source.done

    # 2. drain, 3. free space
    conn = state.conn
    conn.occupancy_cells -= min(conn.occupancy_cells, cfg.drain_cells_per_tick)
    free = free_space(conn)

    # 4. decide, 5. move cells
    decision = state.scheduler.schedule(
        state.circuits, state.trackers, free, cfg
    )
    moved = 0
    for circuit, granted in zip(state.circuits, decision.cells):
        if granted:
            circuit.queue_cells -= granted
            circuit.flushed_total += granted
            moved += granted
    conn.occupancy_cells += moved
    conn.written_total += moved
    state.window_cells += moved

    # 6. trackers for next tick's decision; EWMA decays even when idle
    for circuit, tracker in zip(state.circuits, state.trackers):
        arpf_update_tracker(tracker, circuit, cfg, tick + 1)
    for circuit, granted in zip(state.circuits, decision.cells):
        circuit.ewma_value = ewma_decay_then_add(
            circuit.ewma_value, granted, cfg.tick_ms, cfg.ewma_half_life_ms
        )

    # 7. completions and window accounting
    for circuit in state.circuits:
        if (
            circuit.flush_complete_tick is None
            and circuit.generator_done
            and circuit.queue_cells == 0
        ):
            circuit.flush_complete_tick = tick
    if tick % cfg.throughput_window_ticks == 0:
        state.windows.append(
            (tick // cfg.throughput_window_ticks - 1, state.window_cells)
        )
        state.window_cells = 0
    return decision


def _finish(state: SimState, truncated: bool) -> RunRecord:
    if state.window_cells > 0:
        state.windows.append(
            (len(state.windows), state.window_cells)
        )
        state.window_cells = 0
    outcomes = [
        CircuitOutcome(
            circuit_id=c.circuit_id,
            ctype=c.ctype,
            arrived_cells=c.arrived_total,
            flushed_cells=c.flushed_total,
            first_arrival_tick=c.first_arrival_tick,
            flush_complete_tick=c.flush_complete_tick,
        )
        for c in state.circuits
    ]
    return RunRecord(
        outcomes=outcomes,
        throughput_windows=state.windows,
        written_total=state.conn.written_total,
        ticks=state.tick,
        truncated=truncated,
    )


def run(
    cfg: SimConfig,
    specs: Sequence[WorkloadSpec],
    scheduler_name: str,
    max_ticks: int,
) -> RunRecord:
    """Run until every source is done and all queues and the buffer are
    empty, or until max_ticks; truncation is flagged, not an error."""
    if max_ticks <= 0:
        raise ValueError("max_ticks must be positive")
    state = build_state(cfg, specs, scheduler_name)
    while state.tick < max_ticks:
        step(state)
        if (
            state.all_sources_done()
            and state.total_queued == 0
            and state.conn.occupancy_cells == 0
        ):
            return _finish(state, truncated=False)
    return _finish(state, truncated=True)
