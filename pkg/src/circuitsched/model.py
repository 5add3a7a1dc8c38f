"""Core domain types for the relay simulation.

A relay multiplexes many circuits onto one outbound connection.  Each circuit
owns a FIFO queue of fixed-size cells; each simulation tick a scheduler picks
a flush fraction lambda_i for every circuit and the corresponding whole cells
move into a finite connection buffer that drains at a fixed rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

CELL_BYTES = 512


class ConfigError(ValueError):
    """Raised for invalid simulation or scenario configuration."""


class CircuitType(Enum):
    WEB = "web"
    BULK = "bulk"
    STREAMING = "streaming"


# Relative type weights: interactive traffic outranks streaming outranks bulk.
# Kept nearly flat so the optimizing schedulers tilt without starving bulk.
DEFAULT_TYPE_PRIORITY = {
    CircuitType.WEB: 1.2,
    CircuitType.STREAMING: 1.15,
    CircuitType.BULK: 1.0,
}


@dataclass(frozen=True)
class SimConfig:
    """Relay-level parameters shared by every scheduler.

    tick_ms is the wall-clock length of one tick (delta t).  The connection
    buffer holds buffer_capacity_cells cells and drains drain_cells_per_tick
    each tick.  alpha1 weights queue depth and alpha2 weights circuit type in
    the priority gamma; rate_floor is the lower bound applied to the average
    rate R so that a starved circuit's weight never reaches zero.
    """

    tick_ms: float = 10.0
    buffer_capacity_cells: int = 64
    drain_cells_per_tick: int = 48
    alpha1: float = 0.3
    alpha2: float = 0.7
    type_priority: dict = field(
        default_factory=lambda: dict(DEFAULT_TYPE_PRIORITY)
    )
    queue_cap_cells: int = 20000
    ewma_half_life_ms: float = 3000.0
    throughput_window_ticks: int = 50
    # At or above the link's per-circuit rate the floor dominates the tracked
    # average, pinning the PF weights to the static priority profile instead
    # of letting whichever circuit got rich early keep compounding.
    rate_floor: float = 1.0
    seed: int = 1

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha1 < 1.0 and 0.0 < self.alpha2 < 1.0):
            raise ConfigError("alpha1 and alpha2 must lie in (0, 1)")
        if self.tick_ms <= 0:
            raise ConfigError("tick_ms must be positive")
        if self.buffer_capacity_cells <= 0:
            raise ConfigError("buffer_capacity_cells must be positive")
        if self.drain_cells_per_tick <= 0:
            raise ConfigError("drain_cells_per_tick must be positive")
        if self.queue_cap_cells <= 0:
            raise ConfigError("queue_cap_cells must be positive")
        if self.ewma_half_life_ms <= 0:
            raise ConfigError("ewma_half_life_ms must be positive")
        if self.throughput_window_ticks <= 0:
            raise ConfigError("throughput_window_ticks must be positive")
        if self.rate_floor <= 0:
            raise ConfigError("rate_floor must be positive")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        prio = self.type_priority
        missing = [t for t in CircuitType if t not in prio]
        if missing:
            raise ConfigError(f"type_priority missing {missing}")
        if any(v <= 0 for v in prio.values()):
            raise ConfigError("type_priority values must be positive")
        if not (
            prio[CircuitType.WEB]
            > prio[CircuitType.STREAMING]
            > prio[CircuitType.BULK]
        ):
            raise ConfigError(
                "type_priority must order web > streaming > bulk"
            )


@dataclass
class CircuitState:
    """Mutable per-circuit bookkeeping owned by the engine."""

    circuit_id: int
    ctype: CircuitType
    queue_cells: int = 0
    arrived_total: int = 0
    flushed_total: int = 0
    generator_done: bool = False
    first_arrival_tick: Optional[int] = None
    flush_complete_tick: Optional[int] = None
    ewma_value: float = 0.0


@dataclass
class ConnectionState:
    """The shared outbound buffer.  occupancy never exceeds capacity."""

    capacity_cells: int
    occupancy_cells: int = 0
    written_total: int = 0


@dataclass
class ScheduleDecision:
    """One tick's allocation: real flush fractions and whole granted cells.

    lambdas[i] is the fraction of circuit i's queue the scheduler chose;
    cells[i] is the integer grant after rounding.  Invariants: lambdas in
    [0, 1], 0 <= cells[i] <= queue_i, sum(cells) <= free space.
    """

    lambdas: list
    cells: list


def priority(circuit: CircuitState, cfg: SimConfig) -> float:
    """Circuit weight gamma = alpha1 * min(queue/queue_cap, 1) + alpha2 * y.

    The queue term is normalised so both terms are dimensionless and the
    alphas trade them off directly; y is the circuit-type weight.
    """
    depth = min(circuit.queue_cells / cfg.queue_cap_cells, 1.0)
    return cfg.alpha1 * depth + cfg.alpha2 * cfg.type_priority[circuit.ctype]


def free_space(conn: ConnectionState) -> int:
    return conn.capacity_cells - conn.occupancy_cells


def integerize(
    targets: Sequence[float], queues: Sequence[int], budget: int
) -> list:
    """Round real per-circuit cell targets to whole cells.

    Floor each target, then hand the leftover slots (budget minus the floor
    sum, where budget is capped at the total queued) one at a time to the
    circuits with the largest fractional remainder, ties broken by ascending
    index.  Callers pass targets that already sum to min(budget, sum(queues)),
    so the result conserves work exactly and never exceeds a queue.
    """
    total = min(budget, sum(queues))
    if total <= 0:
        return [0] * len(queues)
    cells = []
    remainders = []
    for i, (t, q) in enumerate(zip(targets, queues)):
        t = min(max(t, 0.0), float(q))
        whole = int(t)
        cells.append(whole)
        remainders.append((-(t - whole), i))
    leftover = total - sum(cells)
    if leftover > 0:
        remainders.sort()
        for _, i in remainders:
            if leftover == 0:
                break
            if cells[i] < queues[i]:
                cells[i] += 1
                leftover -= 1
        # Degenerate float drift: hand any residue to whoever has room.
        if leftover > 0:
            for i, q in enumerate(queues):
                while leftover > 0 and cells[i] < q:
                    cells[i] += 1
                    leftover -= 1
    return cells
