"""Per-circuit traffic sources.

Web sources alternate fixed-rate bursts (one page worth of cells) with idle
gaps, endlessly.  Bulk and streaming sources emit at a constant rate until a
finite byte total is exhausted, then report done.  All randomness comes from
PCG64 streams split per circuit, so arrival sequences depend only on
(seed, circuit id) and never on the scheduler under test.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .model import CELL_BYTES, CircuitType, ConfigError


def bytes_to_cells(n_bytes: int) -> int:
    """Cells needed to carry n_bytes: ceil(n_bytes / 512)."""
    if n_bytes < 0:
        raise ValueError("byte count must be non-negative")
    return -(-n_bytes // CELL_BYTES)


@dataclass(frozen=True)
class WorkloadSpec:
    """Declarative description of one circuit's traffic.

    Only the fields matching ctype are consulted: web uses the burst-size and
    gap ranges plus arrival_rate_cells_per_tick, bulk uses bulk_total_bytes
    plus arrival_rate_cells_per_tick, streaming uses its own rate and total.
    """

    ctype: CircuitType
    # Page-sized web bursts (150-250 cells) with short think-time gaps;
    # streams push a fixed 4800-cell transfer as fast as the relay accepts it.
    web_burst_bytes: Tuple[int, int] = (76800, 128000)
    web_gap_ticks: Tuple[int, int] = (20, 60)
    bulk_total_bytes: int = 50 * 2**20
    stream_rate_cells_per_tick: int = 48
    stream_total_bytes: int = 4800 * 512
    arrival_rate_cells_per_tick: int = 12

    def __post_init__(self) -> None:
        if self.arrival_rate_cells_per_tick <= 0:
            raise ConfigError("arrival_rate_cells_per_tick must be positive")
        if self.ctype is CircuitType.WEB:
            lo, hi = self.web_burst_bytes
            if not (0 < lo <= hi):
                raise ConfigError("web_burst_bytes must be a range 0 < lo <= hi")
            glo, ghi = self.web_gap_ticks
            if not (0 < glo <= ghi):
                raise ConfigError("web_gap_ticks must be a range 0 < lo <= hi")
        elif self.ctype is CircuitType.BULK:
            if self.bulk_total_bytes < 50 * 2**20:
                raise ConfigError("bulk_total_bytes must be at least 50 MiB")
        elif self.ctype is CircuitType.STREAMING:
            if self.stream_rate_cells_per_tick <= 0:
                raise ConfigError("stream_rate_cells_per_tick must be positive")
            if self.stream_total_bytes <= 0:
                raise ConfigError("stream_total_bytes must be positive")


def _circuit_rng(seed: int, circuit_id: int) -> np.random.Generator:
    # Independent stream per circuit: same parent seed, per-circuit spawn key.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(circuit_id,))
    return np.random.Generator(np.random.PCG64(ss))


class TrafficSource:
    """Stateful arrival process for one circuit.

    next_arrivals(tick) returns the cells entering the queue this tick; after
    a finite source is exhausted it keeps returning 0 and done stays True.
    """

    def __init__(self, spec: WorkloadSpec, seed: int, circuit_id: int):
        self.spec = spec
        self.circuit_id = circuit_id
        self.done = False
        self._rng = _circuit_rng(seed, circuit_id)
        if spec.ctype is CircuitType.WEB:
            self._burst_left = self._sample_burst()
            self._gap_left = 0
        elif spec.ctype is CircuitType.BULK:
            self._remaining = bytes_to_cells(spec.bulk_total_bytes)
        else:
            self._remaining = bytes_to_cells(spec.stream_total_bytes)

    def _sample_burst(self) -> int:
        lo, hi = self.spec.web_burst_bytes
        return bytes_to_cells(int(self._rng.integers(lo, hi + 1)))

    def _sample_gap(self) -> int:
        lo, hi = self.spec.web_gap_ticks
        return int(self._rng.integers(lo, hi + 1))

    def next_arrivals(self, tick: int) -> int:
        spec = self.spec
        if spec.ctype is CircuitType.WEB:
            if self._gap_left > 0:
                self._gap_left -= 1
                return 0
            emit = min(spec.arrival_rate_cells_per_tick, self._burst_left)
            self._burst_left -= emit
            if self._burst_left == 0:
                # Page finished: rest, then fetch the next one.
                self._gap_left = self._sample_gap()
                self._burst_left = self._sample_burst()
            return emit
        if self.done:
            return 0
        if spec.ctype is CircuitType.BULK:
            rate = spec.arrival_rate_cells_per_tick
        else:
            rate = spec.stream_rate_cells_per_tick
        emit = min(rate, self._remaining)
        self._remaining -= emit
        if self._remaining == 0:
            self.done = True
        return emit
