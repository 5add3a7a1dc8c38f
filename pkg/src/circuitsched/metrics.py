"""Run-level metrics: fairness, throughput, flush latency.

jain_index((s_1..s_n)) = (sum s)^2 / (n * sum s^2), the standard form with
the population size in the denominator; it is 1 for equal shares and 1/n
when one share holds everything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .model import CircuitType, SimConfig


@dataclass
class CircuitOutcome:
    """Per-circuit totals at the end of a run."""

    circuit_id: int
    ctype: CircuitType
    arrived_cells: int
    flushed_cells: int
    first_arrival_tick: Optional[int]
    flush_complete_tick: Optional[int]  # None: censored at run end


@dataclass
class RunRecord:
    """Everything a finished run exposes to the metrics and report layers."""

    outcomes: List[CircuitOutcome]
    throughput_windows: List[Tuple[int, int]]  # (window index, cells written)
    written_total: int
    ticks: int
    truncated: bool

    @property
    def n_circuits(self) -> int:
        return len(self.outcomes)

    @property
    def shares(self) -> Dict[int, int]:
        """Cumulative flushed cells per circuit (the Jain-index input)."""
        return {o.circuit_id: o.flushed_cells for o in self.outcomes}

    @property
    def flush_latency(self) -> Dict[int, int]:
        """Ticks from first arrival to queue-empty-after-done, completed only."""
        out = {}
        for o in self.outcomes:
            if o.flush_complete_tick is not None and o.first_arrival_tick is not None:
                out[o.circuit_id] = o.flush_complete_tick - o.first_arrival_tick
        return out

    @property
    def censored_ids(self) -> List[int]:
        return [
            o.circuit_id
            for o in self.outcomes
            if o.flush_complete_tick is None
        ]


def jain_index(shares: Sequence[float]) -> float:
    """Jain's fairness index (sum s)^2 / (n * sum s^2).

    Defined for non-negative shares; the all-zero vector is treated as
    perfectly fair (1.0) so an idle run does not read as maximally unfair.
    """
    n = len(shares)
    if n == 0:
        raise ValueError("jain_index needs at least one share")
    if any(s < 0 for s in shares):
        raise ValueError("shares must be non-negative")
    total = float(sum(shares))
    if total == 0.0:
        return 1.0
    sq = sum(s * s for s in shares)
    return total * total / (n * sq)


def throughput_series(record: RunRecord, cfg: SimConfig) -> List[float]:
    """Cells per millisecond in each observation window."""
    span = cfg.throughput_window_ticks * cfg.tick_ms
    return [cells / span for _, cells in record.throughput_windows]


def latency_cdf(record: RunRecord) -> List[Tuple[int, float]]:
    """Empirical CDF of flush latency as (latency_ticks, fraction) steps.

    The fraction is over all circuits, so censored circuits leave the curve
    plateaued below 1.0; no circuit completing yields an empty list.
    """
    lat = sorted(record.flush_latency.values())
    n = record.n_circuits
    steps = []
    for i, v in enumerate(lat, start=1):
        if steps and steps[-1][0] == v:
            steps[-1] = (v, i / n)
        else:
            steps.append((v, i / n))
    return steps


def latency_percentile(record: RunRecord, pct: float) -> Optional[int]:
    """Nearest-rank percentile of flush latency over completed circuits.

    Returns None when no circuit completed.  Censored circuits are excluded
    from the rank; the censored count is visible via record.censored_ids.
    """
    if not (0 < pct <= 100):
        raise ValueError("pct must lie in (0, 100]")
    lat = sorted(record.flush_latency.values())
    if not lat:
        return None
    rank = -(-int(pct * len(lat)) // 100)  # ceil(pct/100 * k)
    rank = max(1, min(rank, len(lat)))
    return lat[rank - 1]
