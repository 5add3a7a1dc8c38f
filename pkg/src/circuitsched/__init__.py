"""circuitsched: discrete-time relay circuit-scheduler simulator."""

from .engine import build_state, run, step
from .metrics import (
    CircuitOutcome,
    RunRecord,
    jain_index,
    latency_cdf,
    latency_percentile,
    throughput_series,
)
from .model import (
    CELL_BYTES,
    CircuitState,
    CircuitType,
    ConfigError,
    ConnectionState,
    ScheduleDecision,
    SimConfig,
    free_space,
    priority,
)
from .optsched import (
    OracleSizeError,
    WaterfillProblem,
    log_utility,
    optpf_schedule,
    oracle_solve,
    waterfill_solve,
)
from .sched import (
    RateTracker,
    SCHEDULER_NAMES,
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
from .scenario import Scenario, load_scenario, parse_scenario
from .traffic import TrafficSource, WorkloadSpec, bytes_to_cells

__version__ = "0.1.0"
