"""Scenario files: YAML with three top-level sections.

sim:      SimConfig fields (missing keys take documented defaults)
circuits: list of workload entries, each {ctype, count, <WorkloadSpec keys>}
run:      max_ticks, schedulers, seeds, sweep {min, max, step}

Unknown keys anywhere are rejected; parse errors keep YAML's line/column
marks.  The resolved form (every default filled in) can be echoed back out
so a run's inputs are fully reproducible from its output directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import yaml

from .model import CircuitType, ConfigError, SimConfig
from .sched import SCHEDULER_NAMES
from .traffic import WorkloadSpec

DEFAULT_MAX_TICKS = 1200
DEFAULT_SEEDS = [1, 2, 3, 4, 5]
DEFAULT_SWEEP = {"min": 6, "max": 30, "step": 6}
# Default mix per six circuits: three web, two streaming, one bulk.
DEFAULT_CIRCUIT_GROUPS = [
    {"ctype": "web", "count": 6},
    {"ctype": "streaming", "count": 4},
    {"ctype": "bulk", "count": 2},
]

_SIM_KEYS = {f.name for f in dataclasses.fields(SimConfig)} - {"type_priority"}
_SIM_KEYS |= {"type_priority"}
_SPEC_KEYS = {f.name for f in dataclasses.fields(WorkloadSpec)}
_RANGE_SPEC_KEYS = {"web_burst_bytes", "web_gap_ticks"}


@dataclass
class RunPlan:
    max_ticks: int = DEFAULT_MAX_TICKS
    schedulers: List[str] = field(default_factory=lambda: list(SCHEDULER_NAMES))
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    sweep: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_SWEEP))


@dataclass
class Scenario:
    cfg: SimConfig
    groups: List[Tuple[WorkloadSpec, int]]
    plan: RunPlan

    def specs(self) -> List[WorkloadSpec]:
        """Expand (spec, count) groups into one WorkloadSpec per circuit."""
        out: List[WorkloadSpec] = []
        for spec, count in self.groups:
            out.extend([spec] * count)
        return out

    def specs_for_total(self, total: int) -> List[WorkloadSpec]:
        """Replicate the mix proportionally to `total` circuits.

        Counts are scaled and rounded by largest remainder so the sum is
        exact and every type keeps roughly its share of the mix.
        """
        base = sum(count for _, count in self.groups)
        if base == 0 or total <= 0:
            raise ConfigError("cannot scale an empty circuit mix")
        raw = [count * total / base for _, count in self.groups]
        counts = [int(x) for x in raw]
        order = sorted(
            range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i)
        )
        leftover = total - sum(counts)
        for i in order:
            if leftover == 0:
                break
            counts[i] += 1
            leftover -= 1
        out: List[WorkloadSpec] = []
        for (spec, _), n in zip(self.groups, counts):
            out.extend([spec] * n)
        return out


def _reject_unknown(section: str, given: dict, allowed: set) -> None:
    unknown = set(given) - allowed
    if unknown:
        raise ConfigError(
            f"{section}: unknown key(s) {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}"
        )


def _parse_sim(raw: dict) -> SimConfig:
    if not isinstance(raw, dict):
        raise ConfigError("sim: must be a mapping")
    _reject_unknown("sim", raw, _SIM_KEYS)
    kwargs = dict(raw)
    if "type_priority" in kwargs:
        tp = kwargs["type_priority"]
        if not isinstance(tp, dict):
            raise ConfigError("sim.type_priority: must be a mapping")
        try:
            kwargs["type_priority"] = {
                CircuitType(k): float(v) for k, v in tp.items()
            }
        except ValueError as e:
            raise ConfigError(f"sim.type_priority: {e}") from None
    try:
        return SimConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"sim: {e}") from None


def _parse_group(entry: dict, pos: int) -> Tuple[WorkloadSpec, int]:
    if not isinstance(entry, dict):
        raise ConfigError(f"circuits[{pos}]: must be a mapping")
    _reject_unknown(f"circuits[{pos}]", entry, _SPEC_KEYS | {"count"})
    entry = dict(entry)
    count = entry.pop("count", 1)
    if not isinstance(count, int) or count < 0:
        raise ConfigError(f"circuits[{pos}].count: must be a non-negative integer")
    if "ctype" not in entry:
        raise ConfigError(f"circuits[{pos}]: missing ctype")
    try:
        entry["ctype"] = CircuitType(entry["ctype"])
    except ValueError:
        raise ConfigError(
            f"circuits[{pos}].ctype: must be one of "
            f"{[t.value for t in CircuitType]}"
        ) from None
    for key in _RANGE_SPEC_KEYS & set(entry):
        val = entry[key]
        if (
            not isinstance(val, (list, tuple))
            or len(val) != 2
            or not all(isinstance(x, int) for x in val)
        ):
            raise ConfigError(f"circuits[{pos}].{key}: must be [lo, hi]")
        entry[key] = (val[0], val[1])
    return WorkloadSpec(**entry), count


def _parse_plan(raw: dict) -> RunPlan:
    if not isinstance(raw, dict):
        raise ConfigError("run: must be a mapping")
    _reject_unknown("run", raw, {"max_ticks", "schedulers", "seeds", "sweep"})
    plan = RunPlan()
    if "max_ticks" in raw:
        if not isinstance(raw["max_ticks"], int) or raw["max_ticks"] <= 0:
            raise ConfigError("run.max_ticks: must be a positive integer")
        plan.max_ticks = raw["max_ticks"]
    if "schedulers" in raw:
        names = raw["schedulers"]
        if not isinstance(names, list) or not names:
            raise ConfigError("run.schedulers: must be a non-empty list")
        for name in names:
            if name not in SCHEDULER_NAMES:
                raise ConfigError(
                    f"run.schedulers: unknown scheduler {name!r}; "
                    f"valid names: {', '.join(SCHEDULER_NAMES)}"
                )
        plan.schedulers = list(names)
    if "seeds" in raw:
        seeds = raw["seeds"]
        if (
            not isinstance(seeds, list)
            or not seeds
            or not all(isinstance(s, int) and 0 <= s < 2**64 for s in seeds)
        ):
            raise ConfigError("run.seeds: must be a non-empty list of u64")
        plan.seeds = list(seeds)
    if "sweep" in raw:
        sweep = raw["sweep"]
        if not isinstance(sweep, dict):
            raise ConfigError("run.sweep: must be a mapping")
        _reject_unknown("run.sweep", sweep, {"min", "max", "step"})
        merged = dict(DEFAULT_SWEEP)
        merged.update(sweep)
        if not all(isinstance(v, int) and v > 0 for v in merged.values()):
            raise ConfigError("run.sweep: min, max, step must be positive integers")
        if merged["min"] > merged["max"]:
            raise ConfigError("run.sweep: min must not exceed max")
        plan.sweep = merged
    return plan


def parse_scenario(doc: Optional[dict]) -> Scenario:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("scenario: top level must be a mapping")
    _reject_unknown("scenario", doc, {"sim", "circuits", "run"})
    cfg = _parse_sim(doc.get("sim", {}))
    raw_groups = doc.get("circuits", DEFAULT_CIRCUIT_GROUPS)
    if not isinstance(raw_groups, list) or not raw_groups:
        raise ConfigError("circuits: must be a non-empty list")
    groups = [_parse_group(entry, i) for i, entry in enumerate(raw_groups)]
    if sum(count for _, count in groups) == 0:
        raise ConfigError("circuits: total count must be positive")
    plan = _parse_plan(doc.get("run", {}))
    return Scenario(cfg=cfg, groups=groups, plan=plan)


def load_scenario(path: Optional[str]) -> Scenario:
    """Load and validate a scenario file; None loads pure defaults."""
    if path is None:
        return parse_scenario({})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from None
    except yaml.YAMLError as e:
        # YAML errors carry the offending line and column.
        raise ConfigError(f"{path}: {e}") from None
    return parse_scenario(doc)


def resolved_dict(scenario: Scenario) -> dict:
    """Fully-resolved scenario as plain data, ready to echo as YAML."""
    cfg = scenario.cfg
    sim = {
        "tick_ms": cfg.tick_ms,
        "buffer_capacity_cells": cfg.buffer_capacity_cells,
        "drain_cells_per_tick": cfg.drain_cells_per_tick,
        "alpha1": cfg.alpha1,
        "alpha2": cfg.alpha2,
        "type_priority": {
            t.value: cfg.type_priority[t] for t in CircuitType
        },
        "queue_cap_cells": cfg.queue_cap_cells,
        "ewma_half_life_ms": cfg.ewma_half_life_ms,
        "throughput_window_ticks": cfg.throughput_window_ticks,
        "rate_floor": cfg.rate_floor,
        "seed": cfg.seed,
    }
    circuits = []
    for spec, count in scenario.groups:
        entry = {"ctype": spec.ctype.value, "count": count}
        if spec.ctype is CircuitType.WEB:
            entry["web_burst_bytes"] = list(spec.web_burst_bytes)
            entry["web_gap_ticks"] = list(spec.web_gap_ticks)
            entry["arrival_rate_cells_per_tick"] = spec.arrival_rate_cells_per_tick
        elif spec.ctype is CircuitType.BULK:
            entry["bulk_total_bytes"] = spec.bulk_total_bytes
            entry["arrival_rate_cells_per_tick"] = spec.arrival_rate_cells_per_tick
        else:
            entry["stream_rate_cells_per_tick"] = spec.stream_rate_cells_per_tick
            entry["stream_total_bytes"] = spec.stream_total_bytes
        circuits.append(entry)
    plan = scenario.plan
    return {
        "sim": sim,
        "circuits": circuits,
        "run": {
            "max_ticks": plan.max_ticks,
            "schedulers": list(plan.schedulers),
            "seeds": list(plan.seeds),
            "sweep": dict(plan.sweep),
        },
    }


def dump_resolved(scenario: Scenario) -> str:
    return yaml.safe_dump(resolved_dict(scenario), sort_keys=True)
