"""Optimization-based proportional-fair allocation.

Each tick solves

    maximize   sum_i log(1 + a_i * u_i)        a_i = gamma_i / delta_t
    subject to sum_i u_i <= budget,  0 <= u_i <= zeta_i

where u_i is the cell grant for circuit i, budget is the free buffer space
and zeta_i the queue depth.  The objective is concave and separable, so the
KKT conditions give the exact solution in water-filling form:

    u_i = clamp(1/nu - 1/a_i, 0, zeta_i)

for the unique multiplier nu >= 0 at which the grants exactly exhaust
min(budget, sum zeta).  waterfill_solve finds nu by bisection; oracle_solve
re-solves the same problem by brute force (grid search) or by projected
gradient ascent so the two can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log1p
from typing import List, Sequence

import numpy as np

from .model import ScheduleDecision, SimConfig, integerize, priority
from .sched import Scheduler


class OracleSizeError(ValueError):
    """Grid-mode oracle requested for a problem with more than 4 circuits."""


@dataclass(frozen=True)
class WaterfillProblem:
    gains: tuple          # a_i > 0, one per circuit
    caps: tuple           # zeta_i >= 0, queue depths
    budget: float         # free buffer space, >= 0

    def __post_init__(self) -> None:
        if len(self.gains) != len(self.caps):
            raise ValueError("gains and caps must have equal length")
        if any(a <= 0 for a in self.gains):
            raise ValueError("gains must be positive")
        if any(c < 0 for c in self.caps):
            raise ValueError("caps must be non-negative")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")


def log_utility(u: Sequence[float], gains: Sequence[float]) -> float:
    """Objective value sum_i log(1 + a_i * u_i)."""
    return sum(log1p(a * x) for a, x in zip(gains, u))


def waterfill_solve(p: WaterfillProblem, tol: float = 1e-9) -> List[float]:
    """Exact KKT water-filling.

    Bisects the water level w = 1/nu: every circuit above water receives
    u_i = w - 1/a_i, clamped below by 0 and above by its queue.  sum u(w) is
    continuous, non-decreasing and piecewise linear in w, so bisection drives
    the budget residual below tol quickly; 200 iterations bound the loop for
    gains anywhere in [1e-6, 1e6].
    """
    n = len(p.gains)
    if n == 0:
        return []
    caps = [float(c) for c in p.caps]
    if p.budget <= 0:
        return [0.0] * n
    if sum(caps) <= p.budget:
        return caps
    inv = [1.0 / a for a in p.gains]
    # at w = max(inv) + budget + 1 every circuit is above water, so the sum
    # reaches min(cap_i, budget + 1) per circuit and must cross the budget
    lo, hi = 0.0, max(inv) + p.budget + 1.0
    u = [0.0] * n
    for _ in range(200):
        w = 0.5 * (lo + hi)
        total = 0.0
        for i in range(n):
            x = w - inv[i]
            if x < 0.0:
                x = 0.0
            elif x > caps[i]:
                x = caps[i]
            u[i] = x
            total += x
        resid = total - p.budget
        if abs(resid) <= tol:
            return u
        if resid > 0.0:
            hi = w
        else:
            lo = w
    return u


def _project_box_budget(
    v: np.ndarray, caps: np.ndarray, budget: float
) -> np.ndarray:
    """Euclidean projection onto {0 <= u <= caps, sum u <= budget}.

    When the budget binds the projection is clip(v - mu, 0, caps) for the
    shift mu at which the sum equals the budget.  The sum is piecewise
    linear and non-increasing in mu with breakpoints at v_i and v_i - c_i,
    so the crossing segment is found exactly and interpolated.
    """
    u = np.clip(v, 0.0, caps)
    if u.sum() <= budget:
        return u
    bps = np.unique(np.concatenate([v, v - caps, [0.0]]))
    bps = bps[bps >= 0.0]
    sums = np.clip(v[None, :] - bps[:, None], 0.0, caps).sum(axis=1)
    # sums is non-increasing along bps and starts above budget at mu = 0, so
    # searchsorted lands on k >= 1 with sums[k-1] > budget >= sums[k]
    k = int(np.searchsorted(-sums, -budget))
    lo_mu, hi_mu = float(bps[k - 1]), float(bps[k])
    lo_sum = float(sums[k - 1])
    # the interior set is constant on the open segment; sample its midpoint
    mid = 0.5 * (lo_mu + hi_mu)
    interior = int(np.sum((v - mid > 0.0) & (v - mid < caps)))
    mu = lo_mu + (lo_sum - budget) / max(interior, 1)
    return np.clip(v - mu, 0.0, caps)


def oracle_solve(
    p: WaterfillProblem, grid: int = 21, mode: str = "auto"
) -> List[float]:
    """Independent reference solver for WaterfillProblem.

    Grid mode enumerates lambda on a uniform grid per circuit (radially
    rescaling any infeasible point onto the budget plane) and returns the
    best feasible point; it is exhaustive but only tractable for <= 4
    circuits.  Gradient mode runs projected gradient ascent from a feasible
    interior point until the iterate stops moving.  mode="auto" picks grid
    for small problems and gradient otherwise.
    """
    n = len(p.gains)
    if n == 0:
        return []
    if mode == "auto":
        mode = "grid" if n <= 4 else "gradient"
    if mode == "grid":
        if n > 4:
            raise OracleSizeError(
                f"grid oracle supports at most 4 circuits, got {n}"
            )
        if grid < 2:
            raise ValueError("grid must be at least 2")
        caps = np.asarray(p.caps, dtype=float)
        gains = np.asarray(p.gains, dtype=float)
        axes = [np.linspace(0.0, c, grid) for c in caps]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        totals = pts.sum(axis=1)
        over = totals > p.budget
        if p.budget == 0.0:
            pts[over] = 0.0
        else:
            scale = np.where(over, p.budget / np.where(totals > 0, totals, 1.0), 1.0)
            pts = pts * scale[:, None]
        obj = np.log1p(pts * gains).sum(axis=1)
        best = int(np.argmax(obj))
        return [float(x) for x in pts[best]]
    if mode != "gradient":
        raise ValueError(f"unknown oracle mode {mode!r}")
    caps = np.asarray(p.caps, dtype=float)
    gains = np.asarray(p.gains, dtype=float)
    if p.budget <= 0 or caps.sum() == 0:
        return [0.0] * n
    u = _project_box_budget(caps * min(1.0, p.budget / caps.sum()), caps, p.budget)

    def obj(x):
        return float(np.log1p(gains * x).sum())

    # Projected gradient ascent with backtracking; the step adapts so badly
    # scaled gains do not stall progress.
    step = 1.0 / float(np.max(gains) ** 2)
    best = obj(u)
    for _ in range(20_000):
        grad = gains / (1.0 + gains * u)
        t = step
        nxt = u
        for _try in range(60):
            cand = _project_box_budget(u + t * grad, caps, p.budget)
            val = obj(cand)
            if val >= best:
                nxt, best = cand, val
                step = t * 2.0  # grow again after a success
                break
            t *= 0.5
        moved = float(np.max(np.abs(nxt - u)))
        u = nxt
        if moved < 1e-10:
            break
    return [float(x) for x in u]


def optpf_schedule(
    circuits, free: int, cfg: SimConfig
) -> ScheduleDecision:
    """One tick of the optimization-based scheduler.

    Builds the water-filling problem over non-empty circuits with gains
    gamma_i / delta_t, solves it exactly, and converts the real grants to
    whole cells with the shared rounding rule.
    """
    n = len(circuits)
    queues = [c.queue_cells for c in circuits]
    lambdas = [0.0] * n
    if free <= 0 or sum(queues) == 0:
        return ScheduleDecision(lambdas, [0] * n)
    idx = [i for i in range(n) if queues[i] > 0]
    prob = WaterfillProblem(
        gains=tuple(priority(circuits[i], cfg) / cfg.tick_ms for i in idx),
        caps=tuple(queues[i] for i in idx),
        budget=float(free),
    )
    u = waterfill_solve(prob)
    targets = [0.0] * n
    for k, i in enumerate(idx):
        targets[i] = u[k]
        lambdas[i] = u[k] / queues[i]
    cells = integerize(targets, queues, free)
    return ScheduleDecision(lambdas, cells)


class OptPfScheduler(Scheduler):
    name = "optpf"

    def schedule(self, circuits, trackers, free, cfg) -> ScheduleDecision:
        return optpf_schedule(circuits, free, cfg)
