"""Cost accounting, competitiveness checks, batch statistics, and log-log fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

CSV_HEADER = ("run", "seed", "n", "C", "T_budget", "T_spent", "max_cost", "mean_cost", "slots",
              "success", "safety_ok")


def competitiveness_check(trace, rho: Callable[[float], float], tau: float) -> bool:
    """max_u cost_u <= rho(T) + tau, with T Eve's realized spend."""
    return trace.max_cost <= rho(trace.eve_spend) + tau


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float
    points: int


def loglog_slope(points) -> SlopeFit:
    """OLS on (log2 x, log2 y)."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least three points")
    xs = np.array([p[0] for p in pts], dtype=float)
    ys = np.array([p[1] for p in pts], dtype=float)
    if (xs <= 0).any() or (ys <= 0).any():
        raise ValueError("coordinates must be positive")
    if len(set(xs.tolist())) < 2:
        raise ValueError("need distinct x values")
    fit = stats.linregress(np.log2(xs), np.log2(ys))
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), len(pts))


@dataclass
class RunRecord:
    run: int
    seed: int
    n: int
    C: int
    T_budget: Optional[int]
    T_spent: int
    max_cost: int
    mean_cost: float
    slots: int
    success: bool
    safety_ok: bool
    limit_exhausted: bool = False
    premature_halts: int = 0

    @classmethod
    def from_trace(cls, run: int, trace) -> "RunRecord":
        return cls(run, trace.seed, trace.n, trace.C, trace.budget, trace.eve_spend, trace.max_cost,
                   trace.mean_cost, trace.slots_run, trace.success, trace.safety_ok,
                   trace.limit_exhausted, trace.premature_halts)

    def csv_row(self) -> list:
        budget = "inf" if self.T_budget is None else self.T_budget
        return [self.run, self.seed, self.n, self.C, budget, self.T_spent, self.max_cost,
                f"{self.mean_cost:.6g}", self.slots, int(self.success), int(self.safety_ok)]


@dataclass
class BatchSummary:
    runs: list
    success_rate: float
    cost_quantiles: dict
    max_node_cost: int
    safety_violations: int
    flagged: list = field(default_factory=list)  # run ids that failed or hit the slot limit
    slope_fits: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d["slope_fits"] = {k: asdict(v) if isinstance(v, SlopeFit) else v for k, v in self.slope_fits.items()}
        return d


def summarize_batch(records: Sequence[RunRecord]) -> BatchSummary:
    if not records:
        return BatchSummary([], 0.0, {}, 0, 0)
    costs = np.array([r.max_cost for r in records], dtype=float)
    quantiles = {str(q): float(np.percentile(costs, q)) for q in (50, 90, 99)}
    flagged = [r.run for r in records if not r.success or r.limit_exhausted or not r.safety_ok]
    return BatchSummary(
        runs=list(records),
        success_rate=sum(r.success for r in records) / len(records),
        cost_quantiles=quantiles,
        max_node_cost=int(costs.max()),
        safety_violations=sum(not r.safety_ok for r in records),
        flagged=flagged,
    )


def runs_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def scaling_points(records: Sequence[RunRecord], y: str = "max_cost") -> list:
    """Median of ``y`` per budget T, sorted by T (unbounded budgets are skipped)."""
    by_T: dict = {}
    for r in records:
        if r.T_budget is not None:
            by_T.setdefault(r.T_budget, []).append(getattr(r, y))
    return [(T, float(np.median(v))) for T, v in sorted(by_T.items())]


def scaling_dat(points) -> str:
    lines = ["# T median_max_cost"]
    lines += [f"{T} {y:.10g}" for T, y in points]
    return "\n".join(lines) + "\n"
