"""Experiment configuration, orchestration, and output files.

Config files are flat ``key = value`` lines; ``#`` starts a comment.  Example::

    protocol = adp
    n = 32
    C = 4
    adversary = fullprefix
    T_sweep = 2^12..2^18 step 2
    seeds = 20

Per-run seeds come from :func:`jamnet.rng.derive_seed` applied to the base
seed and the seed index, so serial and parallel runs agree.
"""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .adversaries import KINDS, AdversarySpec, load_schedule
from .analysis import RunRecord, loglog_slope, runs_csv, scaling_dat, scaling_points, summarize_batch
from .engine import ProtocolSpec, run_execution
from .protocols import PHASE_MULTIPLIER
from .rng import derive_seed

SEED_ENV = "JAMNET_SEED"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class UnknownKeyError(ConfigError):
    pass


class MissingKeyError(ConfigError):
    pass


class OutOfRangeError(ConfigError):
    pass


@dataclass
class ExperimentConfig:
    protocol: str
    n: int
    C: int
    adversary: str
    seeds: list  # explicit seed values
    T: Optional[int] = None
    T_sweep: list = field(default_factory=list)
    density: float = 0.0
    schedule_file: Optional[str] = None
    source_only: bool = False
    a: Optional[float] = None
    b: int = PHASE_MULTIPLIER
    slot_limit: int = 10**7
    trace_mode: str = "compact"
    output_dir: str = "out"
    base_seed: int = 0
    engine: str = "auto"
    source: int = 0
    workers: int = 1

    @property
    def protocol_spec(self) -> ProtocolSpec:
        return ProtocolSpec(self.protocol, self.a, self.b)

    def adversary_spec(self, T: Optional[int]) -> AdversarySpec:
        kind = self.adversary
        if kind == "nojam":
            return AdversarySpec.nojam()
        if kind == "fullprefix":
            return AdversarySpec.full_prefix(T)
        if kind == "random":
            return AdversarySpec.random_budgeted(self.density, T)
        if kind == "threshold":
            return AdversarySpec.threshold(T, self.source_only)
        return AdversarySpec.oblivious_schedule(load_schedule(self.schedule_file), T)

    def budgets(self, sweep: bool) -> list:
        if self.adversary == "nojam":
            return [0]
        if sweep:
            if not self.T_sweep:
                raise MissingKeyError("T_sweep", "a sweep needs T_sweep")
            return list(self.T_sweep)
        if self.T_sweep and self.T is None:
            return [self.T_sweep[0]]
        return [self.T]


REQUIRED = ("protocol", "n", "C", "adversary", "seeds")
OPTIONAL = ("T", "T_sweep", "density", "schedule_file", "source_only", "a", "b", "slot_limit",
            "trace_mode", "output_dir", "seed", "engine", "source", "workers")


def _int(key: str, text: str, low: Optional[int] = None) -> int:
    m = re.fullmatch(r"\s*(\d+)\s*\^\s*(\d+)\s*", text)
    try:
        value = int(m.group(1)) ** int(m.group(2)) if m else int(text.replace("_", ""))
    except ValueError:
        raise OutOfRangeError(key, f"expected an integer, got {text!r}") from None
    if low is not None and value < low:
        raise OutOfRangeError(key, f"must be >= {low}, got {value}")
    return value


def _budget(key: str, text: str) -> Optional[int]:
    if text.strip().lower() in ("inf", "unlimited"):
        return None
    return _int(key, text, 0)


def parse_sweep(text: str) -> list:
    """``2^10..2^20`` (exponent step 1), ``2^12..2^18 step 2``, or a comma list (``inf`` allowed)."""
    m = re.fullmatch(r"\s*(\d+)\^(\d+)\s*\.\.\s*(\d+)\^(\d+)\s*(?:step\s+(\d+))?\s*", text)
    if m:
        base, lo, base2, hi = (int(g) for g in m.groups()[:4])
        step = int(m.group(5) or 1)
        if base != base2 or lo > hi or step < 1:
            raise OutOfRangeError("T_sweep", f"bad range {text!r}")
        return [base**e for e in range(lo, hi + 1, step)]
    values = [_budget("T_sweep", tok) for tok in text.split(",") if tok.strip()]
    if not values:
        raise OutOfRangeError("T_sweep", "empty sweep")
    return values


def _bool(key: str, text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise OutOfRangeError(key, f"expected a boolean, got {text!r}")


def parse_config(text: str, env: Optional[dict] = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in REQUIRED and key not in OPTIONAL:
            raise UnknownKeyError(key, "unknown key")
        raw[key] = value
    for key in REQUIRED:
        if key not in raw:
            raise MissingKeyError(key, "required key is missing")

    protocol = raw["protocol"].lower()
    if protocol not in ("adp", "advadp"):
        raise OutOfRangeError("protocol", f"expected adp or advadp, got {raw['protocol']!r}")
    n = _int("n", raw["n"])
    if n < 2:
        raise OutOfRangeError("n", "broadcast needs n >= 2")
    C = _int("C", raw["C"], 1)
    adversary = raw["adversary"].lower()
    if adversary not in KINDS:
        raise OutOfRangeError("adversary", f"expected one of {', '.join(KINDS)}")

    base_seed = _int("seed", raw.get("seed", "0"), 0)
    if env.get(SEED_ENV):
        base_seed = _int(SEED_ENV, env[SEED_ENV], 0)
    seeds_text = raw["seeds"]
    if "," in seeds_text:
        seeds = [_int("seeds", s, 0) for s in seeds_text.split(",") if s.strip()]
    else:
        count = _int("seeds", seeds_text, 1)
        seeds = [derive_seed(base_seed, k) for k in range(count)]

    cfg = ExperimentConfig(protocol, n, C, adversary, seeds, base_seed=base_seed)
    if "T" in raw:
        cfg.T = _budget("T", raw["T"])
    if "T_sweep" in raw:
        cfg.T_sweep = parse_sweep(raw["T_sweep"])
    if "density" in raw:
        try:
            cfg.density = float(raw["density"])
        except ValueError:
            raise OutOfRangeError("density", f"expected a number, got {raw['density']!r}") from None
        if not 0.0 <= cfg.density <= 1.0:
            raise OutOfRangeError("density", "must lie in [0, 1]")
    if "schedule_file" in raw:
        cfg.schedule_file = raw["schedule_file"]
    if "source_only" in raw:
        cfg.source_only = _bool("source_only", raw["source_only"])
    if "a" in raw:
        try:
            cfg.a = float(raw["a"])
        except ValueError:
            raise OutOfRangeError("a", f"expected a number, got {raw['a']!r}") from None
        if cfg.a < 1:
            raise OutOfRangeError("a", "must be >= 1")
        if cfg.a.is_integer():
            cfg.a = int(cfg.a)
    if "b" in raw:
        cfg.b = _int("b", raw["b"])
        if cfg.b != PHASE_MULTIPLIER:
            raise OutOfRangeError("b", f"b is fixed at {PHASE_MULTIPLIER} by the algorithm")
    if "slot_limit" in raw:
        cfg.slot_limit = _int("slot_limit", raw["slot_limit"], 1)
    if "trace_mode" in raw:
        cfg.trace_mode = raw["trace_mode"].lower()
        if cfg.trace_mode not in ("full", "compact"):
            raise OutOfRangeError("trace_mode", "expected full or compact")
    if "output_dir" in raw:
        cfg.output_dir = raw["output_dir"]
    if "engine" in raw:
        cfg.engine = raw["engine"].lower()
        if cfg.engine not in ("auto", "slot", "aggregate"):
            raise OutOfRangeError("engine", "expected auto, slot or aggregate")
    if "source" in raw:
        cfg.source = _int("source", raw["source"], 0)
        if cfg.source >= n:
            raise OutOfRangeError("source", f"must be < n = {n}")
    if "workers" in raw:
        cfg.workers = _int("workers", raw["workers"], 1)

    # cross-field checks
    if adversary in ("fullprefix", "random", "threshold") and "T" not in raw and "T_sweep" not in raw:
        raise MissingKeyError("T", f"the {adversary} adversary needs T or T_sweep")
    if adversary == "threshold":
        budgets = ([cfg.T] if "T" in raw else []) + cfg.T_sweep
        if any(b is None or b < 1 for b in budgets):
            raise OutOfRangeError("T", "strategy S needs a finite budget T >= 1")
    if adversary == "random" and "density" not in raw:
        raise MissingKeyError("density", "the random adversary needs a density")
    if adversary == "schedule" and cfg.schedule_file is None:
        raise MissingKeyError("schedule_file", "the schedule adversary needs schedule_file")
    if cfg.trace_mode == "full" and cfg.engine == "aggregate":
        raise OutOfRangeError("trace_mode", "aggregate sampling only produces compact traces")
    return cfg


def load_config(path, env: Optional[dict] = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), env)


# ---------------------------------------------------------------- orchestration


@dataclass(frozen=True)
class Job:
    run: int
    T: Optional[int]
    seed: int


def _execute(args):
    cfg, job = args
    trace = run_execution(cfg.protocol_spec, cfg.adversary_spec(job.T), cfg.n, cfg.C, job.seed,
                          cfg.slot_limit, source=cfg.source, trace_mode=cfg.trace_mode, engine=cfg.engine)
    return job, trace


def plan_jobs(cfg: ExperimentConfig, sweep: bool) -> list:
    jobs = []
    for T in cfg.budgets(sweep):
        for seed in cfg.seeds:
            jobs.append(Job(len(jobs), T, seed))
    return jobs


@dataclass
class ExperimentResult:
    records: list
    summary: object
    output_dir: Path
    files: list

    @property
    def safety_ok(self) -> bool:
        return self.summary.safety_violations == 0


def _write_manifest(out: Path, files: list, status: str):
    (out / "manifest.json").write_text(json.dumps({"status": status, "files": files}, indent=1) + "\n")


def run_experiment(cfg: ExperimentConfig, sweep: bool = False, workers: Optional[int] = None,
                   write_traces: bool = True) -> ExperimentResult:
    out = Path(cfg.output_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    jobs = plan_jobs(cfg, sweep)
    workers = cfg.workers if workers is None else workers
    files: list = []
    records = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = pool.map(_execute, [(cfg, j) for j in jobs])
                for job, trace in results:
                    records.append(_collect(out, job, trace, files, write_traces))
        else:
            for job in jobs:
                records.append(_collect(out, *_execute((cfg, job)), files, write_traces))
        summary = emit_outputs(records, out, cfg, files)
    except OSError:
        _write_manifest(out, files, "aborted")
        raise
    _write_manifest(out, files, "complete")
    return ExperimentResult(records, summary, out, files)


def _collect(out: Path, job: Job, trace, files: list, write_traces: bool) -> RunRecord:
    if write_traces:
        name = f"traces/run{job.run:05d}_seed{job.seed}.jsonl"
        trace.write(out / name)
        files.append(name)
    return RunRecord.from_trace(job.run, trace)


def emit_outputs(records, out: Path, cfg: Optional[ExperimentConfig] = None, files: Optional[list] = None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = [] if files is None else files
    summary = summarize_batch(records)
    cost_pts = scaling_points(records, "max_cost")
    time_pts = scaling_points(records, "slots")
    if len(cost_pts) >= 3:
        summary.slope_fits["max_cost_vs_T"] = loglog_slope([(max(T, 1), y) for T, y in cost_pts])
        summary.slope_fits["slots_vs_T"] = loglog_slope([(max(T, 1), y) for T, y in time_pts])
    (out / "runs.csv").write_text(runs_csv(records))
    files.append("runs.csv")
    (out / "scaling.dat").write_text(scaling_dat(cost_pts))
    files.append("scaling.dat")
    meta = {"generated": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "version": __version__}
    if cfg is not None:
        meta["config"] = {k: v for k, v in asdict(cfg).items() if k != "seeds"}
        meta["config"]["seeds"] = len(cfg.seeds)
    (out / "summary.json").write_text(json.dumps({"metadata": meta, "summary": summary.to_json()},
                                                 indent=1, default=str) + "\n")
    files.append("summary.json")
    return summary
