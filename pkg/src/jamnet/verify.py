"""Acceptance checks shared by ``jamnet verify`` and the test-suite.

Each ``criterion_*`` function runs one check at its stated size and tolerance
and returns a :class:`CriterionResult`; nothing here relaxes a threshold.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .adversaries import (AdversarySpec, JamSeverityEvent, ProbabilityProfile, classify_jamming,
                          success_probability)
from .analysis import loglog_slope
from .coupling import (CoupledGenerator, analytic_probs, behavior_cell, behavior_cell_probs,
                       channel_permutation, sandwich_bounds, permute_behavior, permute_jamset, adapt_trace)
from .engine import ProtocolSpec, run_execution
from .protocols import adp_first_epoch, adp_schedule
from .radio import NOISE, SILENCE, Action, Feedback, JamSet, Payload, SlotBehavior, resolve_slot
from .rng import derive_seed

VERIFY_SEED = 20240601


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] criterion {self.number:>2}: {self.title} ({self.seconds:.2f} s) {self.detail}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------- 1


def reference_feedback(behaviors, jam: JamSet) -> list:
    """Straight-line channel rules, node by node."""
    out = []
    for b in behaviors:
        if b.action is not Action.LISTEN:
            out.append(None)
            continue
        if b.channel not in jam.unjammed:
            out.append(NOISE)
            continue
        count, payload = 0, None
        for other in behaviors:
            if other.action is Action.SEND and other.channel == b.channel:
                count += 1
                payload = other.payload
        if count == 0:
            out.append(SILENCE)
        elif count == 1:
            out.append(Feedback.received(payload))
        else:
            out.append(NOISE)
    return out


def all_behaviors(C: int) -> list:
    return ([SlotBehavior.send(ch, pl) for ch in range(1, C + 1) for pl in Payload]
            + [SlotBehavior.listen(ch) for ch in range(1, C + 1)]
            + [SlotBehavior.idle(ch) for ch in range(1, C + 1)])


def all_jamsets(C: int) -> list:
    chans = range(1, C + 1)
    return [JamSet(C, frozenset(s)) for r in range(C + 1) for s in itertools.combinations(chans, r)]


def criterion_1(max_n: int = 4, max_C: int = 3) -> CriterionResult:
    t = time.perf_counter()
    cases = mismatches = 0
    for C in range(1, max_C + 1):
        opts, jams = all_behaviors(C), all_jamsets(C)
        for n in range(1, max_n + 1):
            for beh in itertools.product(opts, repeat=n):
                for jam in jams:
                    cases += 1
                    if resolve_slot(beh, jam) != reference_feedback(beh, jam):
                        mismatches += 1
    elapsed = time.perf_counter() - t
    ok = mismatches == 0 and elapsed < 1.0
    return CriterionResult(1, "feedback oracle equivalence", ok,
                           f"cases={cases} mismatches={mismatches} runtime={elapsed:.3f}s (limit 1 s)",
                           data={"cases": cases, "mismatches": mismatches, "runtime": elapsed})


# ---------------------------------------------------------------- 2

GRAIN = 64  # working probabilities are multiples of 1/GRAIN


class BruteForce:
    """Exact enumeration of all joint slot outcomes for a profile with p = k/GRAIN.

    Each node's outcome is one of ``2C + 1`` cells (send on ch, listen on ch,
    idle) with integer weight over the common denominator ``GRAIN * C``.
    """

    def __init__(self, ks, C: int):
        self.ks, self.C, self.n = list(ks), C, len(ks)
        O = 2 * C + 1
        idx = np.indices((O,) * self.n).reshape(self.n, -1).T  # (O^n, n)
        self.idx = idx
        w = np.empty((self.n, O), dtype=np.int64)
        for u, k in enumerate(self.ks):
            w[u, : 2 * C] = k
            w[u, 2 * C] = C * (GRAIN - 2 * k)
        self.weights = np.prod(w[np.arange(self.n)[None, :], idx], axis=1)
        self.denominator = (GRAIN * C) ** self.n

    def sends_on(self, ch: int) -> np.ndarray:
        return self.idx == (ch - 1)

    def listens_on(self, ch: int) -> np.ndarray:
        return self.idx == self.C + ch - 1

    def prob(self, mask: np.ndarray) -> Fraction:
        return Fraction(int(self.weights[mask].sum()), self.denominator)

    def listening_probs(self, u: int, informed, ch: int = 1):
        """(P(silence), P(hear m)) for u listening on unjammed ``ch``.

        u's own draw is independent of the others, so no conditioning is needed.
        """
        snd = self.sends_on(ch)
        others = np.ones(self.n, dtype=bool)
        others[u] = False
        count = snd[:, others].sum(axis=1)
        single_informed = (count == 1) & (snd[:, others] & np.asarray(informed)[others]).any(axis=1)
        return self.prob(count == 0), self.prob(single_informed)

    def success(self, informed, ch: int) -> Fraction:
        snd = self.sends_on(ch)
        lst = self.listens_on(ch)
        informed = np.asarray(informed)
        one_sender = snd.sum(axis=1) == 1
        sender_informed = (snd & informed).any(axis=1)
        receiver = (lst & ~informed).any(axis=1)
        return self.prob(one_sender & sender_informed & receiver)


def random_profile(r: random.Random, max_n: int = 6, max_C: int = 3):
    n = r.randint(2, max_n)
    C = r.randint(1, max_C)
    budget = GRAIN // 2 * C  # sum of k <= 32C keeps P_V <= 1/2
    ks = []
    for _ in range(n):
        k = r.randint(0, min(GRAIN // 2, budget))
        ks.append(k)
        budget -= k
    r.shuffle(ks)
    informed = [r.random() < 0.5 for _ in range(n)]
    if not any(informed):
        informed[r.randrange(n)] = True
    return ks, C, informed


def criterion_2(count: int = 100, seed: int = VERIFY_SEED) -> CriterionResult:
    t = time.perf_counter()
    r = random.Random(seed)
    mismatches, sandwich_fail, checks = [], 0, 0
    for case in range(count):
        ks, C, informed = random_profile(r)
        profile = ProbabilityProfile(C, tuple(Fraction(k, GRAIN) for k in ks), tuple(informed))
        oracle = BruteForce(ks, C)
        for u in range(len(ks)):
            p_c, p_m = analytic_probs(profile, u)
            for ch in range(1, C + 1):
                checks += 1
                if (p_c, p_m) != oracle.listening_probs(u, informed, ch):
                    mismatches.append((case, "analytic", u, ch))
            b = sandwich_bounds(profile, u)
            if not b.holds(p_c, p_m):
                sandwich_fail += 1
        for ch in range(1, C + 1):
            checks += 1
            if success_probability(profile, ch) != oracle.success(informed, ch):
                mismatches.append((case, "success", ch))
    elapsed = time.perf_counter() - t
    ok = not mismatches and sandwich_fail == 0 and elapsed < 10.0
    return CriterionResult(2, "analytic-oracle agreement", ok,
                           f"profiles={count} checks={checks} mismatches={len(mismatches)} "
                           f"sandwich_failures={sandwich_fail} runtime={elapsed:.2f}s (limit 10 s)",
                           data={"mismatches": mismatches[:10], "runtime": elapsed})


# ---------------------------------------------------------------- 3


def criterion_3(seeds: int = 100, n: int = 32, C: int = 4, a: int = 2) -> CriterionResult:
    first = adp_first_epoch(n, C)
    horizon = adp_schedule(first, n, C, a).R + adp_schedule(first + 1, n, C, a).R
    proto = ProtocolSpec("adp", a)
    good = unsafe = 0
    for k in range(seeds):
        tr = run_execution(proto, AdversarySpec.nojam(), n, C, derive_seed(VERIFY_SEED, 3, k),
                           slot_limit=horizon)
        if tr.success and all(o.halted_at <= horizon for o in tr.outcome):
            good += 1
        unsafe += tr.uninformed_halts + tr.premature_halts
    rate = good / seeds
    ok = rate >= 0.95 and unsafe == 0
    return CriterionResult(3, "unjammed completion within two epochs", ok,
                           f"completed={good}/{seeds} ({rate:.0%}, need >= 95%) "
                           f"halt-while-uninformed={unsafe}",
                           data={"rate": rate, "unsafe": unsafe})


# ---------------------------------------------------------------- 4 and 5

SWEEP_T = (2**12, 2**14, 2**16, 2**18)


def scaling_sweep(seeds: int = 20, n: int = 32, C: int = 4, a: int = 2, budgets=SWEEP_T) -> dict:
    """Completion slots and max node cost under full-prefix jamming, per (T, seed)."""
    proto = ProtocolSpec("adp", a)
    rows = []
    for T in budgets:
        for k in range(seeds):
            tr = run_execution(proto, AdversarySpec.full_prefix(T), n, C, derive_seed(VERIFY_SEED, 4, k))
            rows.append((T, tr.slots_run, tr.max_cost, tr.success))
    base = [run_execution(proto, AdversarySpec.nojam(), n, C, derive_seed(VERIFY_SEED, 4, k)).slots_run
            for k in range(seeds)]
    return {"rows": rows, "tau_time": float(np.median(base)), "C": C}


def criterion_4(sweep: dict) -> CriterionResult:
    C, tau = sweep["C"], sweep["tau_time"]
    rows = sweep["rows"]
    region = [(T, s) for T, s, _, _ in rows if T / C >= tau]
    every = [(T, s) for T, s, _, _ in rows]
    overall = loglog_slope(every)
    budgets_in = sorted({T for T, _ in region})
    if len(budgets_in) >= 3:
        fit = loglog_slope(region)
        ok = abs(fit.slope - 1.0) <= 0.15
        detail = f"slope={fit.slope:.3f} over T in {budgets_in} (target 1.0 +- 0.15)"
    else:
        ok = False
        detail = (f"only {len(budgets_in)} budget(s) with T/C >= tau_time={tau:.0f}; "
                  f"fit needs 3. slope over all budgets={overall.slope:.3f} (target 1.0 +- 0.15)")
    return CriterionResult(4, "time scaling under full-prefix jamming", ok, detail,
                           data={"overall_slope": overall.slope, "region_budgets": budgets_in, "tau": tau})


def criterion_5(sweep: dict) -> CriterionResult:
    fit = loglog_slope([(T, c) for T, _, c, _ in sweep["rows"]])
    ok = abs(fit.slope - 0.5) <= 0.15
    return CriterionResult(5, "energy scaling under full-prefix jamming", ok,
                           f"slope={fit.slope:.3f} r2={fit.r2:.3f} (target 0.5 +- 0.15)",
                           data={"slope": fit.slope})


# ---------------------------------------------------------------- 6 and 7

ADV_DENSITY = 0.25
ADV_BUDGET = 2**40


def advadp_batch(seeds: int = 50, n: int = 16, C: int = 2, a: int = 1) -> list:
    proto = ProtocolSpec("advadp", a)
    traces = []
    for spec in (AdversarySpec.nojam(), AdversarySpec.random_budgeted(ADV_DENSITY, ADV_BUDGET)):
        for k in range(seeds):
            traces.append(run_execution(proto, spec, n, C, derive_seed(VERIFY_SEED, 6, k),
                                        slot_limit=2**62, engine="aggregate"))
    return traces


def criterion_6(traces: list, n: int = 16) -> CriterionResult:
    violations, checked, worst = 0, 0, 1.0
    for tr in traces:
        for e in tr.events:
            if e["type"] == "phase" and e["super_epoch"] > math.log2(n):
                checked += 1
                ratio = e["p_max"] / e["p_min"]
                worst = max(worst, ratio)
                if ratio > 2.0:
                    violations += 1
    done = sum(tr.success for tr in traces)
    ok = violations == 0 and checked > 0
    return CriterionResult(6, "AdvAdp bounded difference", ok,
                           f"phases={checked} violations={violations} worst ratio={worst:.3f} "
                           f"runs completed={done}/{len(traces)}",
                           data={"violations": violations, "worst": worst})


def criterion_7(traces: list, n: int = 16) -> CriterionResult:
    bad_est, helpers, bad_halt, halts = 0, 0, 0, 0
    lo, hi = n / 256, 4 * n
    for tr in traces:
        for e in tr.events:
            if e["type"] == "helper":
                helpers += 1
                if not lo <= e["n_estimate"] <= hi:
                    bad_est += 1
            elif e["type"] == "halt":
                halts += 1
                if not e["all_helper"]:
                    bad_halt += 1
    ok = bad_est == 0 and bad_halt == 0 and helpers > 0
    return CriterionResult(7, "AdvAdp estimate quality and halt-implies-helper", ok,
                           f"helper transitions={helpers} outside [n/256, 4n]={bad_est}; "
                           f"halts={halts} before all helpers={bad_halt}",
                           data={"bad_estimates": bad_est, "bad_halts": bad_halt})


# ---------------------------------------------------------------- 8


def _adaptive_q(prev, C: int) -> JamSet:
    """A history-dependent jam choice: jam wherever anyone sent last slot."""
    if prev is None:
        return JamSet.clear(C)
    return JamSet.jamming(C, {b.channel for b in prev if b.action is Action.SEND})


def criterion_8(samples: int = 100_000, instances: int = 10_000, seed: int = VERIFY_SEED) -> CriterionResult:
    C, probs = 3, (0.25, 0.2)
    gen = CoupledGenerator(seed, probs, C, samples)
    counts = np.zeros((3 * C) ** len(probs))
    prev = None
    for _ in range(samples):
        q = _adaptive_q(prev, C)
        prev = gen.next(q, (True, False))
        counts[behavior_cell(prev, C)] += 1
    expected = behavior_cell_probs(probs, C) * samples
    chi = stats.chisquare(counts, expected)
    r = random.Random(seed)
    broken = 0
    for _ in range(instances):
        Cr = r.randint(1, 5)
        opts = all_behaviors(Cr)
        beh = tuple(r.choice(opts) for _ in range(r.randint(1, 6)))
        jam = JamSet(Cr, frozenset(ch for ch in range(1, Cr + 1) if r.random() < 0.5))
        q = JamSet(Cr, frozenset(ch for ch in range(1, Cr + 1) if r.random() < 0.5))
        perm = channel_permutation(q)
        if resolve_slot(permute_behavior(perm, beh), permute_jamset(perm, jam)) != resolve_slot(beh, jam):
            broken += 1
    ok = chi.pvalue > 0.001 and broken == 0
    return CriterionResult(8, "permutation invariance", ok,
                           f"chi2={chi.statistic:.1f} dof={len(counts) - 1} p={chi.pvalue:.4f} "
                           f"(reject below 0.001); equivariance failures={broken}/{instances}",
                           data={"pvalue": float(chi.pvalue), "broken": broken})


# ---------------------------------------------------------------- 9


def criterion_9(traces: int = 20, seed: int = VERIFY_SEED) -> CriterionResult:
    r = random.Random(seed)
    bad_identity = bad_cost = 0
    for k in range(traces):
        n, C = r.randint(2, 8), r.randint(1, 3)
        kind = ("nojam", "random", "fullprefix", "threshold")[k % 4]
        if kind == "nojam":
            spec = AdversarySpec.nojam()
        elif kind == "random":
            spec = AdversarySpec.random_budgeted(r.choice((0.2, 0.5)), r.randint(50, 2000))
        elif kind == "fullprefix":
            spec = AdversarySpec.full_prefix(r.randint(10, 3000))
        else:
            spec = AdversarySpec.threshold(r.choice((20, 200)))
        tr = run_execution(ProtocolSpec("adp"), spec, n, C, derive_seed(seed, 9, k), slot_limit=20_000,
                           source=r.randrange(n), trace_mode="full")
        res = adapt_trace(tr)
        bad_identity += not (res.identical and res.alice_cost == res.source_cost)
        bad_cost += not res.cost_ok
    ok = bad_identity == 0 and bad_cost == 0
    return CriterionResult(9, "two-party adapter", ok,
                           f"traces={traces} not-identical={bad_identity} bob-cost-exceeded={bad_cost}",
                           data={"bad_identity": bad_identity, "bad_cost": bad_cost})


# ---------------------------------------------------------------- 10


def random_threshold(r: random.Random):
    # mix exact grid points (boundary cases) with arbitrary binary floats
    if r.random() < 0.5:
        d = r.choice((2, 4, 5, 10, 20))
        return Fraction(r.randint(0, d), d)
    return r.random()


def criterion_10(count: int = 10_000, seed: int = VERIFY_SEED) -> CriterionResult:
    r = random.Random(seed)
    broken = 0
    for _ in range(count):
        C = r.randint(1, 8)
        trace = [JamSet(C, frozenset(ch for ch in range(1, C + 1) if r.random() < 0.6))
                 for _ in range(r.randint(1, 40))]
        x, y = random_threshold(r), random_threshold(r)
        event = JamSeverityEvent(">=", x, ">=", y)
        dual = JamSeverityEvent("<", x, ">", 1 - event.y)
        if event.complement() != dual or classify_jamming(trace, event) == classify_jamming(trace, dual):
            broken += 1
    return CriterionResult(10, "severity-event complement identity", broken == 0,
                           f"traces={count} failures={broken}", data={"broken": broken})


# ---------------------------------------------------------------- driver


def run_all(selected=None, echo: Optional[Callable[[str], None]] = print) -> list:
    selected = set(range(1, 11)) if selected is None else set(selected)
    results = []

    def emit(res):
        results.append(res)
        if echo:
            echo(res.line())

    for num, fn in ((1, criterion_1), (2, criterion_2), (3, criterion_3)):
        if num in selected:
            emit(_timed(fn)())
    if selected & {4, 5}:
        t = time.perf_counter()
        sweep = scaling_sweep()
        shared = time.perf_counter() - t
        for num, fn in ((4, criterion_4), (5, criterion_5)):
            if num in selected:
                res = _timed(fn)(sweep)
                res.seconds += shared
                emit(res)
    if selected & {6, 7}:
        t = time.perf_counter()
        batch = advadp_batch()
        shared = time.perf_counter() - t
        for num, fn in ((6, criterion_6), (7, criterion_7)):
            if num in selected:
                res = _timed(fn)(batch)
                res.seconds += shared
                emit(res)
    for num, fn in ((8, criterion_8), (9, criterion_9), (10, criterion_10)):
        if num in selected:
            emit(_timed(fn)())
    return results


def extended_sweep(seeds: int = 20, exponents=range(12, 33, 2), echo=print) -> dict:
    """Informational: the full-prefix sweep pushed to large T with per-epoch sampling.

    Not an acceptance check.  It shows where the asymptotic slopes emerge once
    T/C outgrows the first epochs.
    """
    proto = ProtocolSpec("adp", 2)
    rows = []
    for e in exponents:
        for k in range(seeds):
            tr = run_execution(proto, AdversarySpec.full_prefix(2**e), 32, 4, derive_seed(VERIFY_SEED, 4, k),
                               slot_limit=2**62, engine="aggregate")
            rows.append((2**e, tr.slots_run, tr.max_cost))
    fits = {}
    for lo in (min(exponents), 20, 24):
        pts = [r for r in rows if r[0] >= 2**lo]
        if len({r[0] for r in pts}) >= 3:
            fits[lo] = (loglog_slope([(r[0], r[1]) for r in pts]).slope,
                        loglog_slope([(r[0], r[2]) for r in pts]).slope)
            if echo:
                echo(f"[info] extended sweep T >= 2^{lo}: time slope={fits[lo][0]:.3f} "
                     f"cost slope={fits[lo][1]:.3f}")
    return {"rows": rows, "fits": fits}
