"""Node automata for the two broadcast protocols.

Both automata are written as pure functions over small frozen state records.
The engine drives them in *segments*: runs of slots during which every node's
working probability is fixed (an epoch of MultiCastAdp, one step of
MultiCastAdvAdp).  Feedback either arrives slot by slot (``on_slot``) or as
bulk tallies for a block of slots (``absorb``); both paths produce the same
state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .radio import Feedback, FeedbackKind, Payload

PHASE_MULTIPLIER = 20  # b


def _lg(x: float) -> float:
    return math.log2(x)


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class ScheduleParams:
    epoch_or_superepoch: int
    R: int
    p0: float
    phases: int
    a: float
    b: Optional[int] = None
    p_step3: Optional[float] = None
    first: Optional[int] = None


def adp_first_epoch(n: int, C: int) -> int:
    """I_b = 2 + ceil(|log2 sqrt(n/C)|), computed in integers."""
    if n < 2 or C < 1:
        raise ValueError("need n >= 2 and C >= 1")
    lo, hi = min(n, C), max(n, C)
    k = 0
    while lo * 4**k < hi:
        k += 1
    return 2 + k


def adp_schedule(i: int, n: int, C: int, a: float = 2) -> ScheduleParams:
    first = adp_first_epoch(n, C)
    if i < first:
        raise ValueError(f"epoch {i} precedes the first epoch {first}")
    if a < 1:
        raise ValueError("a must be >= 1")
    R = math.ceil(a * 4**i * i * _lg(n) ** 2)
    p = math.sqrt(C / n) / 2**i
    return ScheduleParams(i, R, p, 1, a, first=first)


def advadp_first_superepoch(C: int) -> int:
    """ceil(2 lg C) + 20; the ceiling is taken over 2 lg C as a whole."""
    if C < 1:
        raise ValueError("C must be >= 1")
    return (C * C - 1).bit_length() + 20


def advadp_schedule(i: int, C: int, a: float = 1, b: int = PHASE_MULTIPLIER) -> ScheduleParams:
    first = advadp_first_superepoch(C)
    if i < first:
        raise ValueError(f"super-epoch {i} precedes the first super-epoch {first}")
    if a < 1:
        raise ValueError("a must be >= 1")
    if b != PHASE_MULTIPLIER:
        raise ValueError(f"b is fixed at {PHASE_MULTIPLIER}")
    R = math.ceil(a * 2**i * i**3)
    return ScheduleParams(i, R, C / 2**i, b * i, a, b, C * C / 2**i, first)


# ---------------------------------------------------------------- MultiCastAdp


@dataclass(frozen=True)
class AdpState:
    informed: bool
    epoch: int
    silent_count: int = 0
    epoch_slot: int = 0
    halted: bool = False

    @property
    def active(self) -> bool:
        return not self.halted


def adp_feedback(state: AdpState, feedback: Optional[Feedback]) -> AdpState:
    """Apply one slot's feedback (``None`` when the node did not listen)."""
    state = replace(state, epoch_slot=state.epoch_slot + 1)
    if feedback is None:
        return state
    if feedback.kind is FeedbackKind.SILENCE:
        return replace(state, silent_count=state.silent_count + 1)
    if feedback.is_message and not state.informed:
        return replace(state, informed=True)
    return state


def adp_epoch_end(state: AdpState, R: int, p: float) -> AdpState:
    """Halt iff at least R*p/2 silent slots were heard; otherwise start the next epoch."""
    if state.epoch_slot != R:
        raise ValueError(f"epoch not finished: {state.epoch_slot} of {R} slots")
    if state.silent_count >= R * p / 2:
        return replace(state, halted=True)
    return replace(state, epoch=state.epoch + 1, silent_count=0, epoch_slot=0)


# ---------------------------------------------------------------- MultiCastAdvAdp


class Status(enum.Enum):
    INIT = "init"
    HELPER = "helper"
    HALT = "halt"


@dataclass(frozen=True)
class AdvAdpState:
    status: Status
    informed: bool
    super_epoch: int
    phase: int
    step: int  # 1, 2 or 3
    p: float
    p_step3: float
    n1c: int = 0
    n2c: int = 0
    n3c: int = 0
    n2m: int = 0
    n_estimate: Optional[float] = None
    step_slot: int = 0

    @property
    def active(self) -> bool:
        return self.status is not Status.HALT

    @property
    def halted(self) -> bool:
        return self.status is Status.HALT

    @property
    def working_probability(self) -> float:
        return self.p_step3 if self.step == 3 else self.p


def advadp_eta(N1: int, N2: int, N3: int, R: int, p: float, p_step3: float, C: int) -> float:
    if not (0 < p < C and 0 < p_step3 < C):
        raise ValueError("probabilities must lie in (0, C)")
    d12 = R * p / (1 - p / C)
    d3 = R * p_step3 / (1 - p_step3 / C)
    return N1 / d12 + N2 / d12 + N3 / d3


def advadp_feedback(state: AdvAdpState, feedback: Optional[Feedback], step: Optional[int] = None) -> AdvAdpState:
    """Apply one slot's feedback within the given step (defaults to ``state.step``)."""
    step = state.step if step is None else step
    state = replace(state, step_slot=state.step_slot + 1)
    if feedback is None or feedback.kind is FeedbackKind.NOISE:
        return state
    if feedback.kind is FeedbackKind.SILENCE:
        key = ("n1c", "n2c", "n3c")[step - 1]
        return replace(state, **{key: getattr(state, key) + 1})
    if feedback.payload is Payload.MSG:
        if step == 1 and not state.informed:
            return replace(state, informed=True)
        if step == 2:
            return replace(state, n2m=state.n2m + 1)
    return state


def advadp_phase_end(state: AdvAdpState, eta: float, messages_step2: int, i: int, j: int,
                     *, C: int, a: float = 1, b: int = PHASE_MULTIPLIER) -> AdvAdpState:
    """Probability update, status transitions, and the move to the next phase."""
    p_next = state.p * 2 ** max(0.0, eta - 2.5)
    status, n_est = state.status, state.n_estimate
    if status is Status.INIT and messages_step2 >= a * i**3 and eta >= 2.4:
        status = Status.HELPER
        n_est = C / (state.p**2 * 2**i)
    elif status is Status.HELPER and p_next >= 64 * math.sqrt(C / (2**i * n_est)):
        status = Status.HALT
    reset = dict(n1c=0, n2c=0, n3c=0, n2m=0, step=1, step_slot=0, status=status, n_estimate=n_est)
    if j + 1 < b * i:
        return replace(state, phase=j + 1, p=p_next, **reset)
    return replace(state, super_epoch=i + 1, phase=0, p=C / 2 ** (i + 1),
                   p_step3=C * C / 2 ** (i + 1), **reset)


# ---------------------------------------------------------------- engine drivers


@dataclass
class Segment:
    """A run of slots with fixed per-node working probabilities."""

    length: int
    probs: np.ndarray
    informs: bool
    counts_messages: bool
    label: dict = field(default_factory=dict)


def _draw_probability(p: float) -> float:
    # the three-way split needs 2p <= 1
    return min(p, 0.5)


class MultiCastAdp:
    name = "adp"

    def __init__(self, n: int, C: int, a: float = 2):
        self.n, self.C, self.a = n, C, a
        self.first = adp_first_epoch(n, C)

    def schedule(self, i: int) -> ScheduleParams:
        return adp_schedule(i, self.n, self.C, self.a)

    def initial_states(self, source: int = 0) -> list:
        return [AdpState(informed=(u == source), epoch=self.first) for u in range(self.n)]

    def _epoch(self, states) -> int:
        return next(s.epoch for s in states if s.active)

    def segment(self, states) -> Segment:
        sched = self.schedule(self._epoch(states))
        probs = np.array([sched.p0 if s.active else 0.0 for s in states])
        return Segment(sched.R, probs, True, False, {"epoch": sched.epoch_or_superepoch})

    def on_slot(self, state: AdpState, feedback: Optional[Feedback]) -> AdpState:
        return adp_feedback(state, feedback)

    def absorb(self, state: AdpState, slots: int, silent: int, messages: int, informed: bool) -> AdpState:
        return replace(state, epoch_slot=state.epoch_slot + slots,
                       silent_count=state.silent_count + silent,
                       informed=state.informed or informed)

    def close_segment(self, states):
        sched = self.schedule(self._epoch(states))
        out = [adp_epoch_end(s, sched.R, sched.p0) if s.active else s for s in states]
        events = [{"type": "halt", "node": u, "epoch": sched.epoch_or_superepoch}
                  for u, (s, t) in enumerate(zip(states, out)) if s.active and t.halted]
        return out, events


class MultiCastAdvAdp:
    name = "advadp"

    def __init__(self, n: int, C: int, a: float = 1, b: int = PHASE_MULTIPLIER):
        if b != PHASE_MULTIPLIER:
            raise ValueError(f"b is fixed at {PHASE_MULTIPLIER}")
        self.n, self.C, self.a, self.b = n, C, a, b
        self.first = advadp_first_superepoch(C)
        self._sched_cache: dict = {}

    def schedule(self, i: int) -> ScheduleParams:
        if i not in self._sched_cache:
            self._sched_cache[i] = advadp_schedule(i, self.C, self.a, self.b)
        return self._sched_cache[i]

    def initial_states(self, source: int = 0) -> list:
        sched = self.schedule(self.first)
        return [AdvAdpState(Status.INIT, u == source, self.first, 0, 1, sched.p0, sched.p_step3)
                for u in range(self.n)]

    def _position(self, states):
        s = next(s for s in states if s.active)
        return s.super_epoch, s.phase, s.step

    def segment(self, states) -> Segment:
        i, j, step = self._position(states)
        probs = np.array([_draw_probability(s.working_probability) if s.active else 0.0
                          for s in states])
        return Segment(self.schedule(i).R, probs, step == 1, step == 2,
                       {"super_epoch": i, "phase": j, "step": step})

    def on_slot(self, state: AdvAdpState, feedback: Optional[Feedback]) -> AdvAdpState:
        return advadp_feedback(state, feedback)

    def absorb(self, state: AdvAdpState, slots: int, silent: int, messages: int, informed: bool) -> AdvAdpState:
        key = ("n1c", "n2c", "n3c")[state.step - 1]
        changes = {key: getattr(state, key) + silent, "step_slot": state.step_slot + slots}
        if state.step == 1:
            changes["informed"] = state.informed or informed
        elif state.step == 2:
            changes["n2m"] = state.n2m + messages
        return replace(state, **changes)

    def close_segment(self, states):
        i, j, step = self._position(states)
        if step < 3:
            return [replace(s, step=step + 1, step_slot=0) if s.active else s for s in states], []
        sched = self.schedule(i)
        out, events = [], []
        for u, s in enumerate(states):
            if not s.active:
                out.append(s)
                continue
            eta = advadp_eta(s.n1c, s.n2c, s.n3c, sched.R, s.p, s.p_step3, self.C)
            t = advadp_phase_end(s, eta, s.n2m, i, j, C=self.C, a=self.a, b=self.b)
            if t.status is not s.status:
                ev = {"type": t.status.value, "node": u, "super_epoch": i, "phase": j, "eta": eta}
                if t.status is Status.HELPER:
                    ev["n_estimate"] = t.n_estimate
                events.append(ev)
            out.append(t)
        if any(e["type"] == "halt" for e in events):
            all_helper = all(s.status is not Status.INIT for s in out)
            for e in events:
                if e["type"] == "halt":
                    e["all_helper"] = all_helper
        active = [s.p for s in out if s.active]
        if active:
            first = out[next(u for u, s in enumerate(out) if s.active)]
            events.append({"type": "phase", "super_epoch": first.super_epoch, "phase": first.phase,
                           "p_min": min(active), "p_max": max(active)})
        return out, events


def make_protocol(name: str, n: int, C: int, a: Optional[float] = None, b: int = PHASE_MULTIPLIER):
    if name == "adp":
        return MultiCastAdp(n, C, 2 if a is None else a)
    if name == "advadp":
        return MultiCastAdvAdp(n, C, 1 if a is None else a, b)
    raise ValueError(f"unknown protocol {name!r}")
