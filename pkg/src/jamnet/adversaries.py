"""Jamming adversaries, Eve's budget ledger, and jamming-severity events.

An adversary *requests* a set of channels to jam each slot.  The request then
passes through budget truncation: if the remaining budget cannot pay for the
whole request, the lowest-indexed requested channels are jammed until the
budget is gone, after which Eve is depleted for good.
"""

from __future__ import annotations

import enum
import math
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import rng
from .radio import JamSet

KINDS = ("nojam", "fullprefix", "schedule", "random", "threshold")


@dataclass(frozen=True)
class AdversarySpec:
    kind: str = "nojam"
    budget: Optional[int] = None  # None means unlimited
    density: float = 0.0
    schedule: tuple = ()  # per slot: frozenset of channels to jam
    source_only: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        object.__setattr__(self, "schedule", tuple(frozenset(s) for s in self.schedule))

    @property
    def oblivious(self) -> bool:
        return self.kind != "threshold"

    @classmethod
    def nojam(cls) -> "AdversarySpec":
        return cls("nojam", budget=0)

    @classmethod
    def full_prefix(cls, T: Optional[int]) -> "AdversarySpec":
        return cls("fullprefix", budget=T)

    @classmethod
    def random_budgeted(cls, density: float, T: Optional[int]) -> "AdversarySpec":
        return cls("random", budget=T, density=density)

    @classmethod
    def threshold(cls, T: int, source_only: bool = False) -> "AdversarySpec":
        if T is None or T < 1:
            raise ValueError("strategy S needs a finite budget T >= 1")
        return cls("threshold", budget=T, source_only=source_only)

    @classmethod
    def oblivious_schedule(cls, schedule: Iterable, T: Optional[int] = None) -> "AdversarySpec":
        return cls("schedule", budget=T, schedule=tuple(schedule))


def load_schedule(path) -> tuple:
    """One line per slot, comma-separated channels to jam; an empty line jams nothing."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        try:
            out.append(frozenset(int(tok) for tok in line.split(",") if tok.strip()))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected comma-separated channel indices") from None
    return tuple(out)


# ---------------------------------------------------------------- probability profiles


@dataclass(frozen=True)
class ProbabilityProfile:
    """Current-slot distribution of every active node.

    ``weights`` optionally gives each node a channel distribution (rows sum to
    one); by default channels are uniform.  Values may be ``Fraction`` for
    exact evaluation.
    """

    C: int
    probs: tuple
    informed: tuple
    weights: Optional[tuple] = None
    source: Optional[int] = None

    def __post_init__(self):
        if len(self.probs) != len(self.informed):
            raise ValueError("probs and informed differ in length")
        for p in self.probs:
            if not 0 <= p <= Fraction(1, 2):
                raise ValueError(f"working probability {p} outside [0, 1/2]")
        if self.weights is not None and len(self.weights) != len(self.probs):
            raise ValueError("one weight row per node is required")

    def __len__(self) -> int:
        return len(self.probs)

    def channel_mass(self, node: int, channel: int):
        """P(node sends on channel), which also equals P(node listens on channel)."""
        if self.weights is None:
            return self.probs[node] / self.C
        return self.probs[node] * self.weights[node][channel - 1]


def success_probability(profile: ProbabilityProfile, channel: int, source_only: bool = False):
    """P(exactly one informed node sends on ``channel`` and some uninformed node listens there).

    With ``source_only`` the sender must be the profile's source and any other
    node counts as a receiver.
    """
    n = len(profile)
    mass = [profile.channel_mass(w, channel) for w in range(n)]
    if source_only:
        if profile.source is None:
            raise ValueError("source_only needs profile.source")
        senders = [profile.source]
        receiver = [w != profile.source for w in range(n)]
    else:
        senders = [v for v in range(n) if profile.informed[v]]
        receiver = [not f for f in profile.informed]
    total = 0
    for v in senders:
        quiet = 1
        quiet_and_deaf = 1
        for w in range(n):
            if w == v:
                continue
            quiet *= 1 - mass[w]
            quiet_and_deaf *= 1 - mass[w] - (mass[w] if receiver[w] else 0)
        total += mass[v] * (quiet - quiet_and_deaf)
    return total


def threshold_jam(success_by_channel: Sequence, T: int) -> frozenset:
    """Channels whose success probability exceeds 1/T."""
    limit = Fraction(1, T)
    return frozenset(k for k, s in enumerate(success_by_channel, 1) if s > limit)


# ---------------------------------------------------------------- budget


def truncate(jammed: Iterable[int], C: int, remaining: Optional[int]) -> JamSet:
    """Jam the requested channels, lowest index first, while budget remains."""
    chosen = sorted(jammed)
    if remaining is not None and len(chosen) > remaining:
        chosen = chosen[:remaining]
    return JamSet.jamming(C, chosen)


def truncate_block(mask: np.ndarray, remaining: Optional[int]) -> np.ndarray:
    """Vectorised ``truncate`` over a ``(k, C)`` jammed mask; returns the granted mask."""
    if remaining is None:
        return mask
    cost = np.cumsum(mask, axis=1)
    before = np.concatenate(([0], np.cumsum(mask.sum(axis=1))[:-1]))
    # a request is granted iff its running position fits in the leftover budget
    return mask & (before[:, None] + cost <= remaining)


class EveLedger:
    def __init__(self, budget: Optional[int]):
        self.budget = budget
        self.spent = 0

    @property
    def remaining(self) -> Optional[int]:
        return None if self.budget is None else self.budget - self.spent

    @property
    def depleted(self) -> bool:
        return self.budget is not None and self.spent >= self.budget

    def charge(self, units: int):
        self.spent += int(units)
        if self.budget is not None and self.spent > self.budget:
            raise AssertionError("Eve overspent her budget")


# ---------------------------------------------------------------- adversary runtime


class Adversary:
    """Stateful adversary bound to one execution."""

    def __init__(self, spec: AdversarySpec, C: int, seed: int):
        self.spec, self.C, self.seed = spec, C, seed
        self._cache_key = None
        self._cache_val = frozenset()

    @property
    def oblivious(self) -> bool:
        return self.spec.oblivious

    def request(self, slot: int, history=None, profile: Optional[ProbabilityProfile] = None) -> frozenset:
        kind = self.spec.kind
        if kind == "threshold":
            return self._threshold(profile)
        return frozenset(np.flatnonzero(self.request_block(slot, 1)[0]) + 1)

    def request_block(self, start: int, k: int) -> np.ndarray:
        """Requested jammed mask for slots ``start .. start+k-1`` (oblivious kinds only)."""
        kind, C = self.spec.kind, self.C
        if kind == "nojam":
            return np.zeros((k, C), dtype=bool)
        if kind == "fullprefix":
            return np.ones((k, C), dtype=bool)
        if kind == "random":
            u = rng.uniform_grid(self.seed, rng.EVE, np.arange(start, start + k), np.arange(C))
            return u < self.spec.density
        if kind == "schedule":
            mask = np.zeros((k, C), dtype=bool)
            sched = self.spec.schedule
            if not sched:
                return mask
            for r in range(k):
                for ch in sched[min(start + r, len(sched) - 1)]:
                    if not 1 <= ch <= C:
                        raise ValueError(f"schedule channel {ch} outside 1..{C}")
                    mask[r, ch - 1] = True
            return mask
        raise TypeError(f"{kind} adversary is adaptive; use request()")

    def _threshold(self, profile: Optional[ProbabilityProfile]) -> frozenset:
        if profile is None or len(profile) == 0:
            return frozenset()
        key = (profile.probs, profile.informed, profile.weights, profile.source)
        if key != self._cache_key:
            succ = [success_probability(profile, k, self.spec.source_only) for k in range(1, self.C + 1)]
            self._cache_key, self._cache_val = key, threshold_jam(succ, self.spec.budget)
        return self._cache_val


def make_adversary(spec: AdversarySpec, C: int, seed: int) -> Adversary:
    return Adversary(spec, C, seed)


def next_jam_set(adversary: Adversary, slot: int, history, profile: Optional[ProbabilityProfile],
                 remaining_budget: Optional[int]) -> JamSet:
    if remaining_budget is not None and remaining_budget < 0:
        raise ValueError("remaining budget must be >= 0")
    return truncate(adversary.request(slot, history, profile), adversary.C, remaining_budget)


# ---------------------------------------------------------------- severity events

_OPS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le}
_NEGATE = {">": "<=", ">=": "<", "<": ">=", "<=": ">"}
_MIRROR = {">": "<", ">=": "<=", "<": ">", "<=": ">="}


def _exact(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class JamSeverityEvent:
    """ℰ^(cmp_y y)(cmp_x x): the fraction of slots whose unjammed-channel share
    satisfies ``cmp_x x`` itself satisfies ``cmp_y y``."""

    cmp_x: str
    x: Fraction
    cmp_y: str
    y: Fraction

    def __post_init__(self):
        for c in (self.cmp_x, self.cmp_y):
            if c not in _OPS:
                raise ValueError(f"unknown comparator {c!r}")
        object.__setattr__(self, "x", _exact(self.x))
        object.__setattr__(self, "y", _exact(self.y))
        if not (0 <= self.x <= 1 and 0 <= self.y <= 1):
            raise ValueError("thresholds must lie in [0, 1]")

    def complement(self) -> "JamSeverityEvent":
        return JamSeverityEvent(_NEGATE[self.cmp_x], self.x, _MIRROR[_NEGATE[self.cmp_y]], 1 - self.y)

    def slot_holds(self, unjammed: int, C: int) -> bool:
        return _OPS[self.cmp_x](Fraction(unjammed, C), self.x)

    def __str__(self) -> str:
        return f"E^({self.cmp_y}{self.y})({self.cmp_x}{self.x})"


def _unjammed_counts(jam_trace) -> tuple:
    counts, C = [], None
    for q in jam_trace:
        counts.append(len(q.unjammed))
        C = q.C
    return counts, C


def classify_jamming(jam_trace: Sequence[JamSet], event: JamSeverityEvent) -> bool:
    counts, C = _unjammed_counts(jam_trace)
    if not counts:
        raise ValueError("empty window")
    good = sum(event.slot_holds(c, C) for c in counts)
    return _OPS[event.cmp_y](Fraction(good, len(counts)), event.y)


WEAK_EVENT = JamSeverityEvent(">=", Fraction(19, 20), ">=", Fraction(19, 20))


class PhaseClass(enum.Enum):
    WEAKLY_JAMMED = "weak"
    STRONGLY_JAMMED = "strong"


def classify_phase(step_traces: Sequence[Sequence[JamSet]]) -> PhaseClass:
    if len(step_traces) != 3:
        raise ValueError("a phase has exactly three steps")
    if all(classify_jamming(step, WEAK_EVENT) for step in step_traces):
        return PhaseClass.WEAKLY_JAMMED
    return PhaseClass.STRONGLY_JAMMED


def classify_super_epoch(phases: Sequence[PhaseClass]) -> PhaseClass:
    if not phases:
        raise ValueError("empty super-epoch")
    weak = sum(p is PhaseClass.WEAKLY_JAMMED for p in phases)
    return PhaseClass.WEAKLY_JAMMED if 2 * weak >= len(phases) else PhaseClass.STRONGLY_JAMMED
