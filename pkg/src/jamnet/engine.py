"""Execution engine: the slot loop, energy ledgers, and trace records.

Two interchangeable paths produce identical traces:

* the *slot* path draws, resolves and delivers one slot at a time and hands
  the adversary the full history and the current probability profile;
* the *block* path handles oblivious adversaries, whose jam sets do not depend
  on history, by drawing and resolving many slots at once in numpy.

Within a block the only sequential dependency is the epidemic (a transmission
carries the message iff its sender was informed before that slot), which is
resolved by scanning unique-transmission events in slot order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import radio, rng
from .adversaries import AdversarySpec, EveLedger, ProbabilityProfile, make_adversary, next_jam_set, truncate_block
from .protocols import PHASE_MULTIPLIER, make_protocol
from .radio import NOISE, SILENCE, Action, Feedback, JamSet, Payload, SlotBehavior

_NEVER = np.iinfo(np.int64).max
_BLOCK_CELLS = 1 << 20


@dataclass(frozen=True)
class ProtocolSpec:
    name: str = "adp"
    a: Optional[float] = None
    b: int = PHASE_MULTIPLIER

    def build(self, n: int, C: int):
        return make_protocol(self.name, n, C, self.a, self.b)


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    unjammed: tuple
    behaviors: tuple
    feedback: tuple
    energy_nodes: tuple  # cumulative, after this slot
    eve_spend: int  # cumulative, after this slot

    def to_json(self) -> dict:
        return {
            "slot": self.slot,
            "jam_unjammed": list(self.unjammed),
            "behaviors": [[b.channel, b.action.value, b.payload.value if b.payload else None]
                          for b in self.behaviors],
            "feedback": [None if f is None else f.to_json() for f in self.feedback],
            "energy_nodes": list(self.energy_nodes),
            "eve_spend": self.eve_spend,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SlotRecord":
        behaviors = tuple(SlotBehavior(ch, Action(act), Payload(pl) if pl else None)
                          for ch, act, pl in d["behaviors"])
        feedback = tuple(None if f is None else Feedback.from_json(f) for f in d["feedback"])
        return cls(d["slot"], tuple(d["jam_unjammed"]), behaviors, feedback,
                   tuple(d["energy_nodes"]), d["eve_spend"])


@dataclass
class NodeOutcome:
    halted_at: Optional[int]
    informed: bool
    energy: int


@dataclass
class ExecutionTrace:
    protocol: str
    n: int
    C: int
    seed: int
    source: Optional[int]
    config_digest: str
    outcome: list
    eve_spend: int
    slots_run: int
    limit_exhausted: bool
    budget: Optional[int] = None
    records: list = field(default_factory=list)  # SlotRecord (full mode)
    segments: list = field(default_factory=list)  # per-segment summaries (compact mode)
    events: list = field(default_factory=list)
    mode: str = "compact"

    @property
    def success(self) -> bool:
        return all(o.informed and o.halted_at is not None for o in self.outcome)

    @property
    def max_cost(self) -> int:
        return max(o.energy for o in self.outcome)

    @property
    def mean_cost(self) -> float:
        return sum(o.energy for o in self.outcome) / len(self.outcome)

    @property
    def uninformed_halts(self) -> int:
        return sum(o.halted_at is not None and not o.informed for o in self.outcome)

    @property
    def premature_halts(self) -> int:
        """Halts that happened while some node was still uninformed."""
        return sum(e["type"] == "halt" and not e.get("all_informed", True) for e in self.events)

    @property
    def safety_ok(self) -> bool:
        return self.uninformed_halts == 0

    def outcome_json(self) -> dict:
        return {"outcome": {
            "protocol": self.protocol, "n": self.n, "C": self.C, "seed": self.seed,
            "source": self.source, "config_digest": self.config_digest, "budget": self.budget,
            "nodes": [asdict(o) for o in self.outcome], "eve_spend": self.eve_spend,
            "slots": self.slots_run, "limit_exhausted": self.limit_exhausted,
            "mode": self.mode, "events": self.events,
        }}

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_json(), separators=(",", ":")) for r in self.records]
        lines += [json.dumps(s, separators=(",", ":")) for s in self.segments]
        lines.append(json.dumps(self.outcome_json(), separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())


def read_trace(path) -> ExecutionTrace:
    records, segments, out = [], [], None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            if "outcome" in d:
                out = d["outcome"]
            elif "behaviors" in d:
                records.append(SlotRecord.from_json(d))
            else:
                segments.append(d)
    if out is None:
        raise ValueError(f"{path}: missing outcome block")
    return ExecutionTrace(
        protocol=out["protocol"], n=out["n"], C=out["C"], seed=out["seed"], source=out.get("source"),
        config_digest=out["config_digest"], outcome=[NodeOutcome(**o) for o in out["nodes"]],
        eve_spend=out["eve_spend"], slots_run=out["slots"], limit_exhausted=out["limit_exhausted"],
        budget=out.get("budget"), records=records, segments=segments, events=out.get("events", []),
        mode=out.get("mode", "compact"))


def config_digest(protocol: ProtocolSpec, adversary: AdversarySpec, n: int, C: int, seed: int,
                  slot_limit: int, source: int) -> str:
    payload = {"protocol": asdict(protocol), "adversary": {
        "kind": adversary.kind, "budget": adversary.budget, "density": adversary.density,
        "schedule": [sorted(s) for s in adversary.schedule], "source_only": adversary.source_only,
    }, "n": n, "C": C, "seed": seed, "slot_limit": slot_limit, "source": source}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class History:
    """What the adversary sees: all past slot records and who has halted."""

    records: list = field(default_factory=list)
    halted: dict = field(default_factory=dict)  # node -> slot


def probability_profile(states, probs, C: int, source: Optional[int] = None) -> ProbabilityProfile:
    active = [u for u, s in enumerate(states) if s.active]
    src = active.index(source) if source in active else None
    return ProbabilityProfile(C, tuple(float(probs[u]) for u in active),
                              tuple(states[u].informed for u in active), source=src)


class _Run:
    """Mutable bookkeeping for one execution."""

    def __init__(self, protocol, adversary, n, C, seed, slot_limit, source, full):
        self.protocol, self.adversary = protocol, adversary
        self.n, self.C, self.seed = n, C, seed
        self.slot_limit, self.source, self.full = slot_limit, source, full
        self.states = protocol.initial_states(source)
        self.ledger = EveLedger(adversary.spec.budget)
        self.energy = np.zeros(n, dtype=np.int64)
        self.t = 0
        self.halted_at: list = [None] * n
        self.records: list = []
        self.segments: list = []
        self.events: list = []
        self.history = History(self.records)

    # ------------------------------------------------------------ slot path

    def run_slots(self, seg, length):
        C, n = self.C, self.n
        for _ in range(length):
            t = self.t
            profile = None
            if not self.adversary.oblivious:
                profile = probability_profile(self.states, seg.probs, C, self.source)
            jam = next_jam_set(self.adversary, t, self.history, profile, self.ledger.remaining)
            self.ledger.charge(jam.cost)
            behaviors = tuple(
                radio.draw_behavior(rng.SlotStream(self.seed, t, u), float(seg.probs[u]), C,
                                    self.states[u].informed)
                for u in range(n))
            feedback = radio.resolve_slot(behaviors, jam)
            for u, s in enumerate(self.states):
                if s.active:
                    self.states[u] = self.protocol.on_slot(s, feedback[u])
                if behaviors[u].costs_energy:
                    self.energy[u] += 1
            self.records.append(SlotRecord(t, tuple(sorted(jam.unjammed)), behaviors, tuple(feedback),
                                           tuple(int(e) for e in self.energy), self.ledger.spent))
            self.t += 1

    # ------------------------------------------------------------ block path

    def run_block(self, seg, length):
        C, n = self.C, self.n
        rows = max(1, _BLOCK_CELLS // n)
        inf_time = np.array([-1 if s.informed else _NEVER for s in self.states], dtype=np.int64)
        silent = np.zeros(n, dtype=np.int64)
        messages = np.zeros(n, dtype=np.int64)
        done = 0
        while done < length:
            k = min(rows, length - done)
            t0 = self.t
            slots = np.arange(t0, t0 + k)
            channels, actions = radio.draw_block(self.seed, slots, seg.probs, C)
            granted = truncate_block(self.adversary.request_block(t0, k), self.ledger.remaining)
            self.ledger.charge(int(granted.sum()))
            unjammed = ~granted
            codes, sender = radio.resolve_block(channels, actions, unjammed)
            unique_r, unique_u = np.nonzero(codes == radio.FB_UNIQUE)
            if seg.informs and (inf_time == _NEVER).any():
                keep = inf_time[unique_u] == _NEVER
                for r, u in zip(unique_r[keep].tolist(), unique_u[keep].tolist()):
                    s = t0 + r
                    if inf_time[u] == _NEVER and inf_time[sender[r, u]] < s:
                        inf_time[u] = s
            silent += (codes == radio.FB_SILENCE).sum(axis=0)
            if seg.counts_messages and len(unique_r):
                msg = inf_time[sender[unique_r, unique_u]] < t0 + unique_r
                messages += np.bincount(unique_u[msg], minlength=n)
            working = actions != radio.IDLE
            if self.full:
                self._records_from_block(t0, channels, actions, unjammed, codes, sender, inf_time,
                                         np.cumsum(granted.sum(axis=1)), np.cumsum(working, axis=0))
            self.energy += working.sum(axis=0)
            self.t += k
            done += k
        for u, s in enumerate(self.states):
            if s.active:
                self.states[u] = self.protocol.absorb(s, length, int(silent[u]), int(messages[u]),
                                                      bool(inf_time[u] != _NEVER))

    def _records_from_block(self, t0, channels, actions, unjammed, codes, sender, inf_time, eve_cum, work_cum):
        spent0 = self.ledger.spent - int(eve_cum[-1])
        for r in range(channels.shape[0]):
            s = t0 + r
            behaviors, feedback = [], []
            for u in range(self.n):
                ch, act = int(channels[r, u]), int(actions[r, u])
                if act == radio.SEND:
                    pl = Payload.MSG if inf_time[u] < s else Payload.BEACON
                    behaviors.append(SlotBehavior(ch, Action.SEND, pl))
                elif act == radio.LISTEN:
                    behaviors.append(SlotBehavior(ch, Action.LISTEN))
                else:
                    behaviors.append(SlotBehavior(ch, Action.IDLE))
                code = codes[r, u]
                if code == radio.FB_NONE:
                    feedback.append(None)
                elif code == radio.FB_SILENCE:
                    feedback.append(SILENCE)
                elif code == radio.FB_NOISE:
                    feedback.append(NOISE)
                else:
                    v = sender[r, u]
                    feedback.append(Feedback.received(Payload.MSG if inf_time[v] < s else Payload.BEACON))
            self.records.append(SlotRecord(
                s, tuple(int(c) + 1 for c in np.flatnonzero(unjammed[r])), tuple(behaviors), tuple(feedback),
                tuple(int(e) for e in self.energy + work_cum[r]), spent0 + int(eve_cum[r])))

    # ------------------------------------------------------------ segments

    def close(self, seg):
        before = [s.active for s in self.states]
        self.states, events = self.protocol.close_segment(self.states)
        all_informed = all(s.informed for s in self.states)
        for e in events:
            if e["type"] == "halt":
                u = e["node"]
                self.halted_at[u] = self.t
                self.history.halted[u] = self.t
                e.update(slot=self.t, informed=self.states[u].informed, all_informed=all_informed)
        self.events.extend(events)
        if not self.full:
            self.segments.append({
                "slot": self.t - seg.length, "segment": seg.label, "length": seg.length,
                "energy_nodes": [int(e) for e in self.energy], "eve_spend": self.ledger.spent,
                "informed": sum(s.informed for s in self.states),
                "halted": sum(not a for a in before) + sum(e["type"] == "halt" for e in events),
            })


def run_execution(protocol, adversary: AdversarySpec, n: int, C: int, seed: int, slot_limit: int = 10**7,
                  *, source: int = 0, trace_mode: str = "compact", engine: str = "auto") -> ExecutionTrace:
    """Run one execution to completion or until ``slot_limit`` slots have elapsed.

    ``engine`` is ``"auto"`` (block path for oblivious adversaries), ``"slot"``
    (always slot by slot) or ``"aggregate"`` (per-step sampling, see
    :mod:`jamnet.stepsim`).
    """
    if isinstance(protocol, str):
        protocol = ProtocolSpec(protocol)
    if n < 2:
        raise ValueError("broadcast needs n >= 2")
    if C < 1:
        raise ValueError("need C >= 1")
    if slot_limit < 1:
        raise ValueError("slot_limit must be >= 1")
    if not 0 <= source < n:
        raise ValueError("source must be a node index")
    if trace_mode not in ("full", "compact"):
        raise ValueError(f"unknown trace mode {trace_mode!r}")
    digest = config_digest(protocol, adversary, n, C, seed, slot_limit, source)
    if engine == "aggregate":
        from .stepsim import run_aggregate
        return run_aggregate(protocol, adversary, n, C, seed, slot_limit, source=source, digest=digest)
    if engine not in ("auto", "slot"):
        raise ValueError(f"unknown engine {engine!r}")

    proto = protocol.build(n, C)
    run = _Run(proto, make_adversary(adversary, C, seed), n, C, seed, slot_limit, source,
               trace_mode == "full")
    slotwise = engine == "slot" or not adversary.oblivious
    limit_hit = False
    while any(s.active for s in run.states):
        seg = proto.segment(run.states)
        length = min(seg.length, slot_limit - run.t)
        if slotwise:
            run.run_slots(seg, length)
        else:
            run.run_block(seg, length)
        if length < seg.length:
            limit_hit = True
            break
        run.close(seg)
        if run.t >= slot_limit and any(s.active for s in run.states):
            limit_hit = True
            break
    outcome = [NodeOutcome(run.halted_at[u], bool(s.informed), int(run.energy[u]))
               for u, s in enumerate(run.states)]
    records = run.records if trace_mode == "full" else []
    return ExecutionTrace(proto.name, n, C, seed, source, digest, outcome, run.ledger.spent, run.t,
                          limit_hit, adversary.budget, records, run.segments, run.events, trace_mode)
