"""Channel permutations, closed-form listening probabilities, and the
broadcast-to-two-party simulation adapter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng
from .adversaries import ProbabilityProfile
from .radio import NOISE, SILENCE, Action, Feedback, JamSet, Payload, SlotBehavior

# ---------------------------------------------------------------- π_q and Ψ_q


@dataclass(frozen=True)
class ChannelPermutation:
    """π_q: the unjammed channels of ``q`` first (ascending), then the jammed ones."""

    q: JamSet
    mapping: tuple  # mapping[k-1] = π_q(k)

    def __call__(self, k: int) -> int:
        return self.mapping[k - 1]

    def inverse(self) -> "ChannelPermutation":
        inv = [0] * len(self.mapping)
        for k, image in enumerate(self.mapping, 1):
            inv[image - 1] = k
        return ChannelPermutation(self.q, tuple(inv))


def channel_permutation(q: JamSet) -> ChannelPermutation:
    free = sorted(q.unjammed)
    rest = sorted(set(range(1, q.C + 1)) - q.unjammed)
    return ChannelPermutation(q, tuple(free + rest))


def permute_behavior(perm, behaviors: Sequence[SlotBehavior]) -> tuple:
    """Ψ_q: relabel every node's channel through ``perm``; actions are untouched.

    ``perm`` may be a :class:`ChannelPermutation` or a :class:`JamSet`.
    """
    if isinstance(perm, JamSet):
        perm = channel_permutation(perm)
    return tuple(replace(b, channel=perm(b.channel)) for b in behaviors)


def permute_jamset(perm: ChannelPermutation, jam: JamSet) -> JamSet:
    return JamSet(jam.C, frozenset(perm(k) for k in jam.unjammed))


# ---------------------------------------------------------------- closed forms


def _uniform_only(profile: ProbabilityProfile):
    if profile.weights is not None:
        raise ValueError("closed forms assume uniform channel choice")


def analytic_probs(profile: ProbabilityProfile, u: int):
    """(p_c, p_m) for node ``u`` listening on an unjammed channel.

    p_c is the chance that no other node sends there, p_m the chance that
    exactly one informed node does.  Exact for ``Fraction`` inputs.
    """
    _uniform_only(profile)
    C, probs, informed = profile.C, profile.probs, profile.informed
    others = [v for v in range(len(probs)) if v != u]
    p_c = 1
    for v in others:
        p_c *= 1 - probs[v] / C
    p_m = 0
    for v in others:
        if not informed[v]:
            continue
        term = probs[v] / C
        for w in others:
            if w != v:
                term *= 1 - probs[w] / C
        p_m += term
    return p_c, p_m


@dataclass(frozen=True)
class SandwichBounds:
    p_c_low: float
    p_c_high: float
    p_m_low: float
    p_m_high: float

    def holds(self, p_c, p_m) -> bool:
        return (self.p_c_low <= p_c <= self.p_c_high) and (self.p_m_low <= p_m <= self.p_m_high)


def sandwich_bounds(profile: ProbabilityProfile, u: int) -> SandwichBounds:
    """Sandwich bounds on (p_c, p_m); valid when the total mass P_V is at most 1/2."""
    _uniform_only(profile)
    C = profile.C
    # keep P_M exact so the tight case p_m == P_M compares correctly
    P_V = sum(profile.probs) / C
    P_M = sum(p for p, f in zip(profile.probs, profile.informed) if f) / C
    pu = profile.probs[u] / C
    decay = math.exp(-2 * float(P_V))
    return SandwichBounds(decay, math.exp(-float(P_V)) / (1 - float(pu)), (P_M - pu) * decay, P_M)


# ---------------------------------------------------------------- chunk-driven generator


def behavior_from_chunk(seed: int, chunk_row: int, probs: Sequence[float], C: int,
                        informed: Sequence[bool]) -> tuple:
    """Behavior of all nodes computed from one chunk of random bits."""
    out = []
    for u, p in enumerate(probs):
        ch = 1 + int(rng.uniform(seed, rng.COUPLING, chunk_row, 2 * u) * C)
        x = rng.uniform(seed, rng.COUPLING, chunk_row, 2 * u + 1)
        if x < p:
            out.append(SlotBehavior.send(ch, Payload.MSG if informed[u] else Payload.BEACON))
        elif x < 2 * p:
            out.append(SlotBehavior.listen(ch))
        else:
            out.append(SlotBehavior.idle(ch))
    return tuple(out)


@dataclass
class CoupledGenerator:
    """Behavior source that picks chunks from a 'high' or 'low' list by jam level.

    In each slot the adversary first fixes ``q``.  If at least ``x*C`` channels
    are unjammed and fewer than ``y*R`` high chunks have been used, the next high
    chunk is consumed, otherwise the next low chunk.  The chunk's behavior is
    then relabelled with Ψ_q.
    """

    seed: int
    probs: Sequence[float]
    C: int
    R: int
    x: float = 0.1
    y: float = 0.1
    used_high: int = 0
    used_low: int = 0
    K: int = 0  # slots so far with |q| >= x*C

    def next(self, q: JamSet, informed: Sequence[bool]) -> tuple:
        weak = len(q.unjammed) >= self.x * self.C
        self.K += weak
        if weak and self.used_high < self.y * self.R:
            row = 2 * self.used_high
            self.used_high += 1
        else:
            row = 2 * self.used_low + 1
            self.used_low += 1
        raw = behavior_from_chunk(self.seed, row, self.probs, self.C, informed)
        return permute_behavior(q, raw)


def behavior_cell(behaviors: Sequence[SlotBehavior], C: int) -> int:
    """Index of the joint (channel, action) outcome, ignoring payloads."""
    code = {Action.SEND: 0, Action.LISTEN: 1, Action.IDLE: 2}
    cell = 0
    for b in behaviors:
        cell = cell * 3 * C + (b.channel - 1) * 3 + code[b.action]
    return cell


def behavior_cell_probs(probs: Sequence[float], C: int) -> np.ndarray:
    """Exact probabilities of every joint cell under independent uniform-channel draws."""
    out = np.ones(1)
    for p in probs:
        per = np.tile([p / C, p / C, (1 - 2 * p) / C], C)
        out = np.outer(out, per).ravel()
    return out


# ---------------------------------------------------------------- two-party adapter

BOB_NOISE = "noise"


@dataclass
class TwoPartyState:
    """Alice mirrors the source; Bob stands in for every other node at once."""

    alice_transceivers: frozenset = frozenset()  # {(channel, action, payload)}
    bob_transceivers: frozenset = frozenset()
    alice_cost: int = 0
    bob_cost: int = 0


def one_to_one_adapter(behaviors: Sequence[SlotBehavior], source: int, state: TwoPartyState) -> TwoPartyState:
    """Transceiver plan for one slot, with cumulative costs."""
    if source is None or not 0 <= source < len(behaviors):
        raise ValueError("a designated source node is required")
    a = behaviors[source]
    alice = set()
    if a.action is Action.SEND:
        alice.add((a.channel, "send", a.payload.value))
    elif a.action is Action.LISTEN:
        alice.add((a.channel, "listen", None))
    listeners, senders = set(), {}
    for v, b in enumerate(behaviors):
        if v == source:
            continue
        if b.action is Action.LISTEN:
            listeners.add(b.channel)
        elif b.action is Action.SEND:
            senders.setdefault(b.channel, []).append(b.payload)
    bob = {(ch, "listen", None) for ch in listeners}
    for ch, payloads in senders.items():
        bob.add((ch, "send", payloads[0].value if len(payloads) == 1 else BOB_NOISE))
    return TwoPartyState(frozenset(alice), frozenset(bob), state.alice_cost + len(alice), state.bob_cost + len(bob))


def _hear(transmissions: list, jammed: bool) -> Feedback:
    if jammed or len(transmissions) >= 2:
        return NOISE
    if not transmissions:
        return SILENCE
    if transmissions[0] == BOB_NOISE:
        return NOISE
    return Feedback.received(Payload(transmissions[0]))


def two_party_feedback(state: TwoPartyState, jam: JamSet) -> tuple:
    """(alice feedback by channel, bob feedback by channel) for their listening transceivers."""
    alice_tx = {ch: pl for ch, act, pl in state.alice_transceivers if act == "send"}
    bob_tx = {ch: pl for ch, act, pl in state.bob_transceivers if act == "send"}
    alice_fb = {ch: _hear([bob_tx[ch]] if ch in bob_tx else [], jam.is_jammed(ch))
                for ch, act, _ in state.alice_transceivers if act == "listen"}
    bob_fb = {}
    for ch, act, _ in state.bob_transceivers:
        if act == "listen":
            tx = ([alice_tx[ch]] if ch in alice_tx else []) + ([bob_tx[ch]] if ch in bob_tx else [])
            bob_fb[ch] = _hear(tx, jam.is_jammed(ch))
    return alice_fb, bob_fb


@dataclass
class AdaptedExecution:
    slots: int = 0
    mismatches: list = field(default_factory=list)  # slot indices where feedback differs
    alice_cost: int = 0
    bob_cost: int = 0
    source_cost: int = 0
    nonsource_cost: int = 0

    @property
    def identical(self) -> bool:
        return not self.mismatches

    @property
    def cost_ok(self) -> bool:
        return self.bob_cost <= self.nonsource_cost


def adapt_trace(trace) -> AdaptedExecution:
    """Replay a full broadcast trace as a two-party execution and compare feedback."""
    if trace.source is None:
        raise ValueError("trace has no designated source")
    if not trace.records and trace.slots_run:
        raise ValueError("adapter needs a full-mode trace")
    state = TwoPartyState()
    out = AdaptedExecution()
    src = trace.source
    for rec in trace.records:
        state = one_to_one_adapter(rec.behaviors, src, state)
        jam = JamSet(trace.C, frozenset(rec.unjammed))
        alice_fb, bob_fb = two_party_feedback(state, jam)
        for v, b in enumerate(rec.behaviors):
            if b.action is not Action.LISTEN:
                continue
            got = alice_fb[b.channel] if v == src else bob_fb[b.channel]
            if got != rec.feedback[v]:
                out.mismatches.append(rec.slot)
                break
        out.slots += 1
    out.alice_cost, out.bob_cost = state.alice_cost, state.bob_cost
    energy = [o.energy for o in trace.outcome]
    out.source_cost = energy[src]
    out.nonsource_cost = sum(energy) - energy[src]
    return out


def verify_adapted(trace) -> bool:
    res = adapt_trace(trace)
    return res.identical and res.cost_ok and res.alice_cost == res.source_cost
