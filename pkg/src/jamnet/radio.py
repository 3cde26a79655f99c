"""Slot-level radio model: behaviors, jam sets, and channel feedback.

Channels are numbered ``1..C``.  In a slot every node either sends on one
channel, listens on one channel, or idles.  A listener on channel ``ch`` hears

* noise if ``ch`` is jammed or two or more nodes send on it,
* the unique payload if exactly one node sends on it,
* silence otherwise.

Senders and idle nodes get no feedback.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import rng


class Action(enum.Enum):
    SEND = "send"
    LISTEN = "listen"
    IDLE = "idle"


class Payload(enum.Enum):
    MSG = "msg"
    BEACON = "beacon"


@dataclass(frozen=True, slots=True)
class SlotBehavior:
    channel: int
    action: Action
    payload: Optional[Payload] = None

    def __post_init__(self):
        if self.channel < 1:
            raise ValueError(f"channel must be >= 1, got {self.channel}")
        if (self.action is Action.SEND) != (self.payload is not None):
            raise ValueError("payload is required for SEND and forbidden otherwise")

    @classmethod
    def send(cls, channel: int, payload: Payload) -> "SlotBehavior":
        return cls(channel, Action.SEND, payload)

    @classmethod
    def listen(cls, channel: int) -> "SlotBehavior":
        return cls(channel, Action.LISTEN)

    @classmethod
    def idle(cls, channel: int = 1) -> "SlotBehavior":
        return cls(channel, Action.IDLE)

    @property
    def costs_energy(self) -> bool:
        return self.action is not Action.IDLE


@dataclass(frozen=True)
class JamSet:
    """The channels Eve leaves unjammed in one slot."""

    C: int
    unjammed: frozenset

    def __post_init__(self):
        object.__setattr__(self, "unjammed", frozenset(self.unjammed))
        bad = [ch for ch in self.unjammed if not 1 <= ch <= self.C]
        if bad:
            raise ValueError(f"channels {sorted(bad)} outside 1..{self.C}")

    @classmethod
    def clear(cls, C: int) -> "JamSet":
        return cls(C, frozenset(range(1, C + 1)))

    @classmethod
    def full(cls, C: int) -> "JamSet":
        return cls(C, frozenset())

    @classmethod
    def jamming(cls, C: int, jammed: Iterable[int]) -> "JamSet":
        return cls(C, frozenset(range(1, C + 1)) - frozenset(jammed))

    @property
    def jammed(self) -> frozenset:
        return frozenset(range(1, self.C + 1)) - self.unjammed

    @property
    def cost(self) -> int:
        return self.C - len(self.unjammed)

    def is_jammed(self, channel: int) -> bool:
        return channel not in self.unjammed


class FeedbackKind(enum.Enum):
    SILENCE = "silence"
    RECEIVED = "received"
    NOISE = "noise"


@dataclass(frozen=True)
class Feedback:
    kind: FeedbackKind
    payload: Optional[Payload] = None

    @classmethod
    def received(cls, payload: Payload) -> "Feedback":
        return _RECEIVED[payload]

    @property
    def is_silence(self) -> bool:
        return self.kind is FeedbackKind.SILENCE

    @property
    def is_message(self) -> bool:
        return self.kind is FeedbackKind.RECEIVED and self.payload is Payload.MSG

    def to_json(self) -> str:
        if self.kind is FeedbackKind.RECEIVED:
            return self.payload.value
        return self.kind.value

    @classmethod
    def from_json(cls, text: str) -> "Feedback":
        if text == "silence":
            return SILENCE
        if text == "noise":
            return NOISE
        return cls.received(Payload(text))


SILENCE = Feedback(FeedbackKind.SILENCE)
NOISE = Feedback(FeedbackKind.NOISE)
# interned so that equal feedback is usually the same object
_RECEIVED = {pl: Feedback(FeedbackKind.RECEIVED, pl) for pl in Payload}


def draw_behavior(stream: rng.SlotStream, p: float, C: int, informed: bool) -> SlotBehavior:
    """Draw one node's behavior: uniform channel, then send/listen/idle w.p. p, p, 1-2p."""
    if not 0.0 <= p <= 0.5:
        raise ValueError(f"working probability must lie in [0, 1/2], got {p}")
    if C < 1:
        raise ValueError("C must be >= 1")
    channel = 1 + int(stream.uniform(rng.CHANNEL) * C)
    u = stream.uniform(rng.ACTION)
    if u < p:
        return SlotBehavior.send(channel, Payload.MSG if informed else Payload.BEACON)
    if u < p + p:
        return SlotBehavior.listen(channel)
    return SlotBehavior.idle(channel)


# action codes for the vectorised paths
IDLE, SEND, LISTEN = 0, 1, 2

# feedback codes for the vectorised paths
FB_NONE, FB_SILENCE, FB_NOISE, FB_UNIQUE = 0, 1, 2, 3


def draw_block(seed: int, slots, probs: np.ndarray, C: int):
    """Channels and action codes for every (slot, node); agrees with ``draw_behavior``."""
    nodes = np.arange(len(probs))
    channels = 1 + (rng.uniform_grid(seed, rng.CHANNEL, slots, nodes) * C).astype(np.int64)
    u = rng.uniform_grid(seed, rng.ACTION, slots, nodes)
    probs = np.asarray(probs, dtype=np.float64)
    actions = np.where(u < probs, SEND, np.where(u < probs + probs, LISTEN, IDLE)).astype(np.int8)
    return channels, actions


def resolve_slot(behaviors: Sequence[SlotBehavior], jam: JamSet) -> list:
    """Per-node feedback (``None`` for senders and idlers)."""
    send, listen = Action.SEND, Action.LISTEN
    senders: dict = {}
    for b in behaviors:
        if b.action is send:
            senders[b.channel] = b.payload if b.channel not in senders else None
    unjammed = jam.unjammed
    out = []
    for b in behaviors:
        if b.action is not listen:
            out.append(None)
        elif b.channel not in unjammed:
            out.append(NOISE)
        elif b.channel not in senders:
            out.append(SILENCE)
        else:
            payload = senders[b.channel]
            out.append(NOISE if payload is None else _RECEIVED[payload])
    return out


def resolve_block(channels: np.ndarray, actions: np.ndarray, unjammed: np.ndarray):
    """Vectorised feedback for ``k`` slots at once.

    ``channels`` and ``actions`` have shape ``(k, n)``; ``unjammed`` is a ``(k, C)``
    boolean mask.  Returns ``(codes, sender)`` where ``codes`` holds ``FB_*`` values
    and ``sender`` the index of the unique sender heard (``-1`` elsewhere).  The
    payload of a unique transmission is left to the caller, since it depends on
    when the sender became informed.
    """
    k, n = channels.shape
    C = unjammed.shape[1]
    cell = np.arange(k)[:, None] * C + (channels - 1)
    sending = actions == SEND
    count = np.bincount(cell[sending], minlength=k * C)
    who = np.bincount(cell[sending], weights=np.broadcast_to(np.arange(n), (k, n))[sending],
                      minlength=k * C).astype(np.int64)
    listening = actions == LISTEN
    heard = count[cell]
    clear = unjammed.reshape(-1)[cell]
    codes = np.full((k, n), FB_NONE, dtype=np.int8)
    codes[listening & ~clear] = FB_NOISE
    codes[listening & clear & (heard == 0)] = FB_SILENCE
    codes[listening & clear & (heard >= 2)] = FB_NOISE
    unique = listening & clear & (heard == 1)
    codes[unique] = FB_UNIQUE
    sender = np.where(unique, who[cell], -1)
    return codes, sender
