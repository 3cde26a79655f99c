import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jamnet import radio, rng
from jamnet.coupling import channel_permutation, permute_behavior, permute_jamset
from jamnet.radio import (NOISE, SILENCE, Action, Feedback, JamSet, Payload, SlotBehavior, draw_behavior,
                          resolve_slot)


@st.composite
def slots(draw, max_n=6, max_C=5):
    C = draw(st.integers(1, max_C))
    n = draw(st.integers(1, max_n))
    behaviors = []
    for _ in range(n):
        ch = draw(st.integers(1, C))
        kind = draw(st.sampled_from(["send-msg", "send-beacon", "listen", "idle"]))
        if kind == "listen":
            behaviors.append(SlotBehavior.listen(ch))
        elif kind == "idle":
            behaviors.append(SlotBehavior.idle(ch))
        else:
            behaviors.append(SlotBehavior.send(ch, Payload.MSG if kind == "send-msg" else Payload.BEACON))
    unjammed = draw(st.frozensets(st.integers(1, C)))
    return tuple(behaviors), JamSet(C, unjammed)


class TestTypes:
    def test_send_needs_payload(self):
        with pytest.raises(ValueError):
            SlotBehavior(1, Action.SEND)
        with pytest.raises(ValueError):
            SlotBehavior(1, Action.LISTEN, Payload.MSG)

    def test_channel_must_be_positive(self):
        with pytest.raises(ValueError):
            SlotBehavior.idle(0)

    def test_jamset_cost(self):
        q = JamSet.jamming(5, {2, 4})
        assert q.unjammed == {1, 3, 5}
        assert q.cost == 2
        assert JamSet.clear(4).cost == 0
        assert JamSet.full(4).cost == 4

    def test_jamset_rejects_foreign_channels(self):
        with pytest.raises(ValueError):
            JamSet(3, {4})

    def test_feedback_json_roundtrip(self):
        for fb in (SILENCE, NOISE, Feedback.received(Payload.MSG), Feedback.received(Payload.BEACON)):
            assert Feedback.from_json(fb.to_json()) == fb


class TestDrawBehavior:
    def test_zero_probability_always_idles(self):
        for slot in range(200):
            b = draw_behavior(rng.SlotStream(1, slot, 0), 0.0, 3, informed=False)
            assert b.action is Action.IDLE and 1 <= b.channel <= 3

    def test_half_probability_never_idles(self):
        seen = set()
        for slot in range(500):
            b = draw_behavior(rng.SlotStream(2, slot, 0), 0.5, 2, informed=True)
            assert b.action is not Action.IDLE
            if b.action is Action.SEND:
                assert b.payload is Payload.MSG
            seen.add(b.action)
        assert seen == {Action.SEND, Action.LISTEN}

    def test_uninformed_sends_beacon(self):
        sends = [draw_behavior(rng.SlotStream(3, s, 0), 0.5, 1, informed=False) for s in range(50)]
        assert all(b.payload is Payload.BEACON for b in sends if b.action is Action.SEND)

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            draw_behavior(rng.SlotStream(0, 0, 0), 0.51, 2, True)
        with pytest.raises(ValueError):
            draw_behavior(rng.SlotStream(0, 0, 0), 0.2, 0, True)

    def test_frequencies_match_distribution(self):
        # 1e6 draws; 3 sigma for p=1/4 is about 0.0013, well inside 0.005
        ch, act = radio.draw_block(99, np.arange(250_000), np.full(4, 0.25), 4)
        assert abs((act == radio.SEND).mean() - 0.25) < 0.005
        assert abs((act == radio.LISTEN).mean() - 0.25) < 0.005
        assert abs((ch == 3).mean() - 0.25) < 0.005

    def test_block_agrees_with_single_draws(self):
        probs = np.array([0.0, 0.1, 0.3, 0.5])
        ch, act = radio.draw_block(5, np.arange(40, 60), probs, 3)
        code = {Action.IDLE: radio.IDLE, Action.SEND: radio.SEND, Action.LISTEN: radio.LISTEN}
        for r, slot in enumerate(range(40, 60)):
            for u, p in enumerate(probs):
                b = draw_behavior(rng.SlotStream(5, slot, u), float(p), 3, True)
                assert (b.channel, code[b.action]) == (ch[r, u], act[r, u])


class TestResolveSlot:
    def test_silence(self):
        assert resolve_slot([SlotBehavior.listen(1)], JamSet.clear(2)) == [SILENCE]

    def test_unique_message(self):
        fb = resolve_slot([SlotBehavior.send(1, Payload.MSG), SlotBehavior.listen(1)], JamSet.clear(1))
        assert fb == [None, Feedback.received(Payload.MSG)]

    def test_collision_is_noise(self):
        b = [SlotBehavior.send(2, Payload.MSG), SlotBehavior.send(2, Payload.BEACON), SlotBehavior.listen(2)]
        assert resolve_slot(b, JamSet.clear(2))[2] == NOISE

    def test_jammed_sender_is_noise(self):
        b = [SlotBehavior.send(1, Payload.MSG), SlotBehavior.listen(1)]
        assert resolve_slot(b, JamSet.jamming(2, {1}))[1] == NOISE

    def test_jammed_empty_channel_is_noise(self):
        assert resolve_slot([SlotBehavior.listen(1)], JamSet.full(1)) == [NOISE]

    def test_only_listeners_get_feedback(self):
        b = [SlotBehavior.send(1, Payload.MSG), SlotBehavior.idle(1), SlotBehavior.listen(2)]
        assert resolve_slot(b, JamSet.clear(2))[:2] == [None, None]

    @given(slots())
    @settings(max_examples=300, deadline=None)
    def test_pure(self, case):
        behaviors, jam = case
        assert resolve_slot(behaviors, jam) == resolve_slot(list(behaviors), jam)

    @given(slots(), st.data())
    @settings(max_examples=300, deadline=None)
    def test_joint_permutation_equivariance(self, case, data):
        behaviors, jam = case
        q = JamSet(jam.C, data.draw(st.frozensets(st.integers(1, jam.C))))
        perm = channel_permutation(q)
        assert resolve_slot(permute_behavior(perm, behaviors), permute_jamset(perm, jam)) == \
            resolve_slot(behaviors, jam)

    @given(slots())
    @settings(max_examples=300, deadline=None)
    def test_block_resolution_agrees(self, case):
        behaviors, jam = case
        code = {Action.IDLE: radio.IDLE, Action.SEND: radio.SEND, Action.LISTEN: radio.LISTEN}
        ch = np.array([[b.channel for b in behaviors]])
        act = np.array([[code[b.action] for b in behaviors]])
        mask = np.array([[k in jam.unjammed for k in range(1, jam.C + 1)]])
        codes, sender = radio.resolve_block(ch, act, mask)
        for u, fb in enumerate(resolve_slot(behaviors, jam)):
            if fb is None:
                assert codes[0, u] == radio.FB_NONE
            elif fb == SILENCE:
                assert codes[0, u] == radio.FB_SILENCE
            elif fb == NOISE:
                assert codes[0, u] == radio.FB_NOISE
            else:
                assert codes[0, u] == radio.FB_UNIQUE
                assert behaviors[sender[0, u]].payload is fb.payload
