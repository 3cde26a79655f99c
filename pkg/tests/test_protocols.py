import math
from dataclasses import replace

import pytest
from hypothesis import assume, given, settings, strategies as st

from jamnet.protocols import (AdpState, AdvAdpState, MultiCastAdp, MultiCastAdvAdp, Status, adp_epoch_end,
                              adp_feedback, adp_first_epoch, adp_schedule, advadp_eta, advadp_feedback,
                              advadp_first_superepoch, advadp_phase_end, advadp_schedule, make_protocol)
from jamnet.radio import NOISE, SILENCE, Feedback, Payload

MSG = Feedback.received(Payload.MSG)
BEACON = Feedback.received(Payload.BEACON)


class TestAdpSchedule:
    def test_symmetric_first_epoch(self):
        assert adp_first_epoch(8, 8) == 2

    def test_first_epoch_and_probability(self):
        assert adp_first_epoch(64, 4) == 4
        assert adp_schedule(4, 64, 4).p0 == pytest.approx(1 / 64, rel=1e-15)

    def test_epoch_length(self):
        assert adp_schedule(3, 16, 4, a=1).R == 3072

    @given(st.integers(2, 5000), st.integers(1, 5000))
    @settings(max_examples=300, deadline=None)
    def test_first_epoch_matches_log_formula(self, n, C):
        expected = 2 + math.ceil(max(math.log2(math.sqrt(n / C)), math.log2(math.sqrt(C / n))) - 1e-12)
        assert adp_first_epoch(n, C) == expected

    @given(st.integers(2, 5000), st.integers(1, 5000), st.integers(0, 6))
    @settings(max_examples=300, deadline=None)
    def test_probability_bounds(self, n, C, extra):
        i = adp_first_epoch(n, C) + extra
        p = adp_schedule(i, n, C).p0
        assert 0 < p <= 0.5
        assert p <= C / (4 * n) * (1 + 1e-12)

    @given(st.integers(2, 1000), st.integers(1, 64), st.integers(0, 5))
    @settings(max_examples=200, deadline=None)
    def test_consecutive_epoch_ratios(self, n, C, extra):
        i = adp_first_epoch(n, C) + extra
        cur, nxt = adp_schedule(i, n, C, a=1), adp_schedule(i + 1, n, C, a=1)
        assert nxt.p0 == pytest.approx(cur.p0 / 2, rel=1e-12)
        exact = 4 ** i * i * math.log2(n) ** 2
        assert math.ceil(exact) == cur.R
        assert (4 ** (i + 1) * (i + 1) * math.log2(n) ** 2) / exact == pytest.approx(4 * (i + 1) / i)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            adp_first_epoch(1, 4)
        with pytest.raises(ValueError):
            adp_schedule(1, 64, 4)
        with pytest.raises(ValueError):
            adp_schedule(4, 64, 4, a=0.5)


class TestAdpAutomaton:
    def test_halts_at_inclusive_threshold(self):
        s = AdpState(True, 5, silent_count=50, epoch_slot=1000)
        assert adp_epoch_end(s, 1000, 0.1).halted

    def test_continues_without_silence(self):
        s = adp_epoch_end(AdpState(True, 5, 0, 1000), 1000, 0.1)
        assert not s.halted and s.epoch == 6 and s.silent_count == 0 and s.epoch_slot == 0

    def test_epoch_must_be_complete(self):
        with pytest.raises(ValueError):
            adp_epoch_end(AdpState(True, 5, 0, 999), 1000, 0.1)

    def test_feedback(self):
        s = AdpState(False, 3)
        s = adp_feedback(s, SILENCE)
        assert s.silent_count == 1 and s.epoch_slot == 1
        s = adp_feedback(s, NOISE)
        s = adp_feedback(s, BEACON)
        assert not s.informed and s.silent_count == 1
        s = adp_feedback(s, MSG)
        assert s.informed and s.epoch_slot == 4
        assert adp_feedback(s, None).epoch_slot == 5

    @given(st.lists(st.sampled_from([None, SILENCE, NOISE, MSG, BEACON]), max_size=60))
    def test_silent_count_bounded_by_slots(self, fbs):
        s = AdpState(False, 2)
        for fb in fbs:
            s = adp_feedback(s, fb)
            assert s.silent_count <= s.epoch_slot

    def test_absorb_matches_slot_updates(self):
        proto = MultiCastAdp(16, 4)
        fbs = [SILENCE, None, MSG, SILENCE, NOISE]
        s = proto.initial_states(0)[3]
        by_slot = s
        for fb in fbs:
            by_slot = proto.on_slot(by_slot, fb)
        assert proto.absorb(s, 5, 2, 1, True) == by_slot


class TestAdvAdpSchedule:
    def test_four_channels(self):
        assert advadp_first_superepoch(4) == 24
        sched = advadp_schedule(24, 4)
        assert sched.p0 == 2.0**-22
        assert sched.p_step3 == 2.0**-20
        assert sched.phases == 20 * 24

    def test_single_channel(self):
        assert advadp_first_superepoch(1) == 20
        assert advadp_schedule(20, 1).p_step3 == 2.0**-20

    @given(st.integers(1, 300), st.integers(0, 30))
    def test_step3_probability_is_small(self, C, extra):
        i = advadp_first_superepoch(C) + extra
        assert advadp_schedule(i, C).p_step3 <= 2.0**-20

    @given(st.integers(20, 200))
    def test_length_ratio(self, i):
        ratio = advadp_schedule(i + 1, 1).R / advadp_schedule(i, 1).R
        assert 2 < ratio <= 2.4

    def test_b_is_fixed(self):
        with pytest.raises(ValueError, match="20"):
            advadp_schedule(24, 4, b=19)
        with pytest.raises(ValueError):
            MultiCastAdvAdp(16, 4, b=19)


class TestEta:
    def test_zero(self):
        assert advadp_eta(0, 0, 0, 100, 0.01, 0.02, 2) == 0

    def test_each_ratio_one(self):
        R, p, p3, C = 500, 0.03, 0.2, 3
        d12 = R * p / (1 - p / C)
        d3 = R * p3 / (1 - p3 / C)
        assert advadp_eta(d12, d12, d3, R, p, p3, C) == pytest.approx(3)

    def test_single_term(self):
        eta = advadp_eta(16, 0, 0, 1024, 1 / 64, 0.001, 4)
        assert eta == pytest.approx(255 / 256)
        assert round(eta, 5) == 0.99609

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            advadp_eta(0, 0, 0, 10, 4, 0.1, 4)


def _state(status=Status.INIT, p=2.0**-11, i=24, **kw):
    return AdvAdpState(status, True, i, 3, 3, p, 16 / 2**i, **kw)


class TestPhaseEnd:
    def test_no_update_at_boundary(self):
        assert advadp_phase_end(_state(), 2.5, 0, 24, 3, C=4).p == 2.0**-11

    def test_doubles_one_above(self):
        assert advadp_phase_end(_state(), 3.5, 0, 24, 3, C=4).p == 2.0**-10

    def test_helper_estimate(self):
        s = advadp_phase_end(_state(), 2.5, 24**3, 24, 3, C=4)
        assert s.status is Status.HELPER
        assert s.n_estimate == 1.0

    def test_helper_needs_both_conditions(self):
        assert advadp_phase_end(_state(), 2.39, 10**6, 24, 3, C=4).status is Status.INIT
        assert advadp_phase_end(_state(), 3.0, 24**3 - 1, 24, 3, C=4).status is Status.INIT

    def test_halt_from_helper(self):
        s = _state(Status.HELPER, p=0.5, n_estimate=1.0)
        # 64 * sqrt(4 / 2^24) = 2^-5 <= 0.5
        assert advadp_phase_end(s, 0.0, 0, 24, 3, C=4).status is Status.HALT

    def test_init_cannot_jump_to_halt(self):
        s = advadp_phase_end(_state(p=0.5), 3.0, 24**3, 24, 3, C=4)
        assert s.status is Status.HELPER

    def test_counters_reset_and_phase_advances(self):
        s = advadp_phase_end(_state(n1c=4, n2c=5, n3c=6, n2m=7, step_slot=9), 1.0, 7, 24, 3, C=4)
        assert (s.n1c, s.n2c, s.n3c, s.n2m, s.step, s.step_slot, s.phase) == (0, 0, 0, 0, 1, 0, 4)

    def test_super_epoch_rollover(self):
        last = 20 * 24 - 1
        s = advadp_phase_end(replace(_state(), phase=last), 5.0, 0, 24, last, C=4)
        assert (s.super_epoch, s.phase) == (25, 0)
        assert s.p == 4 / 2**25 and s.p_step3 == 16 / 2**25

    @given(st.floats(-5, 10), st.integers(0, 10**5), st.sampled_from(list(Status)[:2]))
    def test_probability_never_decreases(self, eta, msgs, status):
        s = _state(status, n_estimate=1.0 if status is Status.HELPER else None)
        t = advadp_phase_end(s, eta, msgs, 24, 3, C=4)
        assert t.p >= s.p
        order = [Status.INIT, Status.HELPER, Status.HALT]
        assert order.index(t.status) - order.index(s.status) in (0, 1)
        if s.status is Status.HELPER:
            assert t.n_estimate == s.n_estimate


class TestAdvAdpFeedback:
    def test_step_one_informs(self):
        s = replace(_state(), informed=False, step=1)
        assert advadp_feedback(s, MSG).informed

    def test_step_two_counts_messages_only(self):
        s = replace(_state(), informed=False, step=2)
        t = advadp_feedback(s, MSG)
        assert t.n2m == 1 and not t.informed

    def test_step_three_counts_silence(self):
        s = replace(_state(), step=3)
        t = advadp_feedback(s, SILENCE)
        assert (t.n1c, t.n2c, t.n3c, t.n2m) == (0, 0, 1, 0)
        assert advadp_feedback(s, MSG) == replace(s, step_slot=1)

    def test_noise_changes_only_slot_counter(self):
        s = replace(_state(), step=1)
        assert advadp_feedback(s, NOISE) == replace(s, step_slot=1)

    @pytest.mark.parametrize("step", [1, 2, 3])
    def test_absorb_matches_slot_updates(self, step):
        proto = MultiCastAdvAdp(8, 2)
        s = replace(proto.initial_states(1)[0], step=step)
        fbs = [SILENCE, MSG, None, NOISE, SILENCE, MSG]
        by_slot = s
        for fb in fbs:
            by_slot = proto.on_slot(by_slot, fb)
        assert proto.absorb(s, 6, 2, 2, True) == by_slot


class TestDrivers:
    def test_make_protocol(self):
        assert make_protocol("adp", 4, 2).a == 2
        assert make_protocol("advadp", 4, 2).a == 1
        with pytest.raises(ValueError):
            make_protocol("aloha", 4, 2)

    def test_adp_segment(self):
        proto = MultiCastAdp(64, 4)
        seg = proto.segment(proto.initial_states())
        assert seg.length == adp_schedule(4, 64, 4).R
        assert list(seg.probs) == [1 / 64] * 64

    def test_advadp_draw_probability_is_clamped(self):
        proto = MultiCastAdvAdp(4, 2)
        states = [replace(s, p=1.5) for s in proto.initial_states()]
        assert set(proto.segment(states).probs) == {0.5}

    def test_advadp_steps_cycle(self):
        proto = MultiCastAdvAdp(4, 2)
        states = proto.initial_states()
        for step in (2, 3):
            states, events = proto.close_segment(states)
            assert {s.step for s in states} == {step} and events == []
        states, events = proto.close_segment(states)
        assert {s.step for s in states} == {1} and {s.phase for s in states} == {1}
        assert events[-1]["type"] == "phase"
