from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jamnet.adversaries import AdversarySpec, ProbabilityProfile
from jamnet.coupling import analytic_probs
from jamnet.engine import ProtocolSpec, run_execution
from jamnet.stepsim import jam_plan, listen_outcomes


def test_full_prefix_plan_splits_partial_slot():
    plan = jam_plan(AdversarySpec.full_prefix(10), 4, 5, 10, np.random.default_rng(0))
    assert plan == [(2, 1.0, 8), (1, 0.5, 2), (2, 0.0, 0)]


def test_nojam_and_exhausted_plans():
    gen = np.random.default_rng(0)
    assert jam_plan(AdversarySpec.nojam(), 3, 7, 0, gen) == [(7, 0.0, 0)]
    assert jam_plan(AdversarySpec.full_prefix(9), 3, 7, 0, gen) == [(7, 0.0, 0)]


@given(st.sampled_from(["fullprefix", "random"]), st.integers(1, 5), st.integers(0, 500),
       st.one_of(st.none(), st.integers(0, 1000)), st.integers(0, 1000))
@settings(max_examples=200, deadline=None)
def test_plans_cover_segment_within_budget(kind, C, length, remaining, seed):
    spec = AdversarySpec(kind, budget=remaining, density=0.3 if kind == "random" else 0.0)
    plan = jam_plan(spec, C, length, remaining, np.random.default_rng(seed))
    assert sum(m for m, _, _ in plan) == length
    spent = sum(s for _, _, s in plan)
    if remaining is not None:
        assert spent <= remaining
    assert all(0.0 <= d <= 1.0 for _, d, _ in plan)


def test_unsupported_adversary():
    with pytest.raises(ValueError):
        run_execution(ProtocolSpec("adp"), AdversarySpec.threshold(10), 4, 2, 0, engine="aggregate")


@given(st.integers(1, 3), st.lists(st.tuples(st.integers(0, 8), st.booleans()), min_size=2, max_size=6))
@settings(max_examples=100, deadline=None)
def test_listen_outcomes_match_closed_form(C, nodes):
    q = np.array([k / 16 for k, _ in nodes])
    inf = np.array([f for _, f in nodes])
    pc, pm = listen_outcomes(q, inf, C)
    prof = ProbabilityProfile(C, tuple(Fraction(k, 16) for k, _ in nodes), tuple(bool(f) for f in inf))
    for u in range(len(nodes)):
        ec, em = analytic_probs(prof, u)
        assert pc[u] == pytest.approx(float(ec), abs=1e-12)
        assert pm[u] == pytest.approx(float(em), abs=1e-12)


def test_deterministic():
    adv = AdversarySpec.random_budgeted(0.25, 2**20)
    a = run_execution(ProtocolSpec("advadp"), adv, 8, 2, 3, 2**62, engine="aggregate")
    b = run_execution(ProtocolSpec("advadp"), adv, 8, 2, 3, 2**62, engine="aggregate")
    assert a.to_jsonl() == b.to_jsonl() and a.mode == "aggregate"


@pytest.mark.parametrize("T", [0, 2**12])
def test_agrees_with_exact_engine(T):
    """Same completion time and cost within a few percent on a desk-sized Adp batch."""
    adv = AdversarySpec.full_prefix(T)
    exact = [run_execution(ProtocolSpec("adp"), adv, 16, 4, s) for s in range(12)]
    approx = [run_execution(ProtocolSpec("adp"), adv, 16, 4, s, engine="aggregate") for s in range(12)]
    assert np.median([t.slots_run for t in exact]) == np.median([t.slots_run for t in approx])
    ce = np.mean([t.max_cost for t in exact])
    ca = np.mean([t.max_cost for t in approx])
    assert abs(ca - ce) / ce < 0.05
    assert all(t.success for t in exact + approx)
