"""Aggregate per-segment sampler for schedules too long to simulate slot by slot.

MultiCastAdvAdp steps last ``a * 2^i * i^3`` slots with ``i >= 2 lg C + 20``,
i.e. tens of billions of slots.  The automata only consume per-segment tallies
(silent slots, message receptions, whether the node got informed), so this
module samples those tallies directly:

* each node's counters for a stretch of slots with a fixed informed set are a
  multinomial over {send, hear silence, hear m, hear other, idle}, using the
  exact single-slot marginals;
* the epidemic inside an informing segment is a race of geometric waiting
  times, re-drawn whenever the informed set changes (memorylessness makes this
  exact for the marginal of each node);
* Eve is supported when her per-slot behavior is memoryless: no jamming, full
  prefix jamming, and independent per-channel jamming with a budget.

The approximation is that different nodes' counters are drawn independently,
whereas in a real slot they are correlated through the shared channels.
"""

from __future__ import annotations

import numpy as np

from .adversaries import make_adversary
from .engine import ExecutionTrace, NodeOutcome, _Run

SUPPORTED = ("nojam", "fullprefix", "random")


def jam_plan(spec, C: int, length: int, remaining, gen: np.random.Generator) -> list:
    """Split a segment into sub-blocks ``(slots, jam fraction per channel, Eve spend)``."""
    kind = spec.kind
    if kind == "nojam" or remaining == 0 or length == 0:
        return [(length, 0.0, 0)]
    if kind == "fullprefix":
        full = length if remaining is None else min(length, remaining // C)
        plan = [(full, 1.0, full * C)] if full else []
        left = length - full
        if left and remaining is not None:
            r = remaining - full * C
            if r:
                plan.append((1, r / C, r))
                left -= 1
        if left:
            plan.append((left, 0.0, 0))
        return plan
    if kind == "random":
        d = spec.density
        spend = int(gen.binomial(length * C, d))
        if remaining is None or spend <= remaining:
            return [(length, d, spend)]
        jammed = int(length * remaining // spend)
        plan = [(jammed, d, remaining)] if jammed else []
        if length - jammed:
            plan.append((length - jammed, 0.0, 0))
        if not jammed:
            # budget too small to cover one whole slot at this density
            plan.insert(0, (0, d, remaining))
        return plan
    raise ValueError(f"aggregate sampling does not support the {kind!r} adversary")


def listen_outcomes(q: np.ndarray, informed: np.ndarray, C: int):
    """Per node: P(silence | listen on unjammed channel), P(hear m | same)."""
    f = 1.0 - q / C
    total = np.prod(f)
    pc = total / f
    w = np.where(informed, q / C / f, 0.0)
    pm = pc * (w.sum() - w)
    return pc, pm


def _epidemic(q, informed, active, C, d, m, gen):
    """Geometric race; returns the new informed mask after ``m`` slots."""
    informed = informed.copy()
    t = 0
    while True:
        waiting = active & ~informed
        if not waiting.any() or not informed.any():
            break
        _, pm = listen_outcomes(q, informed, C)
        h = q * (1.0 - d) * pm
        cand = np.flatnonzero(waiting & (h > 0))
        if not len(cand):
            break
        w = gen.geometric(np.minimum(h[cand], 1.0))
        tau = int(w.min())
        if t + tau > m:
            break
        informed[cand[w == tau]] = True
        t += tau
    return informed


def sample_block(q, informed, active, C, d, m, informs, counts_messages, gen):
    """Tallies for ``m`` slots at jam fraction ``d``: (silent, messages, energy, informed)."""
    n = len(q)
    silent = np.zeros(n, dtype=np.int64)
    messages = np.zeros(n, dtype=np.int64)
    energy = np.zeros(n, dtype=np.int64)
    if m == 0:
        return silent, messages, energy, informed
    pc, pm = listen_outcomes(q, informed, C)
    for u in np.flatnonzero(active):
        qu = min(float(q[u]), 0.5)
        sil = qu * (1.0 - d) * pc[u]
        msg = qu * (1.0 - d) * pm[u] if counts_messages else 0.0
        other = max(qu - sil - msg, 0.0)
        idle = max(1.0 - qu - sil - msg - other, 0.0)
        probs = np.array([qu, sil, msg, other, idle])
        counts = gen.multinomial(m, probs / probs.sum())
        silent[u] = counts[1]
        messages[u] = counts[2]
        energy[u] = m - counts[4]
    if informs:
        informed = _epidemic(q, informed, active, C, d, m, gen)
    return silent, messages, energy, informed


def run_aggregate(protocol, adversary, n, C, seed, slot_limit, *, source=0, digest="") -> ExecutionTrace:
    if adversary.kind not in SUPPORTED:
        raise ValueError(f"aggregate sampling does not support the {adversary.kind!r} adversary")
    proto = protocol.build(n, C)
    run = _Run(proto, make_adversary(adversary, C, seed), n, C, seed, slot_limit, source, False)
    index = 0
    limit_hit = False
    while any(s.active for s in run.states):
        seg = proto.segment(run.states)
        length = min(seg.length, slot_limit - run.t)
        gen = np.random.default_rng([seed & (2**63 - 1), index])
        index += 1
        active = np.array([s.active for s in run.states])
        informed = np.array([s.informed for s in run.states])
        silent = np.zeros(n, dtype=np.int64)
        messages = np.zeros(n, dtype=np.int64)
        for m, d, spend in jam_plan(adversary, C, length, run.ledger.remaining, gen):
            s_, m_, e_, informed = sample_block(seg.probs, informed, active, C, d, m,
                                                seg.informs, seg.counts_messages, gen)
            silent += s_
            messages += m_
            run.energy += e_
            run.ledger.charge(spend)
        run.t += length
        for u, s in enumerate(run.states):
            if s.active:
                run.states[u] = proto.absorb(s, length, int(silent[u]), int(messages[u]), bool(informed[u]))
        if length < seg.length:
            limit_hit = True
            break
        run.close(seg)
        if run.t >= slot_limit and any(s.active for s in run.states):
            limit_hit = True
            break
    outcome = [NodeOutcome(run.halted_at[u], bool(s.informed), int(run.energy[u]))
               for u, s in enumerate(run.states)]
    return ExecutionTrace(proto.name, n, C, seed, source, digest, outcome, run.ledger.spent, run.t,
                          limit_hit, adversary.budget, [], run.segments, run.events, "aggregate")
