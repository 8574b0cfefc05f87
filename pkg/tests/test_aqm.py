import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from aqm_lab import aqm
from aqm_lab.aqm import (
    EcnMode, FifoQueue, MsqmQueue, Outcome, PiQueue, PiState, RedQueue, RedState, RioQueue,
    msqm_drop_prob, msqm_select_victim, msqm_update_threshold, pi_update_prob,
    red_drop_prob, red_update_avg,
)
from aqm_lab.core import PacketFactory, TrafficClass, rng_stream

from conftest import FixedRng

VOIP, FTP, ACK = TrafficClass.VOIP, TrafficClass.FTP_DATA, TrafficClass.TCP_ACK


def rel(a, b):
    return abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1e-300)


# -- RED -------------------------------------------------------------------


def busy(red):
    red.idle_since = None
    return red


def test_red_avg_direct_substitution():
    red = busy(RedState())
    assert rel(red_update_avg(red, 10_000, 0), 20.0)


def test_red_avg_fixed_point():
    red = busy(RedState(avg=5000.0))
    assert red_update_avg(red, 5000, 0) == 5000.0


def test_red_avg_idle_decay():
    red = RedState(avg=1000.0)
    red.idle_since = 0
    now = round(100 * red.slot_ns)
    expected = 1000.0
    for _ in range(100):
        expected *= 0.998
    assert math.isclose(red_update_avg(red, 0, now), expected, rel_tol=1e-9)
    assert abs(expected - 818.6) < 0.05


def test_red_prob_regions():
    red = RedState()
    assert (red.max_th_bytes, red.buffer_cap_bytes) == (45_000, 120_000)
    red.avg = 15_000
    assert red_drop_prob(red, 1040) == 0.0
    red.avg = 14_999.9
    assert red_drop_prob(red, 1040) == 0.0
    red.avg = 30_000
    assert rel(red_drop_prob(red, 1040), 0.05)
    red.avg = 67_500
    assert rel(red_drop_prob(red, 1040), 0.55)
    red.avg = 90_000
    assert red_drop_prob(red, 1040) == 1.0


def test_red_gentle_continuity_at_max_th():
    red = RedState()
    red.avg = 45_000
    at = red_drop_prob(red, 1040)
    red.avg = 45_000 - 1e-6
    below = red_drop_prob(red, 1040)
    assert rel(at, 0.1)
    assert abs(at - below) < 1e-9


def test_red_byte_mode_scales_small_packets():
    red = RedState(avg=30_000)
    assert rel(red_drop_prob(red, 160), 0.05 * 160 / 1040)


def test_red_count_correction():
    red = RedState(avg=30_000, count=5)
    assert rel(red_drop_prob(red, 1040), 0.05 / (1 - 5 * 0.05))
    red.count = 19  # denominator collapses
    assert red_drop_prob(red, 1040) == 1.0


def test_red_non_gentle_saturates_at_max_th():
    red = RedState(gentle=False, avg=45_000)
    assert red_drop_prob(red, 1040) == 1.0


# -- M-SQM formulas --------------------------------------------------------


class _T:
    alpha = 0.1
    thresh_initialized = False
    msqm_thresh = 0.0


def test_threshold_seed_then_ewma():
    s = _T()
    assert msqm_update_threshold(s, 1040) == 1040
    assert rel(msqm_update_threshold(s, 160), 952.0)
    s.msqm_thresh = 160.0
    assert msqm_update_threshold(s, 160) == 160.0


def test_msqm_prob_examples():
    assert rel(msqm_drop_prob(0.1, 160, 952), 0.1 * 160 / 952)
    assert abs(msqm_drop_prob(0.1, 160, 952) - 0.016807) < 5e-7
    assert msqm_drop_prob(0.1, 1040, 952) == 0.1
    assert msqm_drop_prob(0.1, 500, 500) == 0.1


def test_threshold_convergence_66_steps():
    s = _T()
    msqm_update_threshold(s, 1040)
    for _ in range(66):
        msqm_update_threshold(s, 160)
    bound = 880.0
    for _ in range(66):
        bound *= 0.9
    assert abs(s.msqm_thresh - 160) <= bound
    assert bound < 0.85


@given(
    st.floats(0, 1),
    st.integers(40, 1500),
    st.integers(40, 1500),
    st.floats(1, 2000),
)
def test_msqm_prob_dominated_and_monotone(red_drop, s1, s2, thresh):
    lo, hi = sorted((s1, s2))
    p_lo = msqm_drop_prob(red_drop, lo, thresh)
    p_hi = msqm_drop_prob(red_drop, hi, thresh)
    assert 0.0 <= p_lo <= red_drop
    assert p_hi <= red_drop
    assert p_lo <= p_hi


@given(st.integers(40, 1500), st.lists(st.integers(40, 1500), min_size=1, max_size=200))
def test_threshold_stays_within_seen_sizes(first, rest):
    s = _T()
    msqm_update_threshold(s, first)
    seen = [first]
    for x in rest:
        msqm_update_threshold(s, x)
        seen.append(x)
        assert min(seen) - 1e-9 <= s.msqm_thresh <= max(seen) + 1e-9


# -- victim selection ------------------------------------------------------


def make_fifo(specs, factory=None):
    """specs: (prob, size) pairs in FIFO order; enqueue times 0, 1, 2, ..."""
    f = factory or PacketFactory()
    q = MsqmQueue(RedState(), FixedRng(0.99))
    for t, (prob, size) in enumerate(specs):
        p = f.make(FTP, 0, t, t, size_bytes=size)
        p.stored_drop_prob = prob
        q._push(p, t)
    return q


def brute_victim(queue, incoming):
    best = None
    for pos, p in enumerate(queue.fifo):
        if p.stored_drop_prob <= incoming:
            continue
        if best is None:
            best = (pos, p)
            continue
        b = best[1]
        if p.stored_drop_prob > b.stored_drop_prob:
            best = (pos, p)
        elif p.stored_drop_prob == b.stored_drop_prob:
            if p.size_bytes > b.size_bytes:
                best = (pos, p)
            elif p.size_bytes == b.size_bytes and p.enqueued_at < b.enqueued_at:
                best = (pos, p)
    return None if best is None else best[1]


def test_victim_examples():
    q = make_fifo([(0.1, 1040), (0.4, 1040), (0.4, 160)])
    v = msqm_select_victim(q, 0.05)
    assert v.stored_drop_prob == 0.4 and v.size_bytes == 1040
    assert msqm_select_victim(make_fifo([(0.0, 1040), (0.0, 1040)]), 0.0) is None
    single = make_fifo([(0.9, 1040)])
    assert msqm_select_victim(single, 0.1) is single.fifo[0]


def test_victim_size_filter():
    q = make_fifo([(0.5, 160), (0.3, 1040)])
    assert msqm_select_victim(q, 0.0).stored_drop_prob == 0.5
    assert msqm_select_victim(q, 0.0, smaller_than=160).size_bytes == 1040


def test_victim_matches_brute_force_on_random_snapshots():
    r = random.Random(2024)
    probs = [0.0, 0.01, 0.05, 0.1, 0.1, 0.3, 0.5]
    for _ in range(2000):
        specs = [(r.choice(probs), r.choice((160, 1040))) for _ in range(r.randint(1, 50))]
        q = make_fifo(specs)
        inc = r.choice(probs)
        assert msqm_select_victim(q, inc) is brute_victim(q, inc)


# -- M-SQM enqueue ---------------------------------------------------------


def test_enqueue_first_packet_no_congestion(factory):
    q = MsqmQueue(RedState(), FixedRng(0.0))
    p = factory.make(FTP, 0, 0, 0)
    d = q.enqueue(p, 0)
    assert d.outcome is Outcome.ENQUEUED
    assert p.stored_drop_prob == 0.0 and p.enqueued_at == 0
    assert q.msqm_thresh == 1040


def test_enqueue_certain_drop(factory):
    red = RedState(avg=100_000)
    red.idle_since = None
    q = MsqmQueue(red, FixedRng(0.999999))
    d = q.enqueue(factory.make(FTP, 0, 0, 0), 0)
    assert d.outcome is Outcome.DROPPED_PROBABILISTIC


def test_enqueue_full_buffer_evicts_highest_prob(factory):
    # three 1040 B packets fill a 3120 B buffer exactly
    red = RedState(min_th_bytes=390, q_weight=1e-9, avg=780.0)
    red.idle_since = None
    q = MsqmQueue(red, FixedRng(0.99), ecn_mode=EcnMode.OVERFLOW_ONLY)
    q.msqm_thresh, q.thresh_initialized = 1040.0, True
    for t, prob in enumerate((0.3, 0.5, 0.2)):
        p = factory.make(FTP, 0, t, t)
        p.stored_drop_prob = prob
        q._push(p, t)
    assert q.occupancy_bytes == red.buffer_cap_bytes
    voice = factory.make(VOIP, 1, 0, 10)
    d = q.enqueue(voice, 10)
    assert q.last_drop_prob < 0.2
    assert d.outcome is Outcome.ENQUEUED_WITH_VICTIM
    assert d.victim.seq == 1
    assert [p.seq for p in q.fifo] == [0, 2, 0]
    assert q.occupancy_bytes == 2 * 1040 + 160


def test_oversized_packet_overflows(factory):
    q = MsqmQueue(RedState(min_th_bytes=100), FixedRng(0.5))
    assert q.enqueue(factory.make(FTP, 0, 0, 0), 0).outcome is Outcome.DROPPED_OVERFLOW


def test_large_arrival_never_evicts(factory):
    q = make_fifo([(0.9, 1040)] * 3, factory)
    q.msqm_thresh, q.thresh_initialized = 1040.0, True
    d = q.enqueue(factory.make(FTP, 0, 99, 10), 10)
    assert d.outcome is Outcome.ENQUEUED


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(list(EcnMode)), st.booleans())
def test_msqm_ledger_and_victim_legality(seed, mode, larger):
    r = random.Random(seed)
    f = PacketFactory()
    red = RedState(min_th_bytes=2000)
    q = MsqmQueue(red, rng_stream(seed, 0), ecn_mode=mode, victim_larger=larger)
    inside = {}
    now = 0
    for _ in range(400):
        now += r.randint(0, 200_000)
        if r.random() < 0.6:
            cls = r.choice((VOIP, FTP))
            p = f.make(cls, 0, 0, now)
            d = q.enqueue(p, now)
            assert 0.0 <= q.last_drop_prob <= 1.0
            if d.outcome is Outcome.ENQUEUED_WITH_VICTIM:
                v = d.victim
                assert v.id in inside
                assert v.stored_drop_prob is None  # cleared on eviction
                if larger:
                    assert v.size_bytes > p.size_bytes
                del inside[v.id]
            if d.accepted:
                inside[p.id] = p
        else:
            p = q.dequeue(now)
            if p is not None:
                del inside[p.id]
        assert q.occupancy_bytes == sum(p.size_bytes for p in q.fifo)
        assert q.occupancy_bytes <= red.buffer_cap_bytes
        assert set(inside) == {p.id for p in q.fifo}


# -- RIO -------------------------------------------------------------------


def rio(rng=None):
    return RioQueue(RedState(min_th_bytes=30_000), RedState(min_th_bytes=15_000),
                    rng or FixedRng(0.5), buffer_cap_bytes=120_000)


def test_rio_in_below_threshold_enqueued(factory):
    q = rio()
    assert q.enqueue(factory.make(VOIP, 0, 0, 0), 0).outcome is Outcome.ENQUEUED
    assert q.in_bytes == 160


def test_rio_out_saturated(factory):
    q = rio(FixedRng(0.999999))
    q.out_profile.avg = 100_000  # still >= 2 * max_th after this arrival's update
    q.out_profile.idle_since = None
    d = q.enqueue(factory.make(FTP, 0, 0, 0), 0)
    assert q.out_profile.avg >= 2 * q.out_profile.max_th_bytes
    assert red_drop_prob(q.out_profile, 1040) == 1.0
    assert d.outcome is Outcome.DROPPED_PROBABILISTIC


def test_rio_rejects_out_above_in():
    with pytest.raises(ValueError):
        RioQueue(RedState(min_th_bytes=10_000), RedState(min_th_bytes=15_000), FixedRng(), 120_000)


def test_rio_in_drops_never_exceed_out_drops():
    # same interleaved stream of tagged arrivals, equal sizes, service slower than arrivals
    f = PacketFactory()
    for seed in range(5):
        q = RioQueue(RedState(min_th_bytes=30_000), RedState(min_th_bytes=15_000),
                     rng_stream(seed, 0), buffer_cap_bytes=120_000)
        drops = {VOIP: 0, FTP: 0}
        now = 0
        for i in range(20_000):
            now += 100_000
            for cls in (VOIP, FTP):
                if not q.enqueue(f.make(cls, 0, i, now, size_bytes=1040), now).accepted:
                    drops[cls] += 1
            q.dequeue(now)
        assert drops[FTP] > 0
        assert drops[VOIP] <= drops[FTP]


# -- PI --------------------------------------------------------------------


def test_pi_update_example():
    s = PiState(prob=0.01, last_q_pkts=80)
    assert rel(pi_update_prob(s, 100), 0.0103662)
    assert s.last_q_pkts == 100


def test_pi_equilibrium_and_clamp():
    s = PiState(prob=0.2, last_q_pkts=50)
    assert pi_update_prob(s, 50) == 0.2
    s = PiState(prob=0.0, last_q_pkts=50)
    assert pi_update_prob(s, 0) == 0.0
    s = PiState(prob=1.0, last_q_pkts=50, a=1.0, b=0.0)
    assert pi_update_prob(s, 200) == 1.0


def test_pi_enqueue_cases(factory):
    q = PiQueue(PiState(prob=0.0), FixedRng(0.3))
    assert aqm.pi_enqueue(q, factory.make(FTP, 0, 0, 0)).outcome is Outcome.ENQUEUED
    q.pi.prob = 1.0
    assert aqm.pi_enqueue(q, factory.make(FTP, 0, 1, 0)).outcome is Outcome.DROPPED_PROBABILISTIC
    full = PiQueue(PiState(prob=0.0, cap_pkts=1), FixedRng(0.3))
    full.enqueue(factory.make(FTP, 0, 0, 0), 0)
    assert full.enqueue(factory.make(FTP, 0, 1, 0), 0).outcome is Outcome.DROPPED_OVERFLOW


def test_pi_drop_fraction(factory):
    q = PiQueue(PiState(prob=0.5, cap_pkts=10**6), rng_stream(9, 0))
    n = 100_000
    dropped = sum(not q.enqueue(factory.make(VOIP, 0, i, 0), 0).accepted for i in range(n))
    assert abs(dropped / n - 0.5) <= 0.01


# -- FIFO service ----------------------------------------------------------


@pytest.mark.parametrize("make", [
    lambda: RedQueue(RedState(), FixedRng(0.99)),
    lambda: MsqmQueue(RedState(), FixedRng(0.99)),
    lambda: rio(FixedRng(0.99)),
    lambda: PiQueue(PiState(), FixedRng(0.99)),
    lambda: FifoQueue(),
])
def test_dequeue_is_fifo_with_exact_bookkeeping(make, factory):
    q = make()
    a, b = factory.make(FTP, 0, 0, 0), factory.make(VOIP, 1, 0, 0)
    q.enqueue(a, 0)
    q.enqueue(b, 1)
    before = q.occupancy_bytes
    assert aqm.dequeue(q, 2) is a
    assert q.occupancy_bytes == before - 1040
    assert aqm.dequeue(q, 3) is b
    assert aqm.dequeue(q, 4) is None
    assert q.occupancy_bytes == 0 and len(q) == 0
