"""Queue disciplines for the bottleneck: M-SQM, RED (gentle, byte mode), RIO and PI.

Every discipline exposes the same small surface used by the engine::

    decision = q.enqueue(pkt, now)      # -> EnqueueDecision
    pkt = q.dequeue(now)                # -> Packet | None, FIFO order
    q.occupancy_bytes, len(q)

The formula-level operations (``red_update_avg``, ``red_drop_prob``,
``msqm_update_threshold``, ``msqm_drop_prob``, ``msqm_select_victim``,
``pi_update_prob``) are plain functions so they can be checked in isolation.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .core import NS_PER_S, FTP_PKT_BYTES, TrafficClass, RngStream


class Outcome(enum.Enum):
    ENQUEUED = "enqueued"
    DROPPED_PROBABILISTIC = "dropped_probabilistic"
    DROPPED_OVERFLOW = "dropped_overflow"
    ENQUEUED_WITH_VICTIM = "enqueued_with_victim"


@dataclass(frozen=True)
class EnqueueDecision:
    outcome: Outcome
    victim: object = None

    @property
    def accepted(self):
        return self.outcome in (Outcome.ENQUEUED, Outcome.ENQUEUED_WITH_VICTIM)


ENQUEUED = EnqueueDecision(Outcome.ENQUEUED)
DROPPED_PROBABILISTIC = EnqueueDecision(Outcome.DROPPED_PROBABILISTIC)
DROPPED_OVERFLOW = EnqueueDecision(Outcome.DROPPED_OVERFLOW)


class EcnMode(str, enum.Enum):
    """When M-SQM looks for a victim to evict in favour of an arrival.

    ``small_arrival``: every accepted arrival smaller than the size threshold.
    ``overflow_or_hot``: small arrivals, only on byte overflow or when the RED
    average has reached max_th.  ``overflow_only``: small arrivals on
    overflow.  ``always``: every accepted arrival, whatever its size.
    """

    OVERFLOW_OR_HOT = "overflow_or_hot"
    OVERFLOW_ONLY = "overflow_only"
    ALWAYS = "always"
    SMALL_ARRIVAL = "small_arrival"


# --------------------------------------------------------------------------
# RED


@dataclass
class RedState:
    """Classic RED control state, queue measured in bytes.

    ``max_th_bytes`` and ``buffer_cap_bytes`` default to 3x and 8x
    ``min_th_bytes``.  ``link_bw_bps`` sets the idle-decay slot length (the
    transmission time of ``mean_pkt_bytes``).
    """

    min_th_bytes: int = 15_000
    max_p: float = 0.1
    q_weight: float = 0.002
    mean_pkt_bytes: int = FTP_PKT_BYTES
    link_bw_bps: float = 50e6
    gentle: bool = True
    byte_mode: bool = True
    max_th_bytes: int = None
    buffer_cap_bytes: int = None
    avg: float = 0.0
    count: int = 0
    idle_since: int = 0

    def __post_init__(self):
        if self.max_th_bytes is None:
            self.max_th_bytes = 3 * self.min_th_bytes
        if self.buffer_cap_bytes is None:
            self.buffer_cap_bytes = 8 * self.min_th_bytes
        if not 0 < self.min_th_bytes < self.max_th_bytes:
            raise ValueError("RED needs 0 < min_th < max_th")
        if not 0 < self.max_p <= 1:
            raise ValueError("RED max_p must lie in (0, 1]")
        if not 0 < self.q_weight <= 1:
            raise ValueError("RED q_weight must lie in (0, 1]")
        if self.mean_pkt_bytes <= 0 or self.link_bw_bps <= 0:
            raise ValueError("RED mean_pkt_bytes and link_bw_bps must be positive")

    @property
    def slot_ns(self) -> float:
        return self.mean_pkt_bytes * 8 * NS_PER_S / self.link_bw_bps


def red_update_avg(state: RedState, queue_bytes: int, now: int) -> float:
    """Fold one arrival's view of the queue into the EWMA.

    After an idle spell the average decays as if ``m`` empty-queue samples
    had been seen, one per mean-packet transmission time.
    """
    w = state.q_weight
    if state.idle_since is not None:
        m = (now - state.idle_since) / state.slot_ns
        state.avg *= (1.0 - w) ** m
        state.idle_since = None
    else:
        state.avg = (1.0 - w) * state.avg + w * queue_bytes
    return state.avg


def red_base_prob(state: RedState) -> float:
    """Piecewise-linear p_b before byte scaling and count correction."""
    avg = state.avg
    lo, hi = state.min_th_bytes, state.max_th_bytes
    if avg < lo:
        return 0.0
    if avg < hi:
        return state.max_p * (avg - lo) / (hi - lo)
    if state.gentle and avg < 2 * hi:
        return state.max_p + (1.0 - state.max_p) * (avg - hi) / hi
    return 1.0


def red_drop_prob(state: RedState, pkt_size: int) -> float:
    avg = state.avg
    if avg < state.min_th_bytes:
        return 0.0
    if avg >= (2 * state.max_th_bytes if state.gentle else state.max_th_bytes):
        return 1.0
    p_b = red_base_prob(state)
    if state.byte_mode:
        p_b *= pkt_size / state.mean_pkt_bytes
    if p_b <= 0.0:
        return 0.0
    denom = 1.0 - state.count * p_b
    if denom <= p_b:
        return 1.0
    return min(p_b / denom, 1.0)


def red_record(state: RedState, dropped: bool) -> None:
    """Maintain the packets-since-last-drop counter after a decision."""
    if dropped or state.avg < state.min_th_bytes:
        state.count = 0
    else:
        state.count += 1


class _FifoBase:
    """Byte/packet bookkeeping shared by every discipline."""

    def __init__(self):
        self.fifo = deque()
        self.occupancy_bytes = 0

    def __len__(self):
        return len(self.fifo)

    def __iter__(self):
        return iter(self.fifo)

    def _push(self, pkt, now):
        pkt.enqueued_at = now
        self.fifo.append(pkt)
        self.occupancy_bytes += pkt.size_bytes

    def _pop(self):
        pkt = self.fifo.popleft()
        self.occupancy_bytes -= pkt.size_bytes
        return pkt


class RedQueue(_FifoBase):
    name = "red"

    def __init__(self, red: RedState, rng: RngStream):
        super().__init__()
        self.red = red
        self.rng = rng

    def enqueue(self, pkt, now, rng=None):
        rng = rng or self.rng
        red = self.red
        red_update_avg(red, self.occupancy_bytes, now)
        p = red_drop_prob(red, pkt.size_bytes)
        if rng.uniform() < p:
            red_record(red, True)
            return DROPPED_PROBABILISTIC
        if self.occupancy_bytes + pkt.size_bytes > red.buffer_cap_bytes:
            red_record(red, True)
            return DROPPED_OVERFLOW
        red_record(red, False)
        self._push(pkt, now)
        return ENQUEUED

    def dequeue(self, now):
        if not self.fifo:
            self.red.idle_since = now
            return None
        return self._pop()


# --------------------------------------------------------------------------
# M-SQM


def msqm_update_threshold(state, pkt_size: int, alpha: float = None) -> float:
    """Moving average of arriving sizes; the first arrival seeds it directly."""
    if alpha is None:
        alpha = state.alpha
    if not state.thresh_initialized:
        state.msqm_thresh = float(pkt_size)
        state.thresh_initialized = True
    else:
        # (1 - a)*t + a*s written as t + a*(s - t): same average, and the
        # rounding error shrinks with the residual instead of with t
        state.msqm_thresh += alpha * (pkt_size - state.msqm_thresh)
    return state.msqm_thresh


def msqm_drop_prob(red_drop: float, pkt_size: float, msqm_thresh: float) -> float:
    if msqm_thresh > pkt_size:
        return red_drop * (pkt_size / msqm_thresh)
    return red_drop


def _victim_key(pkt):
    return (pkt.stored_drop_prob, pkt.size_bytes, -pkt.enqueued_at)


def msqm_select_victim(state, incoming_drop_prob: float, smaller_than: int = None):
    """Queued packet with the highest stored drop probability, or None.

    Only packets whose stored probability strictly exceeds the newcomer's
    qualify, and, when ``smaller_than`` is given, only packets strictly
    larger than that many bytes.  Ties go to the larger packet, then the one
    enqueued first, then the one nearest the head.
    """
    pool = state.fifo
    if smaller_than is not None:
        pool = [p for p in pool if p.size_bytes > smaller_than]
    if not pool:
        return None
    best = max(pool, key=_victim_key)
    if best.stored_drop_prob > incoming_drop_prob:
        return best
    return None


class MsqmQueue(_FifoBase):
    """Size-aware RED.

    Packets smaller than the running size threshold get RED's probability
    scaled by ``size / threshold``; larger ones get RED's unchanged.  An
    accepted arrival may then evict the queued packet with the highest stored
    drop probability (see ``EcnMode``).  With ``victim_larger`` only packets
    bigger than the arrival are candidates.
    """

    name = "msqm"

    def __init__(self, red: RedState, rng: RngStream, alpha: float = 0.1,
                 ecn_mode: EcnMode = EcnMode.SMALL_ARRIVAL, victim_larger: bool = True):
        super().__init__()
        self.red = red
        self.rng = rng
        self.alpha = alpha
        self.ecn_mode = EcnMode(ecn_mode)
        self.victim_larger = victim_larger
        self.msqm_thresh = 0.0
        self.thresh_initialized = False
        self.last_drop_prob = None

    @property
    def buffer_cap_bytes(self):
        return self.red.buffer_cap_bytes

    def enqueue(self, pkt, now, rng=None):
        rng = rng or self.rng
        red = self.red
        size = pkt.size_bytes
        thresh = msqm_update_threshold(self, size)
        red_update_avg(red, self.occupancy_bytes, now)
        red_drop = red_drop_prob(red, size)
        p = msqm_drop_prob(red_drop, size, thresh)
        self.last_drop_prob = p
        u = rng.uniform()
        cap = red.buffer_cap_bytes
        if size > cap:
            red_record(red, True)
            return DROPPED_OVERFLOW
        if u < p:
            red_record(red, True)
            return DROPPED_PROBABILISTIC

        fits = self.occupancy_bytes + size <= cap
        mode = self.ecn_mode
        if mode is EcnMode.ALWAYS:
            want_victim = True
        elif size < thresh:
            want_victim = (mode is EcnMode.SMALL_ARRIVAL or not fits or (
                mode is EcnMode.OVERFLOW_OR_HOT and red.avg >= red.max_th_bytes))
        else:
            want_victim = False

        if want_victim:
            victim = msqm_select_victim(self, p, size if self.victim_larger else None)
            if victim is not None and self.occupancy_bytes - victim.size_bytes + size <= cap:
                self.fifo.remove(victim)
                self.occupancy_bytes -= victim.size_bytes
                victim.stored_drop_prob = None
                pkt.stored_drop_prob = p
                self._push(pkt, now)
                red_record(red, True)
                return EnqueueDecision(Outcome.ENQUEUED_WITH_VICTIM, victim)

        if not fits:
            red_record(red, True)
            return DROPPED_OVERFLOW
        red_record(red, False)
        pkt.stored_drop_prob = p
        self._push(pkt, now)
        return ENQUEUED

    def dequeue(self, now):
        if not self.fifo:
            self.red.idle_since = now
            return None
        pkt = self._pop()
        pkt.stored_drop_prob = None
        return pkt


def msqm_enqueue(state: MsqmQueue, pkt, now, rng=None) -> EnqueueDecision:
    return state.enqueue(pkt, now, rng)


# --------------------------------------------------------------------------
# RIO

IN, OUT = "IN", "OUT"

DEFAULT_RIO_CLASSIFIER = {
    TrafficClass.VOIP: IN,
    TrafficClass.FTP_DATA: OUT,
    TrafficClass.TCP_ACK: OUT,
}


class RioQueue(_FifoBase):
    """RED with In/Out: IN packets are judged on the EWMA of IN-only
    occupancy, OUT packets on the EWMA of the whole queue, each against its
    own profile.  Both share one byte buffer."""

    name = "rio"

    def __init__(self, in_profile: RedState, out_profile: RedState, rng: RngStream,
                 buffer_cap_bytes: int, classifier=None):
        super().__init__()
        if (out_profile.min_th_bytes > in_profile.min_th_bytes
                or out_profile.max_th_bytes > in_profile.max_th_bytes):
            raise ValueError("RIO OUT thresholds must not exceed IN thresholds")
        self.in_profile = in_profile
        self.out_profile = out_profile
        self.rng = rng
        self.buffer_cap_bytes = buffer_cap_bytes
        self.classifier = dict(DEFAULT_RIO_CLASSIFIER if classifier is None else classifier)
        self.in_bytes = 0

    @property
    def avg_in(self):
        return self.in_profile.avg

    def enqueue(self, pkt, now, rng=None):
        rng = rng or self.rng
        tag = self.classifier[pkt.cls]
        red_update_avg(self.out_profile, self.occupancy_bytes, now)
        if tag == IN:
            red_update_avg(self.in_profile, self.in_bytes, now)
            profile = self.in_profile
        else:
            profile = self.out_profile
        p = red_drop_prob(profile, pkt.size_bytes)
        if rng.uniform() < p:
            red_record(profile, True)
            return DROPPED_PROBABILISTIC
        if self.occupancy_bytes + pkt.size_bytes > self.buffer_cap_bytes:
            red_record(profile, True)
            return DROPPED_OVERFLOW
        red_record(profile, False)
        self._push(pkt, now)
        if tag == IN:
            self.in_bytes += pkt.size_bytes
        return ENQUEUED

    def dequeue(self, now):
        if not self.fifo:
            self.out_profile.idle_since = now
            self.in_profile.idle_since = now
            return None
        pkt = self._pop()
        if self.classifier[pkt.cls] == IN:
            self.in_bytes -= pkt.size_bytes
            if self.in_bytes == 0:
                self.in_profile.idle_since = now
        return pkt


def rio_enqueue(state: RioQueue, pkt, now, rng=None) -> EnqueueDecision:
    return state.enqueue(pkt, now, rng)


# --------------------------------------------------------------------------
# PI


@dataclass
class PiState:
    """PI controller on instantaneous queue length in packets."""

    a: float = 1.822e-5
    b: float = 1.816e-5
    q_ref_pkts: int = 50
    sample_hz: float = 170.0
    cap_pkts: int = 115  # 120000-byte buffer in 1040-byte packets
    prob: float = 0.0
    last_q_pkts: int = 0

    def __post_init__(self):
        if self.sample_hz <= 0 or self.cap_pkts <= 0 or self.q_ref_pkts < 0:
            raise ValueError("PI needs sample_hz > 0, cap_pkts > 0, q_ref_pkts >= 0")

    @property
    def sample_interval_ns(self) -> int:
        return int(round(NS_PER_S / self.sample_hz))


def pi_update_prob(state: PiState, q_now: int) -> float:
    p = state.prob + state.a * (q_now - state.q_ref_pkts) - state.b * (state.last_q_pkts - state.q_ref_pkts)
    state.prob = min(max(p, 0.0), 1.0)
    state.last_q_pkts = q_now
    return state.prob


class PiQueue(_FifoBase):
    name = "pi"

    def __init__(self, pi: PiState, rng: RngStream):
        super().__init__()
        self.pi = pi
        self.rng = rng

    @property
    def sample_interval_ns(self):
        return self.pi.sample_interval_ns

    def sample(self, now):
        return pi_update_prob(self.pi, len(self.fifo))

    def enqueue(self, pkt, now, rng=None):
        rng = rng or self.rng
        if rng.uniform() < self.pi.prob:
            return DROPPED_PROBABILISTIC
        if len(self.fifo) >= self.pi.cap_pkts:
            return DROPPED_OVERFLOW
        self._push(pkt, now)
        return ENQUEUED

    def dequeue(self, now):
        if not self.fifo:
            return None
        return self._pop()


def pi_enqueue(state: PiQueue, pkt, rng=None, now=0) -> EnqueueDecision:
    return state.enqueue(pkt, now, rng)


class FifoQueue(_FifoBase):
    """Plain drop-tail FIFO; ``cap_bytes=None`` means unbounded."""

    name = "fifo"

    def __init__(self, cap_bytes=None):
        super().__init__()
        self.cap_bytes = cap_bytes

    def enqueue(self, pkt, now, rng=None):
        if self.cap_bytes is not None and self.occupancy_bytes + pkt.size_bytes > self.cap_bytes:
            return DROPPED_OVERFLOW
        self._push(pkt, now)
        return ENQUEUED

    def dequeue(self, now):
        if not self.fifo:
            return None
        return self._pop()


def dequeue(queue, now):
    return queue.dequeue(now)
