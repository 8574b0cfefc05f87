"""Traffic sources and transport endpoints.

* ``VoipSource``: Pareto ON/OFF source, constant bit rate while ON.
* ``TcpSender``/``TcpSink``: greedy NewReno bulk transfer, one cumulative ACK
  per data segment, no SACK and no delayed ACKs.

All times are integer nanoseconds.  These classes never touch the event
queue; they return what should be sent and the engine schedules it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .core import NS_PER_S, FTP_PKT_BYTES, VOIP_PKT_BYTES, RngStream, require, to_ns


class ProtocolError(RuntimeError):
    """A transport endpoint saw something that cannot happen in a correct run."""


def pareto_sample(rng: RngStream, shape: float, mean: float) -> float:
    """Pareto variate in seconds with the given shape and mean.

    Inverse CDF with U drawn from (0, 1], so U = 1 gives the scale exactly.
    """
    if shape <= 1:
        raise ValueError(f"Pareto shape must exceed 1 for a finite mean, got {shape}")
    if mean <= 0:
        raise ValueError(f"Pareto mean must be positive, got {mean}")
    x_m = mean * (shape - 1.0) / shape
    return x_m * rng.uniform_open_closed() ** (-1.0 / shape)


# --------------------------------------------------------------------------
# VoIP


@dataclass
class VoipParams:
    rate_bps: int = 78_000
    pkt_bytes: int = VOIP_PKT_BYTES
    on_mean_s: float = 1.0
    off_mean_s: float = 1.35
    shape: float = 1.5

    def __post_init__(self):
        require(self.rate_bps > 0, "rate_bps", "must be positive")
        require(self.pkt_bytes >= 40, "pkt_bytes", "must be >= 40")
        require(self.shape > 1, "shape", "must exceed 1 for a finite mean")
        require(self.on_mean_s > 0, "on_mean_s", "must be positive")
        require(self.off_mean_s > 0, "off_mean_s", "must be positive")

    @property
    def gap_s(self) -> float:
        return self.pkt_bytes * 8 / self.rate_bps


class Phase(enum.Enum):
    ON = "on"
    OFF = "off"


class VoipSource:
    """ON/OFF source.  The first packet of each talkspurt leaves at the
    spurt's start; the k-th leaves ``k * pkt_bits / rate`` later (exact
    integer arithmetic, no accumulated rounding).  A packet due exactly at
    the end of a spurt is still sent."""

    def __init__(self, flow_id: int, rng: RngStream, params: VoipParams = None, start_ns: int = 0):
        self.flow_id = flow_id
        self.rng = rng
        self.params = params or VoipParams()
        self.phase = Phase.ON
        self.phase_start = start_ns
        self.phase_ends_at = start_ns + self._draw(self.params.on_mean_s)
        self._k = 0
        self.seq = 0

    def _draw(self, mean_s):
        return to_ns(pareto_sample(self.rng, self.params.shape, mean_s))

    def _offset(self, k):
        p = self.params
        return k * p.pkt_bytes * 8 * NS_PER_S // p.rate_bps

    @property
    def next_emit_at(self) -> int:
        """Time of the next emission, advancing through phases as needed."""
        while True:
            if self.phase is Phase.ON:
                t = self.phase_start + self._offset(self._k)
                if t <= self.phase_ends_at:
                    return t
                self.phase = Phase.OFF
                self.phase_start = self.phase_ends_at
                self.phase_ends_at = self.phase_start + self._draw(self.params.off_mean_s)
            else:
                self.phase = Phase.ON
                self.phase_start = self.phase_ends_at
                self.phase_ends_at = self.phase_start + self._draw(self.params.on_mean_s)
                self._k = 0

    def step(self, now: int):
        """Emit everything due at or before ``now``.

        Returns ``(emissions, next_timer)`` where emissions is a list of
        ``(emit_time, seq)`` pairs.
        """
        out = []
        t = self.next_emit_at
        while t <= now:
            out.append((t, self.seq))
            self.seq += 1
            self._k += 1
            t = self.next_emit_at
        return out, t


def voip_step(state: VoipSource, now: int):
    return state.step(now)


# --------------------------------------------------------------------------
# TCP NewReno


@dataclass
class TcpParams:
    pkt_bytes: int = FTP_PKT_BYTES
    ack_bytes: int = 40
    initial_cwnd: float = 2.0
    initial_ssthresh: float = 10_000.0
    rwnd_pkts: int = 10_000
    initial_rto_s: float = 1.0
    min_rto_s: float = 0.2
    max_rto_s: float = 60.0

    def __post_init__(self):
        require(self.pkt_bytes >= 40, "pkt_bytes", "must be >= 40")
        require(self.ack_bytes >= 40, "ack_bytes", "must be >= 40")
        require(self.initial_cwnd >= 1, "initial_cwnd", "must be >= 1")
        require(self.initial_ssthresh >= 2, "initial_ssthresh", "must be >= 2")
        require(self.rwnd_pkts >= 1, "rwnd_pkts", "must be >= 1")
        require(self.min_rto_s > 0, "min_rto_s", "must be positive")
        require(self.max_rto_s >= self.min_rto_s, "max_rto_s", "must be >= min_rto_s")
        require(self.initial_rto_s > 0, "initial_rto_s", "must be positive")


class TcpPhase(enum.Enum):
    SLOW_START = "slow_start"
    CONG_AVOID = "cong_avoid"
    FAST_RECOVERY = "fast_recovery"


class TcpSender:
    """Greedy NewReno sender counting in whole segments.

    ``snd_una`` is the cumulative ACK (next segment the receiver expects),
    ``next_seq`` the next segment to put on the wire and ``high_tx`` one
    past the highest segment ever sent.  Methods return lists of segment
    numbers to transmit; ``rto_deadline`` is the absolute time the
    retransmission timer should fire, or None when nothing is outstanding.
    """

    def __init__(self, flow_id: int, params: TcpParams = None):
        self.flow_id = flow_id
        self.params = p = params or TcpParams()
        self.cwnd = float(p.initial_cwnd)
        self.ssthresh = float(p.initial_ssthresh)
        self.phase = TcpPhase.SLOW_START if self.cwnd < self.ssthresh else TcpPhase.CONG_AVOID
        self.snd_una = 0
        self.next_seq = 0
        self.high_tx = 0
        self.recover = 0
        self.dup_acks = 0
        self.srtt = None
        self.rttvar = None
        self.rto = to_ns(p.initial_rto_s)
        self.rto_deadline = None
        self.sent_at = {}
        self.retransmitted = set()
        self.timeouts = 0
        self.fast_retransmits = 0

    @property
    def in_flight(self):
        return self.next_seq - self.snd_una

    def _window(self):
        return min(int(math.floor(self.cwnd)), self.params.rwnd_pkts)

    def _mark_sent(self, seq, now):
        if seq in self.sent_at:
            self.retransmitted.add(seq)
        self.sent_at[seq] = now
        if self.rto_deadline is None:
            self.rto_deadline = now + self.rto

    def sendable(self, now):
        """Release new (or go-back-N) segments while the window allows."""
        out = []
        win = self._window()
        while self.next_seq - self.snd_una < win:
            seq = self.next_seq
            self.next_seq += 1
            if self.next_seq > self.high_tx:
                self.high_tx = self.next_seq
            self._mark_sent(seq, now)
            out.append(seq)
        return out

    def start(self, now):
        return self.sendable(now)

    def _retransmit(self, seq, now):
        self._mark_sent(seq, now)
        return seq

    def _rtt_sample(self, sample):
        p = self.params
        if self.srtt is None:
            self.srtt = float(sample)
            self.rttvar = sample / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - sample)
            self.srtt = 0.875 * self.srtt + 0.125 * sample
        rto = self.srtt + 4.0 * self.rttvar
        self.rto = int(min(max(rto, to_ns(p.min_rto_s)), to_ns(p.max_rto_s)))

    def on_ack(self, ack, now):
        """Process a cumulative ACK; returns segments to (re)send."""
        if ack > self.high_tx:
            raise ProtocolError(f"flow {self.flow_id}: ACK {ack} for unsent data (high_tx={self.high_tx})")
        if ack < self.snd_una:
            return []
        if ack == self.snd_una:
            if self.snd_una < self.high_tx:
                return self.on_dupack(now)
            return []

        # new data acknowledged
        last = ack - 1
        if last in self.sent_at and last not in self.retransmitted:
            self._rtt_sample(now - self.sent_at[last])
        newly = ack - self.snd_una
        for s in range(self.snd_una, ack):
            self.sent_at.pop(s, None)
            self.retransmitted.discard(s)
        self.snd_una = ack
        if self.next_seq < ack:
            self.next_seq = ack

        out = []
        if self.phase is TcpPhase.FAST_RECOVERY:
            if ack >= self.recover:
                self.cwnd = self.ssthresh
                self.phase = TcpPhase.CONG_AVOID
                self.dup_acks = 0
            else:
                out.append(self._retransmit(ack, now))
                self.cwnd = max(self.cwnd - newly + 1.0, 1.0)
        else:
            self.dup_acks = 0
            if self.phase is TcpPhase.SLOW_START:
                self.cwnd += 1.0
                if self.cwnd >= self.ssthresh:
                    self.phase = TcpPhase.CONG_AVOID
            else:
                self.cwnd += 1.0 / self.cwnd

        self.rto_deadline = now + self.rto if self.snd_una < self.high_tx else None
        out.extend(self.sendable(now))
        if self.rto_deadline is None and self.snd_una < self.high_tx:
            self.rto_deadline = now + self.rto
        return out

    def on_dupack(self, now):
        self.dup_acks += 1
        out = []
        if self.phase is TcpPhase.FAST_RECOVERY:
            self.cwnd += 1.0
        elif self.dup_acks == 3 and self.snd_una >= self.recover:
            self.ssthresh = max(math.floor(self.cwnd / 2), 2)
            self.cwnd = self.ssthresh + 3.0
            self.recover = self.high_tx
            self.phase = TcpPhase.FAST_RECOVERY
            self.fast_retransmits += 1
            out.append(self._retransmit(self.snd_una, now))
        out.extend(self.sendable(now))
        return out

    def on_timeout(self, now):
        """Retransmission timer expiry: collapse to one segment and go back N."""
        self.timeouts += 1
        self.ssthresh = max(math.floor(self.cwnd / 2), 2)
        self.cwnd = 1.0
        self.phase = TcpPhase.SLOW_START
        self.dup_acks = 0
        self.recover = self.high_tx
        self.next_seq = self.snd_una
        self.rto = min(2 * self.rto, to_ns(self.params.max_rto_s))
        self.rto_deadline = None
        return self.sendable(now)


def tcp_on_ack(state: TcpSender, ack_seq, now):
    return state.on_ack(ack_seq, now)


def tcp_on_dupack(state: TcpSender, now):
    return state.on_dupack(now)


def tcp_on_timeout(state: TcpSender, now):
    return state.on_timeout(now)


class TcpSink:
    """Cumulative-ACK receiver: one ACK per arriving data segment."""

    def __init__(self, flow_id: int):
        self.flow_id = flow_id
        self.expected = 0
        self._ooo = set()
        self.received = 0

    def on_data(self, seq):
        self.received += 1
        if seq == self.expected:
            self.expected += 1
            while self.expected in self._ooo:
                self._ooo.remove(self.expected)
                self.expected += 1
        elif seq > self.expected:
            self._ooo.add(seq)
        return self.expected


def tcp_sink_on_data(state: TcpSink, pkt, now=None):
    return state.on_data(pkt.seq)
