"""Discrete-event core and the dumbbell topology.

Events are ``(at, seq, kind, handler, arg)`` tuples on a binary heap; ``seq``
increases on every insertion, so co-timed events pop in insertion order and a
run is a pure function of its configuration.

Topology::

    src_i --access--> G1 ==bottleneck (AQM)==> G2 --access--> sink_i
    src_i <--access-- G1 <==reverse (FIFO)==== G2 <--access-- sink_i

Only G1->G2 has a real queue discipline.  Every other hop is an unbounded
FIFO, modelled as a ``Pipe`` that tracks when its transmitter frees up; for
an unbounded FIFO that yields the same departure times as an explicit queue
with one event per hop instead of two.
"""

from __future__ import annotations

import enum
import heapq
import logging

from . import aqm
from .core import (
    STREAM_BOTTLENECK_AQM,
    STREAM_VOIP_BASE,
    PacketFactory,
    TrafficClass,
    rng_stream,
    serialization_ns,
    to_ns,
)
from .metrics import MetricsRecord, finalize
from .traffic import TcpSender, TcpSink, VoipSource

log = logging.getLogger(__name__)

VOIP = TrafficClass.VOIP
FTP = TrafficClass.FTP_DATA
ACK = TrafficClass.TCP_ACK


class SimulationError(RuntimeError):
    """Internal inconsistency: an event in the past, an unroutable packet."""


class EventKind(enum.IntEnum):
    SOURCE_TIMER = 0
    LINK_TX_COMPLETE = 1
    PACKET_ARRIVAL = 2
    RTO_TIMER = 3
    PI_SAMPLE = 4
    SIM_END = 5


class EventQueue:
    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, at, kind, handler=None, arg=None):
        if at < self.now:
            raise SimulationError(f"event {EventKind(kind).name} at {at} ns scheduled in the past (now={self.now})")
        heapq.heappush(self._heap, (at, self._seq, kind, handler, arg))
        self._seq += 1

    def pop(self):
        ev = heapq.heappop(self._heap)
        self.now = ev[0]
        return ev

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def pending(self):
        return list(self._heap)


def schedule(event_queue: EventQueue, at, kind, handler=None, arg=None):
    event_queue.schedule(at, kind, handler, arg)


class Pipe:
    """Unbounded FIFO link: serialize after the previous packet, then propagate."""

    __slots__ = ("bandwidth_bps", "prop_ns", "busy_until", "name")

    def __init__(self, bandwidth_bps, prop_ns, name=""):
        self.bandwidth_bps = bandwidth_bps
        self.prop_ns = prop_ns
        self.busy_until = 0
        self.name = name

    def transmit(self, size_bytes, now):
        """Returns the far-end arrival time of a packet handed over at ``now``."""
        start = now if now > self.busy_until else self.busy_until
        done = start + serialization_ns(size_bytes, self.bandwidth_bps)
        self.busy_until = done
        return done + self.prop_ns


class Link:
    """Store-and-forward link fronted by a queue discipline.

    Work-conserving: whenever a transmission completes the next head-of-line
    packet starts immediately.
    """

    def __init__(self, sim, queue, bandwidth_bps, prop_ns, deliver, name=""):
        self.sim = sim
        self.queue = queue
        self.bandwidth_bps = bandwidth_bps
        self.prop_ns = prop_ns
        self.deliver = deliver
        self.busy = False
        self.busy_until = 0
        self.name = name

    def offer(self, pkt, now):
        decision = self.queue.enqueue(pkt, now)
        if decision.accepted and not self.busy:
            self._start(now)
        return decision

    def _start(self, now):
        pkt = self.queue.dequeue(now)
        if pkt is None:
            self.busy = False
            return
        self.busy = True
        done = now + serialization_ns(pkt.size_bytes, self.bandwidth_bps)
        self.busy_until = done
        ev = self.sim.events
        ev.schedule(done, EventKind.LINK_TX_COMPLETE, self._tx_complete, None)
        ev.schedule(done + self.prop_ns, EventKind.PACKET_ARRIVAL, self.deliver, pkt)

    def _tx_complete(self, _):
        self._start(self.sim.events.now)


def link_transmit(link: Link, now):
    """Start serving the head of ``link``'s queue if the link is idle."""
    if not link.busy:
        link._start(now)


def make_bottleneck_queue(cfg, rng):
    """Build the configured discipline for the G1->G2 queue."""
    r = cfg.red
    bw = cfg.topology.bottleneck_bw_bps

    def red_state(min_th, max_p=r.max_p):
        return aqm.RedState(
            min_th_bytes=min_th, max_p=max_p, q_weight=r.q_weight,
            mean_pkt_bytes=r.mean_pkt_bytes, link_bw_bps=bw,
            gentle=r.gentle, byte_mode=r.byte_mode,
        )

    if cfg.scheme == "red":
        return aqm.RedQueue(red_state(r.min_th_bytes), rng)
    if cfg.scheme == "msqm":
        return aqm.MsqmQueue(red_state(r.min_th_bytes), rng,
                             alpha=cfg.msqm.alpha, ecn_mode=cfg.msqm.ecn_mode,
                             victim_larger=cfg.msqm.victim_larger)
    if cfg.scheme == "rio":
        return aqm.RioQueue(
            in_profile=red_state(cfg.rio.in_min_th_bytes, cfg.rio.max_p),
            out_profile=red_state(cfg.rio.out_min_th_bytes, cfg.rio.max_p),
            rng=rng, buffer_cap_bytes=r.buffer_cap_bytes,
        )
    if cfg.scheme == "pi":
        p = cfg.pi
        cap = p.cap_pkts if p.cap_pkts is not None else r.buffer_cap_bytes // r.mean_pkt_bytes
        state = aqm.PiState(a=p.a, b=p.b, q_ref_pkts=p.q_ref_pkts, sample_hz=p.sample_hz, cap_pkts=cap)
        return aqm.PiQueue(state, rng)
    raise ValueError(f"unknown scheme {cfg.scheme!r}")


class Simulation:
    """One dumbbell run.  Build with ``build_dumbbell``, drive with ``run_until``."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.events = EventQueue()
        self.packets = PacketFactory()
        t = cfg.topology
        self.metrics = MetricsRecord(
            scheme=cfg.scheme,
            scenario=str(cfg.scenario) if cfg.scenario is not None else "custom",
            varied_flows=cfg.varied_flows,
            seed=cfg.seed,
            duration_s=cfg.duration_s,
            keep_delay_log=cfg.output.delay_log,
        )
        self.t_end = to_ns(cfg.duration_s)
        self.trace = None
        acc_ns = to_ns(t.access_delay_s)
        bn_ns = to_ns(t.bottleneck_delay_s)

        self.queue = make_bottleneck_queue(cfg, rng_stream(cfg.seed, STREAM_BOTTLENECK_AQM))
        self.bottleneck = Link(self, self.queue, t.bottleneck_bw_bps, bn_ns, self._at_g2, name="G1->G2")
        self.reverse = Pipe(t.bottleneck_bw_bps, bn_ns, name="G2->G1")

        n_flows = t.n_ftp + t.n_voip
        # per-flow access links, one per direction at each end
        self.src_up = [Pipe(t.access_bw_bps, acc_ns) for _ in range(n_flows)]
        self.src_down = [Pipe(t.access_bw_bps, acc_ns) for _ in range(n_flows)]
        self.sink_down = [Pipe(t.access_bw_bps, acc_ns) for _ in range(n_flows)]
        self.sink_up = [Pipe(t.access_bw_bps, acc_ns) for _ in range(n_flows)]

        self.senders = [TcpSender(i, cfg.tcp) for i in range(t.n_ftp)]
        self.sinks = [TcpSink(i) for i in range(t.n_ftp)]
        self._timer_token = [0] * t.n_ftp
        self._timer_at = [None] * t.n_ftp
        self.voip = [
            VoipSource(t.n_ftp + j, rng_stream(cfg.seed, STREAM_VOIP_BASE + j), cfg.voip)
            for j in range(t.n_voip)
        ]
        self.voip_received = [0] * t.n_voip

    # -- helpers -----------------------------------------------------------

    def _send(self, pkt, now):
        """Hand a fresh packet from its source onto the access link toward G1."""
        self.metrics.record_sent(pkt)
        at = self.src_up[pkt.flow_id].transmit(pkt.size_bytes, now)
        self.events.schedule(at, EventKind.PACKET_ARRIVAL, self._at_g1, pkt)

    def _send_segments(self, i, seqs, now):
        mk = self.packets.make
        snd = self.senders[i]
        size = self.cfg.tcp.pkt_bytes
        for s in seqs:
            self._send(mk(FTP, i, s, now, size, retransmit=s in snd.retransmitted), now)
        self._arm_rto(i)

    def _arm_rto(self, i):
        deadline = self.senders[i].rto_deadline
        if deadline is None:
            return
        pending = self._timer_at[i]
        if pending is not None and pending <= deadline:
            return  # fires early and re-arms itself
        self._timer_token[i] += 1
        self._timer_at[i] = deadline
        self.events.schedule(deadline, EventKind.RTO_TIMER, self._rto_fire, (i, self._timer_token[i]))

    # -- event handlers ----------------------------------------------------

    def _start(self, _):
        now = self.events.now
        for i, snd in enumerate(self.senders):
            self._send_segments(i, snd.start(now), now)
        for src in self.voip:
            self.events.schedule(src.next_emit_at, EventKind.SOURCE_TIMER, self._voip_fire, src)
        if isinstance(self.queue, aqm.PiQueue):
            self.events.schedule(now + self.queue.sample_interval_ns, EventKind.PI_SAMPLE, self._pi_sample, None)

    def _voip_fire(self, src):
        now = self.events.now
        emissions, nxt = src.step(now)
        mk = self.packets.make
        size = self.cfg.voip.pkt_bytes
        for _, seq in emissions:
            self._send(mk(VOIP, src.flow_id, seq, now, size), now)
        if nxt <= self.t_end:
            self.events.schedule(nxt, EventKind.SOURCE_TIMER, self._voip_fire, src)

    def _pi_sample(self, _):
        now = self.events.now
        self.queue.sample(now)
        nxt = now + self.queue.sample_interval_ns
        if nxt <= self.t_end:
            self.events.schedule(nxt, EventKind.PI_SAMPLE, self._pi_sample, None)

    def _rto_fire(self, arg):
        i, token = arg
        if token != self._timer_token[i]:
            return
        self._timer_at[i] = None
        now = self.events.now
        snd = self.senders[i]
        if snd.rto_deadline is None:
            return
        if snd.rto_deadline > now:
            self._arm_rto(i)
            return
        self._send_segments(i, snd.on_timeout(now), now)

    def _at_g1(self, pkt):
        """Gateway G1: data goes into the bottleneck AQM, ACKs go back to their source."""
        now = self.events.now
        cls = pkt.cls
        if cls is ACK:
            at = self.src_down[pkt.flow_id].transmit(pkt.size_bytes, now)
            self.events.schedule(at, EventKind.PACKET_ARRIVAL, self._at_source, pkt)
            return
        if cls is not FTP and cls is not VOIP:
            raise SimulationError(f"G1 cannot route {pkt!r}")
        m = self.metrics
        decision = self.bottleneck.offer(pkt, now)
        outcome = decision.outcome
        if outcome is aqm.Outcome.ENQUEUED:
            m.record_bottleneck_enqueue(pkt, now)
        elif outcome is aqm.Outcome.DROPPED_PROBABILISTIC:
            m.record_drop(pkt, "probabilistic")
        elif outcome is aqm.Outcome.DROPPED_OVERFLOW:
            m.record_drop(pkt, "overflow")
        else:
            m.record_bottleneck_enqueue(pkt, now)
            m.record_drop(decision.victim, "victim")

    def _at_g2(self, pkt):
        """Gateway G2: forward data to its sink, ACKs onto the reverse link."""
        now = self.events.now
        cls = pkt.cls
        if cls is ACK:
            at = self.reverse.transmit(pkt.size_bytes, now)
            self.events.schedule(at, EventKind.PACKET_ARRIVAL, self._at_g1, pkt)
            return
        if cls is not FTP and cls is not VOIP:
            raise SimulationError(f"G2 cannot route {pkt!r}")
        self.metrics.record_bottleneck_delivery(pkt, now)
        at = self.sink_down[pkt.flow_id].transmit(pkt.size_bytes, now)
        self.events.schedule(at, EventKind.PACKET_ARRIVAL, self._at_sink, pkt)

    def _at_sink(self, pkt):
        now = self.events.now
        self.metrics.record_received(pkt)
        if pkt.cls is VOIP:
            self.voip_received[pkt.flow_id - len(self.senders)] += 1
            return
        if pkt.cls is not FTP:
            raise SimulationError(f"sink cannot consume {pkt!r}")
        ack_no = self.sinks[pkt.flow_id].on_data(pkt.seq)
        ack = self.packets.make(ACK, pkt.flow_id, ack_no, now, self.cfg.tcp.ack_bytes)
        self.metrics.record_sent(ack)
        at = self.sink_up[pkt.flow_id].transmit(ack.size_bytes, now)
        self.events.schedule(at, EventKind.PACKET_ARRIVAL, self._at_g2, ack)

    def _at_source(self, pkt):
        if pkt.cls is not ACK or pkt.flow_id >= len(self.senders):
            raise SimulationError(f"source node rejects foreign {pkt!r}")
        now = self.events.now
        self.metrics.record_received(pkt)
        i = pkt.flow_id
        self._send_segments(i, self.senders[i].on_ack(pkt.seq, now), now)

    def _end(self, _):
        pass

    # -- driving -----------------------------------------------------------

    def start(self):
        self.events.schedule(0, EventKind.SOURCE_TIMER, self._start, None)
        self.events.schedule(self.t_end, EventKind.SIM_END, self._end, None)

    def run_until(self, t_end=None):
        """Process events in (time, insertion) order up to and including ``t_end``."""
        if t_end is None:
            t_end = self.t_end
        ev = self.events
        heap = ev._heap
        pop = heapq.heappop
        trace = self.trace
        while heap and heap[0][0] <= t_end:
            at, seq, kind, handler, arg = pop(heap)
            ev.now = at
            if trace is not None:
                trace.append((at, seq, kind))
            if handler is not None:
                handler(arg)
        if ev.now < t_end:
            ev.now = t_end
        return self

    def in_flight(self):
        """Packets still inside the network, counted from the queue and the event heap."""
        counts = {c: 0 for c in TrafficClass}
        for pkt in self.queue:
            counts[pkt.cls] += 1
        for _, _, kind, _, arg in self.events.pending():
            if kind == EventKind.PACKET_ARRIVAL:
                counts[arg.cls] += 1
        return counts

    def finalize(self):
        return finalize(self.metrics, self.in_flight())


def build_dumbbell(cfg) -> Simulation:
    sim = Simulation(cfg)
    sim.start()
    return sim


def run_until(sim: Simulation, t_end=None) -> Simulation:
    return sim.run_until(t_end)


def simulate(cfg):
    """Build, run to ``cfg.duration_s`` and return the finalized metrics."""
    sim = build_dumbbell(cfg)
    sim.run_until()
    return sim.finalize()
