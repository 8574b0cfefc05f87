"""Per-run counters, the bottleneck delay sum, and CSV output.

Total link delay is the sum over packets that crossed the bottleneck of
(arrival at the far gateway - enqueue at the near gateway).  It is
accumulated in integer nanoseconds and converted to seconds once, on output.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

from .core import NS_PER_S, TrafficClass


class AccountingError(RuntimeError):
    """Counters that do not add up, or a delivery with no matching enqueue."""


DROP_KINDS = ("probabilistic", "overflow", "victim")


@dataclass
class ClassCounters:
    sent: int = 0
    received: int = 0
    dropped_probabilistic: int = 0
    dropped_overflow: int = 0
    dropped_victim: int = 0
    in_flight: int = 0

    @property
    def dropped(self):
        return self.dropped_probabilistic + self.dropped_overflow + self.dropped_victim


@dataclass
class MetricsRecord:
    scheme: str = ""
    scenario: str = "custom"
    varied_flows: int = 0
    seed: int = 0
    duration_s: float = 0.0
    counters: dict = field(default_factory=lambda: {c: ClassCounters() for c in TrafficClass})
    total_link_delay_ns: int = 0
    delivered_across_bottleneck: int = 0
    keep_delay_log: bool = False
    delay_log: list = field(default_factory=list)
    finalized: bool = False
    mean_link_delay_s: float = 0.0
    _enq: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, cls):
        return self.counters[cls]

    @property
    def total_link_delay_s(self):
        return self.total_link_delay_ns / NS_PER_S

    def record_sent(self, pkt):
        self.counters[pkt.cls].sent += 1

    def record_received(self, pkt):
        self.counters[pkt.cls].received += 1

    def record_drop(self, pkt, kind):
        c = self.counters[pkt.cls]
        if kind == "probabilistic":
            c.dropped_probabilistic += 1
        elif kind == "overflow":
            c.dropped_overflow += 1
        elif kind == "victim":
            c.dropped_victim += 1
        else:
            raise ValueError(f"unknown drop kind {kind!r}")
        self._enq.pop(pkt.id, None)

    def record_bottleneck_enqueue(self, pkt, now):
        self._enq[pkt.id] = now

    def record_bottleneck_delivery(self, pkt, now):
        try:
            t_enq = self._enq.pop(pkt.id)
        except KeyError:
            raise AccountingError(f"{pkt!r} left the bottleneck without a recorded enqueue") from None
        d = now - t_enq
        self.total_link_delay_ns += d
        self.delivered_across_bottleneck += 1
        if self.keep_delay_log:
            self.delay_log.append((t_enq, now))

    def ledger(self):
        lines = []
        for cls, c in self.counters.items():
            lines.append(
                f"{cls.name}: sent={c.sent} received={c.received} "
                f"drop_prob={c.dropped_probabilistic} drop_overflow={c.dropped_overflow} "
                f"drop_victim={c.dropped_victim} in_flight={c.in_flight}"
            )
        return "\n".join(lines)


def record_bottleneck_enqueue(rec, pkt, now):
    rec.record_bottleneck_enqueue(pkt, now)


def record_bottleneck_delivery(rec, pkt, now):
    rec.record_bottleneck_delivery(pkt, now)


def finalize(rec: MetricsRecord, in_flight=None) -> MetricsRecord:
    """Check sent = received + drops + in-flight for every class.

    ``in_flight`` maps class -> packets still in the network at the end; it
    must come from an independent count (queue contents plus pending
    arrivals), not from the other counters.
    """
    if in_flight is not None:
        for cls in TrafficClass:
            rec.counters[cls].in_flight = in_flight.get(cls, 0)
    bad = []
    for cls, c in rec.counters.items():
        values = (c.sent, c.received, c.dropped_probabilistic, c.dropped_overflow,
                  c.dropped_victim, c.in_flight)
        if min(values) < 0:
            bad.append(cls)
        elif c.sent != c.received + c.dropped + c.in_flight:
            bad.append(cls)
    if rec.total_link_delay_ns < 0:
        raise AccountingError(f"negative total link delay\n{rec.ledger()}")
    if bad:
        names = ", ".join(c.name for c in bad)
        raise AccountingError(f"conservation violated for {names}\n{rec.ledger()}")
    n = rec.delivered_across_bottleneck
    rec.mean_link_delay_s = rec.total_link_delay_s / n if n else 0.0
    rec.finalized = True
    return rec


CSV_HEADER = (
    "scheme", "scenario", "varied_flows", "seed", "duration_s",
    "ftp_sent", "ftp_received", "voip_sent", "voip_received",
    "ftp_dropped", "voip_dropped", "total_link_delay_s", "mean_link_delay_s",
)


def csv_row(rec: MetricsRecord):
    ftp = rec.counters[TrafficClass.FTP_DATA]
    voip = rec.counters[TrafficClass.VOIP]
    return (
        rec.scheme, rec.scenario, str(rec.varied_flows), str(rec.seed), repr(float(rec.duration_s)),
        str(ftp.sent), str(ftp.received), str(voip.sent), str(voip.received),
        str(ftp.dropped), str(voip.dropped),
        f"{rec.total_link_delay_s:.9f}", f"{rec.mean_link_delay_s:.12g}",
    )


def to_csv_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        if not rec.finalized:
            raise AccountingError("write_csv needs finalized records")
        w.writerow(csv_row(rec))
    return buf.getvalue()


def write_csv(records, destination) -> None:
    text = to_csv_text(records)
    path = os.fspath(destination)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc
