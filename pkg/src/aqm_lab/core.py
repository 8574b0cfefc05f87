"""Shared primitives: integer-nanosecond time, packets, traffic classes, RNG streams.

Simulated time is an ``int`` count of nanoseconds so that event ordering is
exact and identical on every platform.  Helpers convert to and from seconds at
the edges (configuration in, CSV out).
"""

from __future__ import annotations

import enum
import itertools

import numpy as np

NS_PER_S = 1_000_000_000

HEADER_BYTES = 40
VOIP_PKT_BYTES = 160
FTP_PKT_BYTES = 1040
ACK_PKT_BYTES = 40


def seconds(t_ns: int) -> float:
    return t_ns / NS_PER_S


def to_ns(t_s: float) -> int:
    return int(round(t_s * NS_PER_S))


def serialization_ns(size_bytes: int, bandwidth_bps: float) -> int:
    """Time to clock ``size_bytes`` onto a link, rounded to the nearest ns."""
    return int(round(size_bytes * 8 * NS_PER_S / bandwidth_bps))


class TrafficClass(enum.IntEnum):
    VOIP = 0
    FTP_DATA = 1
    TCP_ACK = 2


DEFAULT_SIZES = {
    TrafficClass.VOIP: VOIP_PKT_BYTES,
    TrafficClass.FTP_DATA: FTP_PKT_BYTES,
    TrafficClass.TCP_ACK: ACK_PKT_BYTES,
}


class Packet:
    """A simulated datagram.  Only sizes and timestamps matter, there is no payload."""

    __slots__ = (
        "id",
        "cls",
        "size_bytes",
        "flow_id",
        "seq",
        "created_at",
        "enqueued_at",
        "stored_drop_prob",
        "retransmit",
    )

    def __init__(self, id, cls, size_bytes, flow_id, seq, created_at, retransmit=False):
        if size_bytes < HEADER_BYTES:
            raise ValueError(f"packet size {size_bytes} below the {HEADER_BYTES}-byte header floor")
        self.id = id
        self.cls = cls
        self.size_bytes = size_bytes
        self.flow_id = flow_id
        self.seq = seq
        self.created_at = created_at
        self.enqueued_at = None
        self.stored_drop_prob = None
        self.retransmit = retransmit

    def __repr__(self):
        return (
            f"Packet(id={self.id}, cls={self.cls.name}, size={self.size_bytes}, "
            f"flow={self.flow_id}, seq={self.seq})"
        )


class PacketFactory:
    """Hands out run-unique packet ids."""

    def __init__(self):
        self._ids = itertools.count()

    def make(self, cls, flow_id, seq, now, size_bytes=None, retransmit=False):
        if size_bytes is None:
            size_bytes = DEFAULT_SIZES[cls]
        return Packet(next(self._ids), cls, size_bytes, flow_id, seq, now, retransmit)


class RngStream:
    """Deterministic uniform stream keyed by ``(seed, stream_id)``.

    Backed by numpy's PCG64 seeded through ``SeedSequence(seed,
    spawn_key=(stream_id,))``, the documented way of deriving independent
    child streams from one root seed.  Draws are pulled in blocks so the
    per-call cost stays low; the block size does not affect the sequence.
    """

    BLOCK = 4096

    def __init__(self, seed: int, stream_id: int):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self._buf = []
        self._pos = 0

    def uniform(self) -> float:
        """Next variate in [0, 1)."""
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self.BLOCK).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x

    def uniform_open_closed(self) -> float:
        """Next variate in (0, 1]."""
        return 1.0 - self.uniform()

    def __eq__(self, other):
        if not isinstance(other, RngStream):
            return NotImplemented
        return (self.seed, self.stream_id) == (other.seed, other.stream_id)

    def __hash__(self):
        return hash((self.seed, self.stream_id))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def rng_stream(seed: int, stream_id: int) -> RngStream:
    return RngStream(seed, stream_id)


def rng_uniform(stream: RngStream) -> float:
    return stream.uniform()


# stream-id layout: one stream per stochastic entity so adding flows never
# perturbs another entity's draws
STREAM_BOTTLENECK_AQM = 0
STREAM_VOIP_BASE = 1_000


class InvalidParameter(ValueError):
    """A parameter outside its valid range; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def require(cond, field, message):
    if not cond:
        raise InvalidParameter(field, message)
