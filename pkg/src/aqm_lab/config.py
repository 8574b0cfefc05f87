"""Run configuration: dataclass blocks plus a strict YAML loader.

Schema (every key optional except ``scheme``; shown with defaults)::

    scheme: msqm            # msqm | red | rio | pi  (required)
    seed: 1
    duration_s: 60.0
    scenario: null          # 1 | 2 | null, metadata for CSV rows only
    topology:
      n_ftp: 0
      n_voip: 0
      access_bw_bps: 10.0e6
      access_delay_s: 0.001
      bottleneck_bw_bps: 50.0e6
      bottleneck_delay_s: 0.010
    red:
      min_th_bytes: 15000   # max_th = 3x, buffer = 8x
      max_p: 0.1
      q_weight: 0.002
      mean_pkt_bytes: 1040
      gentle: true
      byte_mode: true
    msqm:
      alpha: 0.1
      ecn_mode: small_arrival     # small_arrival | overflow_or_hot | overflow_only | always
      victim_larger: true         # evict only packets larger than the arrival
    rio:
      in_min_th_bytes: 30000
      out_min_th_bytes: 15000
      max_p: 0.1
    pi:
      a: 1.822e-5
      b: 1.816e-5
      q_ref_pkts: 50
      sample_hz: 170.0
      cap_pkts: null        # null: red buffer / mean_pkt_bytes
    voip: {rate_bps: 78000, pkt_bytes: 160, on_mean_s: 1.0, off_mean_s: 1.35, shape: 1.5}
    tcp: {pkt_bytes: 1040, ack_bytes: 40, initial_cwnd: 2.0, initial_ssthresh: 10000.0,
          rwnd_pkts: 10000, initial_rto_s: 1.0, min_rto_s: 0.2, max_rto_s: 60.0}
    output:
      path: null
      delay_log: false

Unknown keys are rejected.  Numbers written like ``10e6`` (which YAML 1.1
reads as strings) are accepted for float fields.
"""

from __future__ import annotations

import dataclasses
import logging
import typing
from dataclasses import dataclass, field

import yaml

from .aqm import EcnMode
from .core import InvalidParameter, require
from .traffic import TcpParams, VoipParams

log = logging.getLogger(__name__)

SCHEMES = ("msqm", "red", "rio", "pi")


class ConfigError(ValueError):
    pass


@dataclass
class TopologyConfig:
    n_ftp: int = 0
    n_voip: int = 0
    access_bw_bps: float = 10e6
    access_delay_s: float = 0.001
    bottleneck_bw_bps: float = 50e6
    bottleneck_delay_s: float = 0.010

    def __post_init__(self):
        require(self.n_ftp >= 0, "n_ftp", "must be >= 0")
        require(self.n_voip >= 0, "n_voip", "must be >= 0")
        require(self.access_bw_bps > 0, "access_bw_bps", "must be positive")
        require(self.bottleneck_bw_bps > 0, "bottleneck_bw_bps", "must be positive")
        require(self.access_delay_s >= 0, "access_delay_s", "must be >= 0")
        require(self.bottleneck_delay_s >= 0, "bottleneck_delay_s", "must be >= 0")


@dataclass
class RedConfig:
    min_th_bytes: int = 15_000
    max_p: float = 0.1
    q_weight: float = 0.002
    mean_pkt_bytes: int = 1040
    gentle: bool = True
    byte_mode: bool = True

    def __post_init__(self):
        require(self.min_th_bytes > 0, "min_th_bytes", "must be positive")
        require(0 < self.max_p <= 1, "max_p", "must lie in (0, 1]")
        require(0 < self.q_weight <= 1, "q_weight", "must lie in (0, 1]")
        require(self.mean_pkt_bytes > 0, "mean_pkt_bytes", "must be positive")

    @property
    def max_th_bytes(self):
        return 3 * self.min_th_bytes

    @property
    def buffer_cap_bytes(self):
        return 8 * self.min_th_bytes


@dataclass
class MsqmConfig:
    alpha: float = 0.1
    ecn_mode: str = EcnMode.SMALL_ARRIVAL.value
    victim_larger: bool = True

    def __post_init__(self):
        require(0 < self.alpha <= 1, "alpha", "must lie in (0, 1]")
        modes = [m.value for m in EcnMode]
        require(self.ecn_mode in modes, "ecn_mode", f"must be one of {modes}")


@dataclass
class RioConfig:
    in_min_th_bytes: int = 30_000
    out_min_th_bytes: int = 15_000
    max_p: float = 0.1

    def __post_init__(self):
        require(self.in_min_th_bytes > 0, "in_min_th_bytes", "must be positive")
        require(self.out_min_th_bytes > 0, "out_min_th_bytes", "must be positive")
        require(self.out_min_th_bytes <= self.in_min_th_bytes, "out_min_th_bytes",
                "must not exceed in_min_th_bytes")
        require(0 < self.max_p <= 1, "max_p", "must lie in (0, 1]")


@dataclass
class PiConfig:
    a: float = 1.822e-5
    b: float = 1.816e-5
    q_ref_pkts: int = 50
    sample_hz: float = 170.0
    cap_pkts: typing.Optional[int] = None

    def __post_init__(self):
        require(self.q_ref_pkts >= 0, "q_ref_pkts", "must be >= 0")
        require(self.sample_hz > 0, "sample_hz", "must be positive")
        require(self.cap_pkts is None or self.cap_pkts > 0, "cap_pkts", "must be positive")


@dataclass
class OutputConfig:
    path: typing.Optional[str] = None
    delay_log: bool = False


@dataclass
class RunConfig:
    scheme: str
    seed: int = 1
    duration_s: float = 60.0
    scenario: typing.Optional[int] = None
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    red: RedConfig = field(default_factory=RedConfig)
    msqm: MsqmConfig = field(default_factory=MsqmConfig)
    rio: RioConfig = field(default_factory=RioConfig)
    pi: PiConfig = field(default_factory=PiConfig)
    voip: VoipParams = field(default_factory=VoipParams)
    tcp: TcpParams = field(default_factory=TcpParams)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        require(self.scheme in SCHEMES, "scheme", f"must be one of {list(SCHEMES)}")
        require(self.duration_s > 0, "duration_s", "must be positive")
        require(self.scenario in (None, 1, 2), "scenario", "must be 1, 2 or null")
        require(0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")

    @property
    def varied_flows(self):
        t = self.topology
        if self.scenario == 1:
            return t.n_voip
        if self.scenario == 2:
            return t.n_ftp
        return t.n_ftp + t.n_voip

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# strict loader


def _line_index(node, prefix=(), out=None):
    """Map key paths to 1-based source lines from a composed YAML node."""
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            out[path] = k.start_mark.line + 1
            _line_index(v, path, out)
    return out


def _where(path, lines):
    name = ".".join(path) if path else "<document>"
    line = lines.get(tuple(path))
    return f"{name} (line {line})" if line else name


def _coerce(value, tp, path, lines):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path, lines)
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{_where(path, lines)}: expected true/false, got {value!r}")
    if tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{_where(path, lines)}: expected an integer, got {value!r}")
    if tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{_where(path, lines)}: expected a number, got {value!r}")
    if tp is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{_where(path, lines)}: expected a string, got {value!r}")
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path, lines)
    raise ConfigError(f"{_where(path, lines)}: unsupported field type {tp!r}")


def _build(cls, data, path, lines):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{_where(path, lines)}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{_where(path + (str(key),), lines)}: unknown key")
    kwargs = {}
    for name, f in known.items():
        sub = path + (name,)
        if name in data:
            kwargs[name] = _coerce(data[name], hints[name], sub, lines)
        elif dataclasses.is_dataclass(hints[name]):
            kwargs[name] = _build(hints[name], {}, sub, lines)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{_where(sub, lines)}: required key missing")
        else:
            log.debug("default %s = %r", ".".join(sub),
                      f.default if f.default is not dataclasses.MISSING else f.default_factory())
    try:
        return cls(**kwargs)
    except InvalidParameter as exc:
        raise ConfigError(f"{_where(path + (exc.field,), lines)}: {exc.message}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(path, lines)}: {exc}") from None


def config_from_dict(data) -> RunConfig:
    return _build(RunConfig, data, (), {})


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    lines = _line_index(node) if node is not None else {}
    return _build(RunConfig, data, (), lines)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
