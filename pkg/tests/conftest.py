import pytest

from aqm_lab.config import RunConfig, TopologyConfig
from aqm_lab.core import PacketFactory

# acceptance verdicts, filled by test_acceptance and echoed at session end
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS:
        terminalreporter.write_line(line)


class FixedRng:
    """Stand-in RNG returning scripted values (cycled)."""

    def __init__(self, *values):
        self.values = list(values) or [0.5]
        self.i = 0

    def uniform(self):
        x = self.values[self.i % len(self.values)]
        self.i += 1
        return x

    def uniform_open_closed(self):
        return 1.0 - self.uniform()


@pytest.fixture
def factory():
    return PacketFactory()


def small_cfg(scheme="red", n_ftp=2, n_voip=2, duration_s=2.0, seed=1, **kw):
    topo = TopologyConfig(n_ftp=n_ftp, n_voip=n_voip,
                          access_bw_bps=kw.pop("access_bw_bps", 10e6),
                          bottleneck_bw_bps=kw.pop("bottleneck_bw_bps", 50e6))
    return RunConfig(scheme=scheme, seed=seed, duration_s=duration_s, topology=topo, **kw)
