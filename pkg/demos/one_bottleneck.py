"""One congested dumbbell, four queue disciplines.

10 bulk TCP flows and 20 voice flows share a 5 Mb/s bottleneck for 30 s.
Prints deliveries, drops and the summed bottleneck delay per scheme.
"""

from aqm_lab import RunConfig, run_once
from aqm_lab.config import TopologyConfig
from aqm_lab.core import TrafficClass

FTP, VOIP = TrafficClass.FTP_DATA, TrafficClass.VOIP

topo = TopologyConfig(n_ftp=10, n_voip=20, access_bw_bps=1e6, bottleneck_bw_bps=5e6)

print(f"{'scheme':6} {'ftp rx':>8} {'ftp drop':>9} {'voip rx':>8} {'voip drop':>10} {'delay s':>9} {'mean ms':>8}")
for scheme in ("msqm", "red", "rio", "pi"):
    rec = run_once(RunConfig(scheme=scheme, seed=1, duration_s=30.0, topology=topo))
    f, v = rec[FTP], rec[VOIP]
    print(f"{scheme:6} {f.received:8d} {f.dropped:9d} {v.received:8d} {v.dropped:10d} "
          f"{rec.total_link_delay_s:9.2f} {rec.mean_link_delay_s * 1e3:8.2f}")
    if scheme == "msqm":
        print(f"{'':6} (of the FTP drops, {f.dropped_victim} were evicted to admit smaller packets)")
