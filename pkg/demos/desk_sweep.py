"""Both scenarios at one tenth scale, averaged over seeds.

Scenario 1 holds 10 bulk flows and adds voice; scenario 2 holds 10 voice
flows and adds bulk.  Takes a few minutes per scenario on one core; pass
``--quick`` for 20 s runs and two seeds.  Writes CSVs to ./desk_results.
"""

import sys
from collections import defaultdict

import numpy as np

from aqm_lab import RunConfig, SweepSpec, run_sweep
from aqm_lab.core import TrafficClass

quick = "--quick" in sys.argv
seeds = [1, 2] if quick else [1, 2, 3, 4, 5]
base = RunConfig(scheme="msqm", duration_s=20.0 if quick else 60.0)

for scenario in (1, 2):
    spec = SweepSpec(scenario=scenario, flows=(0, 200, 50), seeds=seeds, scale=0.1)
    recs = run_sweep(spec, base, out="desk_results")

    table = defaultdict(list)
    for r in recs:
        table[r.scheme, r.varied_flows].append(
            (r[TrafficClass.FTP_DATA].received, r[TrafficClass.VOIP].received, r.total_link_delay_s))

    varied = "voice" if scenario == 1 else "bulk"
    print(f"\nscenario {scenario}: mean over {len(seeds)} seeds, varying {varied} flows")
    print(f"{'scheme':6} {'flows':>5} {'ftp rx':>9} {'voip rx':>9} {'delay s':>9}")
    for (scheme, n), rows in table.items():
        ftp, voip, delay = np.mean(rows, axis=0)
        print(f"{scheme:6} {n:5d} {ftp:9.0f} {voip:9.0f} {delay:9.1f}")
