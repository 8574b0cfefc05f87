"""How the size threshold tracks a mixed packet stream.

Feeds a stream of voice (160 B) and bulk (1040 B) packets through the
threshold average and prints how the scaled drop probability treats each
size at a fixed RED probability.
"""

import numpy as np

from aqm_lab.aqm import msqm_drop_prob, msqm_update_threshold


class State:
    alpha = 0.1
    thresh_initialized = False
    msqm_thresh = 0.0


rng = np.random.default_rng(3)
state = State()

# one bulk packet in four
sizes = rng.choice([160, 1040], size=400, p=[0.75, 0.25])
trace = [msqm_update_threshold(state, int(s)) for s in sizes]

print("first ten thresholds:", np.round(trace[:10], 1))
print("mean over the last 200 arrivals: %.1f bytes" % np.mean(trace[200:]))
print("expected mix mean: %.1f bytes" % (0.75 * 160 + 0.25 * 1040))

red_drop = 0.1
t = trace[-1]
for size in (40, 160, 1040):
    print(f"{size:5d} B -> drop prob {msqm_drop_prob(red_drop, size, t):.4f}  (RED alone: {red_drop})")

# after a burst of large packets the threshold climbs and voice is protected more
for _ in range(20):
    msqm_update_threshold(state, 1040)
print("after 20 bulk packets: thresh %.1f, voice prob %.4f"
      % (state.msqm_thresh, msqm_drop_prob(red_drop, 160, state.msqm_thresh)))
