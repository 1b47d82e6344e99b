#!/usr/bin/env python3
# Paired simulation of the two anticipation methods with one noisy dancer.
# Both methods see the same human events for a given seed, so differences
# come from the robot alone.

import time

from syncteam.metrics import histogram_text
from syncteam.model import Method
from syncteam.sim import DancerModel, SimConfig, run_comparison

cfg = SimConfig(dancers=(DancerModel(jitter_sd=0.45), DancerModel(), DancerModel()))

t0 = time.time()
summary = run_comparison(cfg, n_runs=30)
print(f"30 paired runs in {time.time() - t0:.1f}s")

print("\nseed  SIA mean GSI  ECA mean GSI  winner")
for seed, pc in zip(summary.seeds, summary.pairs):
    print(f"{seed:4d}  {pc.sia.mean_gsi:12.4f}  {pc.eca.mean_gsi:12.4f}  {pc.mean_winner}")
print("wins:", summary.winner_counts)

for m in (Method.SIA, Method.ECA):
    mean, sd = summary.ta_stats(m)
    print(f"{m.value} timing appropriateness: mean {mean:.3f}s sd {sd:.3f}s")

w = summary.wilcoxon
print(f"Wilcoxon on {w.n_effective} paired events: z={w.z:.2f} p={w.p_two_sided:.2e} r={w.effect_r:.2f}")

print()
print(histogram_text(summary.histogram(Method.SIA), "SIA"))
print(histogram_text(summary.histogram(Method.ECA), "ECA"))
