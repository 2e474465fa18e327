"""FedAvg against FedAvg with ECGR on a synthetic 10-class problem, five seeds.

Takes about a minute. Prints per-seed final accuracy, the per-round mean
curves every five rounds, and the late-half selection fraction.
"""

import numpy as np

from fedecgr.experiments import DeskSetup, run_paired

setup = DeskSetup()
res = run_paired(setup)

base, ecgr = res.accuracy("baseline"), res.accuracy("ecgr")
print("seed   fedavg   +ecgr   delta")
for s, b, e in zip(setup.seeds, base[:, -1], ecgr[:, -1]):
    print(f"{s:>4}  {b:.4f}  {e:.4f}  {100 * (e - b):+.2f}")
print(f"mean  {base[:, -1].mean():.4f}  {ecgr[:, -1].mean():.4f}")

print("\nround  fedavg  +ecgr")
for r in range(4, setup.algo.rounds, 5):
    print(f"{r + 1:>5}  {base[:, r].mean():.4f}  {ecgr[:, r].mean():.4f}")

print(f"\nlate-half selection fraction: {res.late_half_fraction():.3f}")
