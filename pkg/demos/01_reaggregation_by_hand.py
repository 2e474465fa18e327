"""Re-aggregating a handful of local steps by hand.

Four 2-D steps, the greedy herding order, the split into convergent and
exploratory halves, and the rescaled update. Run: python3 demos/01_reaggregation_by_hand.py
"""

import numpy as np

from fedecgr.ecgr import GradientSet, apply_ecgr, herding_path
from fedecgr.linalg import norm

steps = np.array([
    [1.0, 0.0],   # early step, big and pointing away
    [0.4, 0.6],
    [0.1, 0.5],
    [-0.2, 0.3],  # late step, small
])
gs = GradientSet(steps)
print("plain sum      ", gs.total(), "norm", round(norm(gs.total()), 4))

path = herding_path(gs)
print("greedy order   ", path.order)
print("partial norms  ", np.round(path.partial_norms, 4))

for beta in (1.0, 0.5, 0.2, 0.0):
    res, split = apply_ecgr(gs, beta)
    print(f"beta={beta:<4} pi={split.pi} pi'={split.pi_prime} "
          f"g'={np.round(res.g_prime, 4)} gamma={res.gamma:.4f} |g'|={norm(res.g_prime):.4f}")

# the norm never moves; only the direction tilts towards the convergent half
