"""Which local steps get picked as convergent, with and without momentum.

With heavy-ball momentum and a buffer that restarts every round, the first
few displacements are the smallest ones, so herding leans on them. Without
momentum the picks spread across the epoch. The deviation audit compares
both uploads with the displacement an exact full-gradient client would make.
"""

from dataclasses import replace

import numpy as np

from fedecgr.analysis import selection_stats
from fedecgr.experiments import DeskSetup, run_paired

for momentum in (0.9, 0.0):
    setup = DeskSetup()
    setup = replace(setup, seeds=(0, 42), algo=replace(setup.algo, momentum=momentum))
    res = run_paired(setup, audit=True)
    masks = [m for s in setup.seeds for m in res.ecgr[s].masks]
    stats = selection_stats(masks)
    # histogram of selected positions relative to the epoch length
    pos = np.concatenate([np.array(m.selected_indices) / m.tau for m in masks])
    hist, _ = np.histogram(pos, bins=5, range=(0, 1))
    dev = res.deviation_summary()
    print(f"momentum={momentum}")
    print(f"  late-half fraction {stats['mean']:.3f}")
    print(f"  selected positions by epoch fifth {hist}")
    print(f"  assumption held in {dev.held}/{dev.pairs} audited pairs, "
          f"ECGR closer in {100 * dev.reduced_fraction:.1f}% of those")
