"""What Dirichlet label skew looks like at alpha = 0.01 and alpha = 1."""

import numpy as np

from fedecgr.data import PartitionSpec, dirichlet_partition, label_entropy, make_synthetic

ds = make_synthetic(10, 32, 200, 3.0, seed=7)

for alpha in (0.01, 1.0, 1e6):
    part = dirichlet_partition(ds, PartitionSpec(10, alpha, seed=42, min_batches=2, batch_size=32))
    print(f"\nalpha={alpha:g}")
    print("client  size  entropy  label histogram")
    for i, ix in enumerate(part.indices):
        counts = ds.label_counts(ix)
        print(f"{i:>6} {len(ix):>5} {label_entropy(counts):>8.3f}  {counts}")
    ent = [label_entropy(ds.label_counts(ix)) for ix in part.indices]
    print(f"mean entropy {np.mean(ent):.3f} nats (uniform would be {np.log(10):.3f})")
