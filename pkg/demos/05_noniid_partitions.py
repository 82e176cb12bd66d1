"""IID versus label-sorted shards: what each client actually sees.

Run:  python demos/05_noniid_partitions.py
"""

import tempfile

import numpy as np

import qflsim as q

tmp = tempfile.mkdtemp(prefix="qflsim_demo_")
paths = q.write_synthetic_idx(tmp, n_train=900, n_test=60, seed=3)
x, y = q.preprocess(*q.load_idx(paths["train_images"], paths["train_labels"]))

for mode in ("iid", "sorted_noniid"):
    shards = q.partition(x, y, q.SplitSpec(len(y), 60, mode, 6, seed=3))
    print(f"\n{mode}: per-client class counts")
    for shard in shards:
        counts = np.bincount(shard.y, minlength=3)
        majority = counts.max() / len(shard)
        bars = " ".join(f"{c:3d}" for c in counts)
        print(f"  client {shard.client_id}:  [{bars}]  majority {majority:.2f}")
