"""Train a small federation end to end and watch the rounds go by.

Generates a synthetic three-class dataset, shards it across 5 clients,
runs a short fine-tune schedule with half the clients defended, and
prints the round log plus final clean accuracy.

Run:  python demos/02_train_federation.py      (about half a minute)
"""

import tempfile

import qflsim as q
from qflsim.metrics import eval_accuracy

tmp = tempfile.mkdtemp(prefix="qflsim_demo_")
paths = q.write_synthetic_idx(tmp, n_train=500, n_test=150, seed=1)
xtr, ytr = q.preprocess(*q.load_idx(paths["train_images"], paths["train_labels"]))
xte, yte = q.preprocess(*q.load_idx(paths["test_images"], paths["test_labels"]))

model = q.ModelConfig()
spec = q.SplitSpec(n_train=len(ytr), n_test=len(yte), mode="iid", n_clients=5, seed=1)
shards = q.partition(xtr, ytr, spec)
print("shard sizes:", [len(s) for s in shards])

fed = q.FederationConfig(
    n_clients=5,
    coverage=0.5,                      # 3 of 5 clients defended
    schedule=q.Fixed(0.1),
    regime=q.FineTune(clean_rounds=12, at_rounds=4),
    master_seed=1,
)
result = q.run_experiment(shards, fed, model)

for rec in result.rounds:
    tag = "defended" if rec.round_index >= 12 else "clean"
    print(f"round {rec.round_index:2d} [{tag:8s}]  mean loss {rec.mean_train_loss:.4f}"
          f"  ({rec.elapsed_ms:6.0f} ms)")

for eps in (0.0, 0.1):
    acc = eval_accuracy(result.theta, model, xte, yte, eps)
    print(f"test accuracy at perturbation {eps:.2f}: {acc:.1f}%")
