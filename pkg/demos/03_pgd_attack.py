"""Attack a trained classifier and tabulate the accuracy cliff.

Run:  python demos/03_pgd_attack.py      (about a minute)
"""

import tempfile

import numpy as np

import qflsim as q
from qflsim.metrics import eval_accuracy

tmp = tempfile.mkdtemp(prefix="qflsim_demo_")
paths = q.write_synthetic_idx(tmp, n_train=600, n_test=200, seed=2)
xtr, ytr = q.preprocess(*q.load_idx(paths["train_images"], paths["train_labels"]))
xte, yte = q.preprocess(*q.load_idx(paths["test_images"], paths["test_labels"]))

model = q.ModelConfig()
fed = q.FederationConfig(n_clients=3, coverage=0.0, regime=q.Scratch(at_rounds=25), master_seed=2)
shards = q.partition(xtr, ytr, q.SplitSpec(len(ytr), len(yte), "iid", 3, 2))
theta = q.run_experiment(shards, fed, model).theta

# One hand-rolled attack to inspect the perturbation itself.
attack = q.AttackConfig(epsilon=0.1)
x0, y0 = xte[0], int(yte[0])
adv = q.pgd_attack(x0, y0, theta, model, attack)
print("sample label:", y0)
print("clean prediction:", q.forward(x0, theta, model).label)
print("adversarial prediction:", q.forward(adv, theta, model).label)
print("max |pixel delta|:", np.abs(adv - x0).max(), "(budget 0.1)")
print("pixel range:", adv.min(), "to", adv.max())

# The accuracy curve: the sharp drop between 0.1 and 0.2 is the cliff.
print("\nepsilon   accuracy")
for eps in (0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5):
    print(f"{eps:6.2f}  {eval_accuracy(theta, model, xte, yte, eps):7.1f}%")
