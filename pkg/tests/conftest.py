import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import qflsim as q


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Small synthetic dataset shared by data/federation/CLI tests."""
    root = tmp_path_factory.mktemp("idx")
    paths = q.write_synthetic_idx(root, 600, 150, seed=0)
    xtr, ytr = q.preprocess(*q.load_idx(paths["train_images"], paths["train_labels"]))
    xte, yte = q.preprocess(*q.load_idx(paths["test_images"], paths["test_labels"]))
    return {"paths": paths, "train": (xtr, ytr), "test": (xte, yte)}


@pytest.fixture(scope="session")
def toy_model():
    """2-qubit / 2-class classifier trained on a separable toy problem.

    Used by the attack tests: PGD ascent and monotone-threat checks need
    a model with real structure, not random parameters.
    """
    from qflsim.federation import AdamState, adam_step, initial_params
    from qflsim.qnn import grad_params_batch

    cfg = q.ModelConfig(n_qubits=2, n_layers=2, n_classes=2, readout_qubits=(0, 1), input_dim=4)
    rng = np.random.default_rng(11)

    def sample(n):
        y = rng.integers(0, 2, n)
        base = np.where(y[:, None] == 0, [0.9, 0.7, 0.15, 0.1], [0.1, 0.15, 0.7, 0.9])
        x = np.clip(base + rng.normal(0, 0.08, (n, 4)), 0.0, 1.0)
        return x, y

    x_train, y_train = sample(400)
    theta = initial_params(cfg, 5)
    opt = AdamState(np.zeros(cfg.n_params), np.zeros(cfg.n_params))
    for start in range(0, 4000, 40):
        sel = np.arange(start % 400, start % 400 + 40) % 400
        _, g = grad_params_batch(x_train[sel], y_train[sel], theta, cfg)
        theta, opt = adam_step(theta, g, opt, 0.02, 0.9, 0.999, 1e-8)
    x_test, y_test = sample(200)
    return {"config": cfg, "theta": theta, "test": (x_test, y_test)}
