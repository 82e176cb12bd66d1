"""The classifier: amplitude encoding, layered ansatz, Z readout, MSE loss.

A pixel vector x in [0,1]^d is L2-normalized and padded into the
amplitudes of an ``n_qubits`` register. The circuit applies ``n_layers``
of single-qubit RY/RZ rotations (one fresh angle each) followed by a
CNOT ring. Class scores are (<Z_c> + 1) / 2 on the readout qubits, so
each score lies in [0, 1]; the loss is the mean squared error against a
one-hot target.

Gradients with respect to the angle vector and with respect to the raw
pixels both run through the adjoint sweep in :mod:`qflsim.simcore`; the
pixel path additionally applies the Jacobian of the normalization,
(I - xhat xhat^T) / ||x||, restricted to the first ``input_dim``
amplitudes.

Batched variants (``forward_batch``, ``grad_params_batch``,
``grad_input_batch``) evaluate many samples per numpy call and are the
entry points used by training, attacks, and evaluation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .simcore import (
    CNOT,
    RY,
    RZ,
    CircuitProgram,
    GateOp,
    StateVector,
    _adjoint_multi_raw,
    _expect_z_raw,
    _run_ops_raw,
)


class ZeroInputWarning(UserWarning):
    """An all-zero pixel vector was substituted by the uniform vector."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the classifier."""

    n_qubits: int = 6
    n_layers: int = 2
    n_classes: int = 3
    readout_qubits: tuple[int, ...] = (0, 1, 2)
    input_dim: int = 64

    def __post_init__(self):
        object.__setattr__(self, "readout_qubits", tuple(self.readout_qubits))
        if self.n_qubits < 1 or self.n_layers < 0:
            raise ConfigError("n_qubits must be >= 1 and n_layers >= 0")
        if self.input_dim < 1 or (1 << self.n_qubits) < self.input_dim:
            raise ConfigError(
                f"2^n_qubits = {1 << self.n_qubits} cannot hold input_dim = {self.input_dim}"
            )
        if self.n_classes != len(self.readout_qubits):
            raise ConfigError("n_classes must equal the number of readout qubits")
        if len(set(self.readout_qubits)) != self.n_classes:
            raise ConfigError("readout qubits must be distinct")
        if any(not 0 <= q < self.n_qubits for q in self.readout_qubits):
            raise ConfigError("readout qubit out of range")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def n_params(self) -> int:
        return 2 * self.n_layers * self.n_qubits


@dataclass(frozen=True)
class Prediction:
    scores: np.ndarray
    label: int


def build_ansatz(config: ModelConfig) -> CircuitProgram:
    """Layered circuit: RY on every qubit, RZ on every qubit, CNOT ring."""
    n = config.n_qubits
    ops: list[GateOp] = []
    p = 0
    for _ in range(config.n_layers):
        for q in range(n):
            ops.append(GateOp(RY, target=q, angle_index=p))
            p += 1
        for q in range(n):
            ops.append(GateOp(RZ, target=q, angle_index=p))
            p += 1
        if n >= 2:
            for q in range(n):
                ops.append(GateOp(CNOT, target=(q + 1) % n, control=q))
    return CircuitProgram(n_qubits=n, ops=tuple(ops), n_params=p)


# Programs are tiny and immutable; memoize per config.
_ANSATZ_CACHE: dict[ModelConfig, CircuitProgram] = {}


def _ansatz(config: ModelConfig) -> CircuitProgram:
    prog = _ANSATZ_CACHE.get(config)
    if prog is None:
        prog = _ANSATZ_CACHE.setdefault(config, build_ansatz(config))
    return prog


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _encode_batch(x: np.ndarray, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """L2-normalize rows of ``x`` and pad into (B, 2**n_qubits) amplitudes.

    All-zero rows are replaced by the uniform vector; the returned boolean
    mask marks them.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ConfigError(f"expected pixel rows of length {config.input_dim}, got {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    amps = np.zeros((x.shape[0], config.dim), dtype=np.complex128)
    amps[:, : config.input_dim] = x / safe[:, None]
    if zero.any():
        amps[zero, : config.input_dim] = 1.0 / np.sqrt(config.input_dim)
    return amps, zero


def encode(x, config: ModelConfig) -> StateVector:
    """Amplitude-encode one pixel vector; warns if it was all zero."""
    amps, zero = _encode_batch(np.asarray(x, dtype=np.float64)[None, :], config)
    if zero[0]:
        warnings.warn("all-zero input replaced by the uniform vector", ZeroInputWarning)
    return StateVector(amps[0])


# ---------------------------------------------------------------------------
# Forward pass and loss
# ---------------------------------------------------------------------------


def _scores_from_amps(amps: np.ndarray, config: ModelConfig, theta: np.ndarray) -> np.ndarray:
    final = _run_ops_raw(amps, _ansatz(config).ops, theta, config.n_qubits)
    expv = np.stack(
        [_expect_z_raw(final, q, config.n_qubits) for q in config.readout_qubits], axis=-1
    )
    return (expv + 1.0) / 2.0


def _check_theta(theta, config: ModelConfig) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (config.n_params,):
        raise ConfigError(f"expected {config.n_params} parameters, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ConfigError("parameters must be finite")
    return theta


def forward_batch(x: np.ndarray, theta, config: ModelConfig) -> np.ndarray:
    """Class scores for a batch of pixel rows, shape (B, n_classes)."""
    theta = _check_theta(theta, config)
    amps, _ = _encode_batch(x, config)
    return _scores_from_amps(amps, config, theta)


def forward(x, theta, config: ModelConfig) -> Prediction:
    """Scores and argmax label for one sample (lowest index wins ties)."""
    scores = forward_batch(np.asarray(x, dtype=np.float64)[None, :], theta, config)[0]
    return Prediction(scores=scores, label=int(np.argmax(scores)))


def predict_batch(x: np.ndarray, theta, config: ModelConfig) -> np.ndarray:
    return np.argmax(forward_batch(x, theta, config), axis=1)


def loss(pred: Prediction, label: int) -> float:
    """MSE of the score vector against a one-hot target."""
    scores = np.asarray(pred.scores, dtype=np.float64)
    if not 0 <= label < scores.size:
        raise ConfigError(f"label {label} out of range for {scores.size} classes")
    onehot = np.zeros(scores.size)
    onehot[label] = 1.0
    return float(np.mean((scores - onehot) ** 2))


def _loss_rows(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    onehot = np.zeros_like(scores)
    onehot[np.arange(scores.shape[0]), labels] = 1.0
    return np.mean((scores - onehot) ** 2, axis=1)


def _loss_weights(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """dLoss/d<Z_c> per sample: the 2 from the square and the 1/2 of the
    score map cancel, leaving (score - onehot) / n_classes."""
    onehot = np.zeros_like(scores)
    onehot[np.arange(scores.shape[0]), labels] = 1.0
    return (scores - onehot) / scores.shape[1]


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


def _check_labels(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ConfigError(f"labels must lie in [0, {n_classes})")
    return y


def grad_params_batch(x: np.ndarray, y, theta, config: ModelConfig) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. the angle vector."""
    theta = _check_theta(theta, config)
    y = _check_labels(y, config.n_classes)
    amps, _ = _encode_batch(x, config)
    expv, dtheta, _ = _adjoint_multi_raw(
        _ansatz(config), amps, theta, config.readout_qubits, want_init=False
    )
    scores = (expv.T + 1.0) / 2.0  # (B, C)
    w = _loss_weights(scores, y)
    grad = np.einsum("bc,cbp->p", w, dtheta) / x.shape[0]
    return float(np.mean(_loss_rows(scores, y))), grad


def grad_params(x, label: int, theta, config: ModelConfig) -> np.ndarray:
    """dLoss/dtheta for one sample."""
    _, grad = grad_params_batch(
        np.asarray(x, dtype=np.float64)[None, :], np.array([label]), theta, config
    )
    return grad


def grad_input_batch(x: np.ndarray, y, theta, config: ModelConfig) -> np.ndarray:
    """dLoss/dx per sample, shape (B, input_dim); zero rows get zero gradient."""
    theta = _check_theta(theta, config)
    y = _check_labels(y, config.n_classes)
    x = np.asarray(x, dtype=np.float64)
    amps, zero = _encode_batch(x, config)
    expv, _, dinit = _adjoint_multi_raw(
        _ansatz(config), amps, theta, config.readout_qubits, want_theta=False
    )
    scores = (expv.T + 1.0) / 2.0
    w = _loss_weights(scores, y)  # (B, C)
    # Amplitudes are real, so only the real component of the packed
    # amplitude gradient feeds the pixel chain.
    g_amp = np.einsum("bc,cbd->bd", w, dinit.real)[:, : config.input_dim]
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(zero, 1.0, norms)
    xhat = x / safe[:, None]
    radial = np.einsum("bd,bd->b", g_amp, xhat)
    grad = (g_amp - radial[:, None] * xhat) / safe[:, None]
    grad[zero] = 0.0
    return grad


def grad_input(x, label: int, theta, config: ModelConfig) -> np.ndarray:
    """dLoss/dx for one sample; warns and returns zeros for all-zero input."""
    x = np.asarray(x, dtype=np.float64)
    if not x.any():
        warnings.warn("all-zero input has zero encoder gradient", ZeroInputWarning)
    return grad_input_batch(x[None, :], np.array([label]), theta, config)[0]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, theta, config: ModelConfig) -> None:
    """Write the documented JSON checkpoint: ModelConfig fields plus theta[]."""
    theta = _check_theta(theta, config)
    payload = {
        "n_qubits": config.n_qubits,
        "n_layers": config.n_layers,
        "n_classes": config.n_classes,
        "readout_qubits": list(config.readout_qubits),
        "input_dim": config.input_dim,
        "theta": [float(v) for v in theta],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[np.ndarray, ModelConfig]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        config = ModelConfig(
            n_qubits=payload["n_qubits"],
            n_layers=payload["n_layers"],
            n_classes=payload["n_classes"],
            readout_qubits=tuple(payload["readout_qubits"]),
            input_dim=payload["input_dim"],
        )
        theta = np.asarray(payload["theta"], dtype=np.float64)
    except KeyError as exc:
        raise ConfigError(f"checkpoint {path} is missing field {exc}") from exc
    if theta.shape != (config.n_params,):
        raise ConfigError(
            f"checkpoint {path} carries {theta.size} parameters, model expects {config.n_params}"
        )
    return theta, config


def config_to_dict(config: ModelConfig) -> dict:
    d = asdict(config)
    d["readout_qubits"] = list(config.readout_qubits)
    return d
