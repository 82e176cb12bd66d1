"""Untargeted projected gradient descent in the l-infinity ball.

The attack ascends the loss by signed pixel gradients, then projects
back onto the epsilon box around the clean input intersected with the
valid pixel range. Both projections are boxes, so clamping one after the
other is the exact projection onto the intersection.

Evaluation attacks run with a deterministic start so reported accuracy
tables are reproducible; training attacks draw a random start inside the
ball from the caller's generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .qnn import ModelConfig, grad_input_batch

EPSILON_MAX = 0.5


@dataclass(frozen=True)
class AttackConfig:
    """PGD hyperparameters. ``step_size`` defaults to 2.5 * epsilon / steps."""

    epsilon: float
    steps: int = 10
    step_size: float | None = None
    random_start: bool = False
    clip_lo: float = 0.0
    clip_hi: float = 1.0
    seed: int = 0
    sign_grad: bool = True

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= EPSILON_MAX:
            raise ConfigError(f"epsilon must lie in [0, {EPSILON_MAX}], got {self.epsilon}")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.clip_lo >= self.clip_hi:
            raise ConfigError("clip_lo must be below clip_hi")
        if self.epsilon > 0 and self.resolved_step() <= 0:
            raise ConfigError("step_size must be positive when epsilon > 0")

    def resolved_step(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.epsilon / self.steps


def pgd_attack_batch(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    config: ModelConfig,
    attack: AttackConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Attack a batch of pixel rows; returns perturbed copies."""
    x0 = np.asarray(x, dtype=np.float64)
    if attack.epsilon == 0.0:
        return x0.copy()
    eps = attack.epsilon
    alpha = attack.resolved_step()
    if attack.random_start:
        if rng is None:
            rng = np.random.default_rng(attack.seed)
        adv = x0 + rng.uniform(-eps, eps, size=x0.shape)
        adv = np.clip(adv, attack.clip_lo, attack.clip_hi)
    else:
        adv = x0.copy()
    for _ in range(attack.steps):
        g = grad_input_batch(adv, y, theta, config)
        step = np.sign(g) if attack.sign_grad else g
        adv = adv + alpha * step
        adv = np.clip(adv, x0 - eps, x0 + eps)
        adv = np.clip(adv, attack.clip_lo, attack.clip_hi)
    return adv


def pgd_attack(x, y: int, theta, config: ModelConfig, attack: AttackConfig) -> np.ndarray:
    """Attack one sample. Deterministic when ``random_start`` is off."""
    x = np.asarray(x, dtype=np.float64)
    adv = pgd_attack_batch(x[None, :], np.array([y]), theta, config, attack)
    return adv[0]


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def attack_batch(
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    config: ModelConfig,
    attack: AttackConfig,
    rho: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Replace a seeded-shuffle fraction ``rho`` of the batch by attacked samples.

    Exactly round(rho * batch) rows are perturbed; labels and row order
    are untouched.
    """
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must lie in [0, 1], got {rho}")
    x = np.asarray(x, dtype=np.float64)
    n_adv = _round_half_up(rho * x.shape[0])
    if n_adv == 0:
        return x.copy()
    picked = rng.permutation(x.shape[0])[:n_adv]
    out = x.copy()
    out[picked] = pgd_attack_batch(x[picked], np.asarray(y)[picked], theta, config, attack, rng)
    return out
