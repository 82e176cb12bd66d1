"""Robustness evaluation: accuracy under attack, ARA, and RV.

``eval_accuracy`` reports top-1 accuracy (percent) on a test set after
attacking every sample at a given radius with a deterministic-start PGD.
``ara`` integrates one accuracy row over the epsilon grid with the
composite trapezoid rule and normalizes by 100 * eps_max, so a model
that keeps 100% accuracy everywhere scores 1. ``rv`` applies the
trapezoid rule again across the coverage grid, collapsing the whole
accuracy surface into one number in [0, 1].
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .adversary import AttackConfig, pgd_attack_batch
from .errors import MetricError
from .qnn import ModelConfig, predict_batch

DEFAULT_GAMMA_GRID = (0.0, 0.2, 0.5, 0.75, 1.0)
DEFAULT_EPSILON_GRID = (0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5)

SURFACE_HEADER = ("gamma", "epsilon", "accuracy_pct")


@dataclass(frozen=True)
class RobustnessSurface:
    """Accuracy (percent) on the coverage x perturbation grid."""

    gamma_grid: np.ndarray
    epsilon_grid: np.ndarray
    accuracy: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma_grid, dtype=np.float64)
        e = np.asarray(self.epsilon_grid, dtype=np.float64)
        a = np.asarray(self.accuracy, dtype=np.float64)
        object.__setattr__(self, "gamma_grid", g)
        object.__setattr__(self, "epsilon_grid", e)
        object.__setattr__(self, "accuracy", a)
        if g.ndim != 1 or e.ndim != 1 or np.any(np.diff(g) <= 0) or np.any(np.diff(e) <= 0):
            raise MetricError("grids must be 1-D and strictly increasing")
        if a.shape != (g.size, e.size):
            raise MetricError(f"accuracy shape {a.shape} does not match {g.size}x{e.size} grid")
        if np.any(a < 0) or np.any(a > 100):
            raise MetricError("accuracy entries must lie in [0, 100]")


def eval_accuracy(
    theta: np.ndarray,
    config: ModelConfig,
    x_test: np.ndarray,
    y_test: np.ndarray,
    epsilon: float,
    attack: AttackConfig | None = None,
    batch_size: int = 512,
) -> float:
    """Percent of correct top-1 predictions after attacking every sample.

    epsilon == 0 skips the attack entirely. The attack always starts from
    the clean sample (no random start) so results are reproducible.
    """
    if x_test.shape[0] == 0:
        raise MetricError("empty test set")
    correct = 0
    for start in range(0, x_test.shape[0], batch_size):
        xb = x_test[start : start + batch_size]
        yb = y_test[start : start + batch_size]
        if epsilon > 0.0:
            base = attack or AttackConfig(epsilon=epsilon)
            atk = AttackConfig(
                epsilon=epsilon,
                steps=base.steps,
                step_size=base.step_size,
                random_start=False,
                clip_lo=base.clip_lo,
                clip_hi=base.clip_hi,
                sign_grad=base.sign_grad,
            )
            xb = pgd_attack_batch(xb, yb, theta, config, atk)
        correct += int(np.sum(predict_batch(xb, theta, config) == yb))
    return 100.0 * correct / x_test.shape[0]


def _check_grid(grid: np.ndarray, upper: float, name: str) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise MetricError(f"{name} grid must be 1-D, strictly increasing, non-empty")
    if abs(grid[0]) > 1e-12:
        raise MetricError(f"{name} grid must start at 0, got {grid[0]}")
    # A single-point grid at 0 collapses the integral mean to that point.
    if grid.size > 1 and abs(grid[-1] - upper) > 1e-12:
        raise MetricError(f"{name} grid must span [0, {upper}], got [{grid[0]}, {grid[-1]}]")
    return grid


def ara(accuracy_row, epsilon_grid, eps_max: float = 0.5) -> float:
    """Normalized area under the accuracy-vs-epsilon curve, in [0, 1]."""
    grid = _check_grid(epsilon_grid, eps_max, "epsilon")
    row = np.asarray(accuracy_row, dtype=np.float64)
    if row.shape != grid.shape:
        raise MetricError("accuracy row does not align with the epsilon grid")
    if grid.size == 1:
        return float(row[0] / 100.0)
    return float(np.trapezoid(row, grid) / (100.0 * eps_max))


def rv(surface: RobustnessSurface, gamma_max: float = 1.0, eps_max: float = 0.5) -> float:
    """Normalized volume under the full accuracy surface, in [0, 1]."""
    g = _check_grid(surface.gamma_grid, gamma_max, "gamma")
    aras = [ara(row, surface.epsilon_grid, eps_max) for row in surface.accuracy]
    if g.size == 1:
        return float(aras[0])
    return float(np.trapezoid(aras, g) / gamma_max)


def ara_mean(values) -> float:
    """Unweighted mean of per-coverage ARA values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise MetricError("ara_mean needs at least one value")
    return float(values.mean())


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_surface_csv(path, rows, append: bool = False) -> None:
    """Write (gamma, epsilon, accuracy_pct) rows with 6 decimal places."""
    mode = "a" if append else "w"
    new_file = not append
    if append:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                new_file = fh.read(1) == ""
        except FileNotFoundError:
            new_file = True
    with open(path, mode, encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(SURFACE_HEADER)
        for gamma, epsilon, acc in rows:
            writer.writerow([f"{gamma:.6f}", f"{epsilon:.6f}", f"{acc:.6f}"])


def read_surface_csv(path) -> RobustnessSurface:
    """Parse a surface CSV back into a full-grid surface."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MetricError(f"{path}: line 1: empty CSV") from None
        if tuple(header) != SURFACE_HEADER:
            raise MetricError(f"{path}: line 1: expected header {','.join(SURFACE_HEADER)}")
        cells: dict[tuple[float, float], float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                gamma, epsilon, acc = (float(v) for v in row)
            except ValueError:
                raise MetricError(f"{path}: line {lineno}: malformed row {row!r}") from None
            cells[(gamma, epsilon)] = acc
    if not cells:
        raise MetricError(f"{path}: line 2: no data rows")
    gammas = np.array(sorted({g for g, _ in cells}))
    epsilons = np.array(sorted({e for _, e in cells}))
    acc = np.empty((gammas.size, epsilons.size))
    for i, g in enumerate(gammas):
        for j, e in enumerate(epsilons):
            if (g, e) not in cells:
                raise MetricError(f"{path}: grid cell gamma={g}, epsilon={e} is missing")
            acc[i, j] = cells[(g, e)]
    return RobustnessSurface(gamma_grid=gammas, epsilon_grid=epsilons, accuracy=acc)


def write_metrics_json(path, surface: RobustnessSurface, config_digest: str) -> dict:
    """Emit {grids, per-coverage ARA, ARA mean, RV, config digest}."""
    aras = [ara(row, surface.epsilon_grid) for row in surface.accuracy]
    payload = {
        "gamma_grid": [float(g) for g in surface.gamma_grid],
        "epsilon_grid": [float(e) for e in surface.epsilon_grid],
        "ara_per_gamma": aras,
        "ara_mean": ara_mean(aras),
        "rv": rv(surface),
        "config_digest": config_digest,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload
