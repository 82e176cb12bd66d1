#!/usr/bin/env python3
"""Render robustness figures from ``surface.csv`` files.

Two figure kinds, both driven by the same three-column CSV
(``gamma, epsilon, accuracy_pct``) that the simulator's ``eval`` and
``sweep`` commands emit:

* ``curves``  — one accuracy-versus-epsilon line per coverage level.
* ``heatmap`` — the full coverage x epsilon accuracy matrix.

Usage:
    python figures.py --kind curves  --in surface.csv --out curves.png
    python figures.py --kind heatmap --in surface.csv --out heatmap.png

Input files are never modified. The data-preparation helpers are kept
separate from the drawing code so callers (and tests) can inspect
exactly what gets plotted.
"""

from __future__ import annotations

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = ("gamma", "epsilon", "accuracy_pct")


class SchemaError(ValueError):
    """The CSV does not match the surface schema."""


def read_surface(path) -> list[tuple[float, float, float]]:
    """Parse (gamma, epsilon, accuracy) rows, validating the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}, found {header}")
        rows = []
        for lineno, record in enumerate(reader, start=2):
            try:
                rows.append(
                    (
                        float(record["gamma"]),
                        float(record["epsilon"]),
                        float(record["accuracy_pct"]),
                    )
                )
            except (TypeError, ValueError):
                raise SchemaError(f"{path}: line {lineno}: malformed row {record}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def build_curves(rows) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Group rows into one (gamma, epsilons, accuracies) series per coverage."""
    series = {}
    for gamma, eps, acc in rows:
        series.setdefault(gamma, []).append((eps, acc))
    out = []
    for gamma in sorted(series):
        pts = sorted(series[gamma])
        eps = np.array([p[0] for p in pts])
        acc = np.array([p[1] for p in pts])
        out.append((gamma, eps, acc))
    return out


def build_matrix(rows) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrange rows into a dense gamma x epsilon matrix; ragged grids are errors."""
    gammas = np.array(sorted({g for g, _, _ in rows}))
    epsilons = np.array(sorted({e for _, e, _ in rows}))
    cells = {(g, e): a for g, e, a in rows}
    matrix = np.empty((gammas.size, epsilons.size))
    for i, g in enumerate(gammas):
        for j, e in enumerate(epsilons):
            if (g, e) not in cells:
                raise SchemaError(f"ragged grid: no cell for gamma={g}, epsilon={e}")
            matrix[i, j] = cells[(g, e)]
    return gammas, epsilons, matrix


def render_curves(rows, out_path, title="Accuracy under attack"):
    curves = build_curves(rows)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for gamma, eps, acc in curves:
        ax.plot(eps, acc, marker="o", markersize=4, label=f"coverage {gamma:.0%}")
    ax.set_xlabel("perturbation radius (l-inf)")
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(-2, 102)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return curves


def render_heatmap(rows, out_path, title="Accuracy surface"):
    gammas, epsilons, matrix = build_matrix(rows)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    image = ax.imshow(matrix, aspect="auto", origin="lower", cmap="viridis", vmin=0, vmax=100)
    ax.set_xticks(range(epsilons.size), [f"{e:g}" for e in epsilons])
    ax.set_yticks(range(gammas.size), [f"{g:.0%}" for g in gammas])
    ax.set_xlabel("perturbation radius (l-inf)")
    ax.set_ylabel("defended coverage")
    ax.set_title(title)
    for i in range(gammas.size):
        for j in range(epsilons.size):
            ax.text(j, i, f"{matrix[i, j]:.0f}", ha="center", va="center",
                    color="w" if matrix[i, j] < 60 else "k", fontsize=8)
    fig.colorbar(image, ax=ax, label="accuracy [%]")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return gammas, epsilons, matrix


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", choices=("curves", "heatmap"), required=True)
    parser.add_argument("--in", dest="surface", required=True, help="surface.csv path")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        rows = read_surface(args.surface)
        if args.kind == "curves":
            render_curves(rows, args.out, args.title or "Accuracy under attack")
        else:
            render_heatmap(rows, args.out, args.title or "Accuracy surface")
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
