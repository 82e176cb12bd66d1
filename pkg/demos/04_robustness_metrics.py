"""From an accuracy surface to two scalar robustness scores.

ARA integrates one accuracy-versus-perturbation row (trapezoid rule,
normalized so the perfect model scores 1). RV integrates ARA once more
across the coverage grid. Both live in [0, 1].

Run:  python demos/04_robustness_metrics.py
"""

import numpy as np

from qflsim import RobustnessSurface, ara, ara_mean, rv, write_surface_csv

eps_grid = np.array([0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5])
gamma_grid = np.array([0.0, 0.2, 0.5, 0.75, 1.0])

# A plausible surface: accuracy decays with attack strength, defended
# coverage slows the decay.
accuracy = np.array(
    [[100 * np.exp(-e * (12 - 6 * g)) for e in eps_grid] for g in gamma_grid]
).round(1)

surface = RobustnessSurface(gamma_grid, eps_grid, accuracy)

print("coverage   area-under-curve")
areas = []
for g, row in zip(gamma_grid, accuracy):
    a = ara(row, eps_grid)
    areas.append(a)
    print(f"{g:8.2f}   {a:.5f}")

print("\nmean area :", round(ara_mean(areas), 6))
print("volume    :", round(rv(surface), 6))

rows = [(g, e, accuracy[i, j]) for i, g in enumerate(gamma_grid) for j, e in enumerate(eps_grid)]
write_surface_csv("demo_surface.csv", rows)
print("\nwrote demo_surface.csv — try:")
print("  python -m qflsim report --in demo_surface.csv --out demo_report")
print("  python figures/figures.py --kind curves --in demo_surface.csv --out demo_curves.png")
