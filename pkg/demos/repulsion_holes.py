"""
Holes around particles
======================

The repulsive samplers propose against a version of the target with holes
dug around the other particles. The width parameter xi sets how big the
holes are; a second Metropolis test against the true target removes the
bias they introduce. This script shows what the holes cost.
"""

import numpy as np

from hybridmc import (
    RandomWalkKernel,
    RepulsiveConfig,
    build_kernel_importance,
    estimate_norm_const_ratio,
    mh_rp_step,
    toy_mixture,
)

toy = toy_mixture()
rng = np.random.default_rng(0)
particles = rng.normal(size=(10, 2)) + np.where(rng.random(10) < 0.5, 0.0, 5.0)[:, None]

# Fraction of first-stage accepts that survive the correction test.
print("xi        eta")
for xi in [0.0, 1e-5, 1e-3, 1e-1]:
    P = np.broadcast_to(particles, (2000, 10, 2)).copy()
    prop = corr = 0
    for i in range(10):
        out = mh_rp_step(toy, RandomWalkKernel(4.0), i, P, RepulsiveConfig(xi), rng)
        prop += int(out.counters[0].sum())
        corr += int(out.counters[1].sum())
    print(f"{xi:<8g}  {corr / prop:.4f}")

# For population Monte Carlo the holes are cut into the kernel mixture, and
# the importance weights need the mass the holes removed.
g = build_kernel_importance(particles, 2.5)
print("\nnu    C' (xi = 1e-2)")
for nu in [0.0, 0.3, 0.6, 0.9]:
    c = estimate_norm_const_ratio(g, RepulsiveConfig(1e-2, nu), particles, 50, rng)
    print(f"{nu:<4}  {c.value:.4f}")
