"""Kernels of L^p on the four model curves and their off-diagonal decay.

Run: python demos/01_kernel_and_decay.py
"""
import math

import numpy as np

from bergman import estimates as E
from bergman import sections as S
from bergman.geometry import ModelGeometry, distance

MODELS = [ModelGeometry.fock(), ModelGeometry.cp1(), ModelGeometry.torus(), ModelGeometry.disc()]

print("Density on the diagonal: p for flat models, p + 1 on CP1, p - 1/2 on the disc.")
for geom in MODELS:
    row = []
    for p in (4, 16, 64):
        ev = S.build_evaluator(geom, p)
        row.append(f"p={p}: {float(ev.density(np.array([0.1 + 0.05j]))[0]):10.6f}")
    print(f"  {geom.name:6s}", "  ".join(row))

print("\nFock space check against p exp(-p pi |z - w|^2 / 2):")
ev = S.build_evaluator(ModelGeometry.fock(), 16)
z, w = 0.4 + 0.3j, -0.2 + 0.1j
exact = 16 * math.exp(-16 * math.pi * abs(z - w) ** 2 / 2)
print(f"  computed {float(ev.normalized_magnitude(z, w)):.15e}\n  exact    {exact:.15e}")

print("\nFitted decay log|P_p|_h <= log C + log p - c sqrt(p) d (zero violations by construction):")
ps = [16, 32, 64]
for geom in MODELS:
    s_max = E.common_s_max(geom, ps)
    fits = []
    for p in ps:
        ev = S.build_evaluator(geom, p)
        fits.append(E.fit_offdiagonal_decay(ev, E.sample_pairs(geom, p, s_max=s_max), p))
    cs = ", ".join(f"{f.c_fit:.3f}" for f in fits)
    print(f"  {geom.name:6s} sqrt(p) d in [0.5, {s_max:.2f}]  c = {cs}  violations = "
          f"{sum(f.violations for f in fits)}")

print("\nThe diagonal expansion P_p(x, x) = b0 p + b1 + b2/p on CP1 recovers b0 = 1, b1 = 1:")
dens = {p: float(S.build_evaluator(ModelGeometry.cp1(), p).density(np.array([0.3j]))[0])
        for p in (8, 16, 32, 64)}
fit = E.fit_diagonal_expansion(dens, 2)
print("  b =", [f"{b:.12f}" for b in fit.b])
