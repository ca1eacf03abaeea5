"""Spectral gap of the discrete magnetic Laplacian on the square torus, and heat identities.

Run: python demos/02_spectral_gap_and_heat.py
"""
import math

import numpy as np

from bergman import heatgap as H

print("Landau levels 4 pi p k: kernel dimension p and the first gap under refinement.")
for p in (2, 4, 8):
    for N in (16, 32, 64):
        if N * N < 16 * p:
            continue
        m = H.build_gap_model(p, N)
        print(f"  p={p:2d} N={N:3d}  kernel_dim={m.kernel_dim}  "
              f"first level / (4 pi p) = {m.first_nonzero / (4 * math.pi * p):.5f}")

model = H.build_gap_model(4, 16)
print("\nHeat semigroup minus the projector equals the integral of its derivative:")
res = H.projector_integral_identity(model, 1.0)
print(f"  matrix residual {res.matrix_residual:.2e}, scalar residual {res.scalar_residual:.2e}")

us, agrid = [0.5, 1, 2, 5, 10], np.linspace(0.05, 3, 60)
heat = H.gaussian_bound_check(model, us, agrid, "heat")
gap = H.gaussian_bound_check(model, us, agrid, "gap")
print("\nGaussian bounds |W(x, x')| <= C p exp(e u - a p d^2 / u):")
print(f"  heat operator:       a = {heat.a_fit:.2f}")
print(f"  (1/p) D^2 variant:   a = {gap.a_fit:.2f}, sup decays with slope {gap.decay_slope:.2f}"
      f" <= -mu0/2 = {-math.pi:.2f}")

print("\nCutoff decomposition K + H = exp(-u a^2):")
a = np.linspace(0, 5, 11)
K, Hh = H.cutoff_kernels(H.CutoffPair(1.5, 4.0), a)
print(f"  max error {np.max(np.abs(K + Hh - np.exp(-1.5 * a * a))):.1e}; "
      f"max |K| (the far part) {np.max(np.abs(K)):.1e}")
