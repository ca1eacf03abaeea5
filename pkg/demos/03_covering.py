"""The torus kernel as a lattice sum of the plane kernel.

Run: python demos/03_covering.py
"""
import numpy as np

from bergman import covering as C
from bergman.quadrature import build_rule

rng = np.random.default_rng(0)
for tau in (1j, 0.5 + 1j):
    print(f"tau = {tau}")
    for p in (3, 6, 12):
        setup = C.build_covering(p, tau)
        window = C.choose_window(setup)
        x = rng.random(20) + rng.random(20) * tau
        y = rng.random(20) + rng.random(20) * tau
        res, cs, _ = C.covering_residual(setup, window, x, y)
        print(f"  p={p:2d}  window radius {window.radius:5.2f} ({cs.n_terms:3d} terms)  "
              f"truncation bound {window.truncation_error_bound:.1e}  max residual {res.max():.1e}")

setup = C.build_covering(5, 1j)
gd = C.gamma_dimension(setup, build_rule(setup.geom, 60))
print(f"\nGamma-dimension at p = 5: {gd:.12f} (lower bound {C.gamma_dimension_lower_bound(setup)})")
