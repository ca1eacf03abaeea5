"""Peak sections: separation, local coordinates, convexity and an escaping section.

Run: python demos/04_peak_sections.py
"""
import numpy as np

from bergman import applications as A
from bergman import estimates as E
from bergman import sections as S
from bergman.geometry import ModelGeometry, geodesic_point

torus = ModelGeometry.torus()
for p in (1, 2, 3):
    ev = S.build_evaluator(torus, p)
    print(f"torus p={p}: separation ratio {A.separation_ratio(ev, 0.1, 0.6 + 0.3j):.3f}, "
          f"coordinate ratio {A.coordinate_ratio(ev, 0.2 + 0.1j):.3f}")
print("  (p = 1 has one section, so both ranks collapse; its zero sits at (1 + tau)/2)")

disc = ModelGeometry.disc()
p = 16
ev = S.build_evaluator(disc, p)
fit = E.fit_offdiagonal_decay(ev, E.sample_pairs(disc, p, s_max=E.common_s_max(disc, [p])), p)
K = A.MetricBall(0j, 1.0)
delta = A.decay_delta(fit, p, 1e-3, 10.0, (2 * p - 1) / 2)
probes = geodesic_point(disc, 0j, np.linspace(0, 6, 5), 1.0 + delta + 0.05)
cert = A.convexity_construct(ev, fit, K, 1e-3, 10.0, probes)
print(f"\nDisc p={p}: K = ball of radius 1, K(eps, M) = ball of radius {1 + cert.delta:.3f}")
for x, at_x, on_k in cert.witness_points:
    print(f"  probe {x:.3f}: |S(x)| = {at_x:.3f} >= 10, max_K |S| = {on_k:.2e} <= 1e-3")

p = 32
ev = S.build_evaluator(disc, p)
fit = E.fit_offdiagonal_decay(ev, E.sample_pairs(disc, p, s_max=E.common_s_max(disc, [p])), p)
print(f"\nEscaping section on the disc at p={p}:")
for r in A.escaping_section(ev, fit, A.default_escape_sequence(disc), 5):
    print(f"  stage {r.stage}: point #{r.index:2d}, |sum S_j| = {r.running_sum:7.3f} >= {2 ** (r.stage - 1)}, "
          f"max on K_{r.stage} = {r.max_on_K:.1e}")
