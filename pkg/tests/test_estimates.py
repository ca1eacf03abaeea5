import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bergman import estimates as E
from bergman import sections as S
from bergman.errors import ConditioningError, PreconditionError, UnderflowError
from bergman.geometry import ModelGeometry, distance, geodesic_point, curvature_constants


def test_fock_decay_fit_against_closed_form():
    p = 16
    geom = ModelGeometry.fock()
    ev = S.build_evaluator(geom, p)
    pairs = E.sample_pairs(geom, p, s_max=E.common_s_max(geom, [p]))
    fit = E.fit_offdiagonal_decay(ev, pairs, p)
    assert fit.c_fit > 0 and fit.violations == 0 and fit.n_used == 1
    # the samples follow log p - pi s^2 / 2 exactly
    d, s, logm = fit.samples.T
    np.testing.assert_allclose(logm, math.log(p) - math.pi * s**2 / 2, rtol=1e-9, atol=1e-9)
    # least-squares slope of -pi s^2/2 over an even grid on [a, b] is pi (a + b) / 2
    a, b = s.min(), s.max()
    assert fit.c_fit == pytest.approx(math.pi * (a + b) / 2, rel=1e-6)
    assert np.all(logm <= fit.bound(p, d) + 1e-15)


def test_zero_distance_pairs_rejected():
    ev = S.build_evaluator(ModelGeometry.fock(), 4)
    x = np.array([0.1, 0.2j, -0.3])
    with pytest.raises(PreconditionError):
        E.fit_offdiagonal_decay(ev, (x, x.copy()), 4)


def test_underflow_reported():
    class Tiny:
        geom = ModelGeometry.fock()

        def normalized_magnitude(self, x, y):
            return np.zeros(np.shape(x))

    x = np.zeros(5, dtype=complex)
    y = np.linspace(1.0, 2.0, 5).astype(complex)
    with pytest.raises(UnderflowError):
        E.fit_offdiagonal_decay(Tiny(), (x, y), 4)


def test_sample_pairs_shape_and_distances():
    geom = ModelGeometry.disc()
    x, y = E.sample_pairs(geom, 16, s_max=3.0)
    assert x.size == y.size == 200
    s = math.sqrt(16) * distance(geom, x, y)
    assert s.min() == pytest.approx(0.5, rel=1e-9) and s.max() == pytest.approx(3.0, rel=1e-9)
    x2, y2 = E.sample_pairs(geom, 16, s_max=3.0)
    np.testing.assert_array_equal(y, y2)


def test_disc_decay_stable_across_p():
    geom = ModelGeometry.disc()
    smax = E.common_s_max(geom, [16, 64])
    c = []
    for p in (16, 64):
        fit = E.fit_offdiagonal_decay(S.build_evaluator(geom, p), E.sample_pairs(geom, p, s_max=smax), p)
        assert fit.violations == 0
        c.append(fit.c_fit)
    assert max(c) / min(c) < 1.25


@pytest.mark.parametrize("geom", [ModelGeometry.fock(), ModelGeometry.cp1(), ModelGeometry.disc()],
                         ids=["fock", "cp1", "disc"])
def test_magnitude_monotone_along_ray(geom):
    ev = S.build_evaluator(geom, 16)
    x0 = 0.2 - 0.1j
    d = np.linspace(0.0, 0.45 * E.common_s_max(geom, [16]), 60)
    mag = ev.normalized_magnitude(np.full(d.size, x0), geodesic_point(geom, x0, 0.7, d))
    assert np.all(np.diff(mag) < 0)


def test_expansion_projective_line():
    fit = E.fit_diagonal_expansion({p: p + 1.0 for p in (8, 16, 32, 64)}, 1)
    assert fit.b[0] == pytest.approx(1.0, abs=1e-8)
    assert fit.b[1] == pytest.approx(1.0, abs=1e-8)
    assert fit.p_list == [8, 16, 32, 64]


def test_expansion_fock():
    fit = E.fit_diagonal_expansion({p: float(p) for p in (2, 5, 9)}, 1)
    assert fit.b[0] == pytest.approx(1.0, abs=1e-10)
    assert fit.b[1] == pytest.approx(0.0, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_expansion_synthetic(b0, b1, b2):
    data = {p: b0 * p + b1 + b2 / p for p in (4, 8, 16, 32, 64)}
    fit = E.fit_diagonal_expansion(data, 2)
    np.testing.assert_allclose(fit.b, [b0, b1, b2], atol=1e-9)


def test_expansion_preconditions():
    with pytest.raises(PreconditionError):
        E.fit_diagonal_expansion({4: 4.0, 8: 8.0}, 1)
    with pytest.raises(ConditioningError):
        E.fit_diagonal_expansion({p: float(p) for p in (1000, 1000.001, 1000.002, 1000.003)}, 2)


def test_expansion_torus_leading_coefficient():
    geom = ModelGeometry.torus()
    dens = {p: float(S.build_evaluator(geom, p).density(0.23 + 0.41j)) for p in (8, 16, 32)}
    fit = E.fit_diagonal_expansion(dens, 1)
    assert fit.b[0] == pytest.approx(curvature_constants(geom).det_rl_over_2pi, rel=1e-2)


def test_constant_sheet():
    sheet = E.constant_sheet(ModelGeometry.torus())
    assert sheet.C_L == 0.0 and sheet.p0_formula == 0.0
    assert sheet.c_formula_given_a(0.3) ** 2 / 0.3 == pytest.approx(sheet.mu0)
    assert E.constant_sheet(ModelGeometry.fock()).p0_formula == 0.0
    disc = E.constant_sheet(ModelGeometry.disc())
    assert disc.C_L is None and disc.p0_formula is None and not disc.C_L_known


def test_torus_exact_landau_spectrum_supports_zero_C_L():
    # with C_L = 0 the lowest Landau level is exactly degenerate at every p >= 1
    from bergman.heatgap import build_gap_model
    for p in (1, 2, 3):
        assert build_gap_model(p, 16).kernel_dim == p
