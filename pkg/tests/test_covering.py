import math

import numpy as np
import pytest

from bergman import covering as C
from bergman import sections as S
from bergman.errors import WindowTooSmallError
from bergman.geometry import ModelGeometry, potential
from bergman.quadrature import build_rule


@pytest.fixture(scope="module", params=[1j, 0.5 + 1j], ids=["square", "sheared"])
def setup(request):
    return C.build_covering(4, request.param)


def cell_points(tau, n, rng):
    st = rng.random((n, 2))
    return st[:, 0] + st[:, 1] * tau


def test_upstairs_diagonal_constant(setup, rng):
    z = 5 * (rng.standard_normal(20) + 1j * rng.standard_normal(20))
    _, mag = C.upstairs_kernel(setup, z, z)
    np.testing.assert_allclose(mag, setup.p, rtol=1e-14)


def test_upstairs_hermitian(rng):
    su = C.build_covering(3, 1j)
    z, w = cell_points(1j, 10, rng), cell_points(1j, 10, rng)
    np.testing.assert_allclose(C.upstairs_kernel(su, z, w)[0], np.conj(C.upstairs_kernel(su, w, z)[0]),
                               rtol=1e-13)


def test_upstairs_magnitude_depends_on_distance(rng):
    su = C.build_covering(3, 1j)
    z = cell_points(1j, 20, rng) * 3
    w = cell_points(1j, 20, rng) * 3
    raw, mag = C.upstairs_kernel(su, z, w)
    gauge = su.p * (potential(su.geom, z) + potential(su.geom, w))
    np.testing.assert_allclose(np.abs(raw) * np.exp(-gauge), mag, rtol=1e-10)
    # rigid motion of the pair leaves the magnitude unchanged
    shift, rot = 1.7 - 0.4j, np.exp(0.8j)
    _, mag2 = C.upstairs_kernel(su, rot * z + shift, rot * w + shift)
    np.testing.assert_allclose(mag2, mag, rtol=1e-12)


def test_upstairs_matches_truncated_basis_oracle(rng):
    # twisted Fock space: P~(z, w) = e^{-p g(z)} K_F(z, w) e^{-p conj g(w)}, g = pi z^2 / 2 on tau = i,
    # with K_F built from the truncated monomial basis
    p = 3
    su = C.build_covering(p, 1j)
    fock = S.build_evaluator(ModelGeometry.fock(chart_bound=2.5), p)
    z = 0.8 * (rng.random(15) - 0.5 + 1j * (rng.random(15) - 0.5))
    w = z + 0.2 * (rng.random(15) - 0.5 + 1j * (rng.random(15) - 0.5))
    kf, _ = fock.eval_kernel(z, w)
    g = lambda t: math.pi * t**2 / 2  # noqa: E731
    oracle = np.exp(-p * g(z)) * kf * np.exp(-p * np.conj(g(w)))
    np.testing.assert_allclose(C.upstairs_kernel(su, z, w)[0], oracle, rtol=1e-9)


def test_cocycle_identity_and_modulus(setup, rng):
    g_all, _, _ = C.lattice_points(setup.tau, 3.0)
    assert C.automorphy_cocycle(setup, 0.0, 0.3 + 0.2j) == 1
    for _ in range(20):
        g1, g2 = rng.choice(g_all, 2)
        z = cell_points(setup.tau, 1, rng)[0]
        lhs = C.automorphy_cocycle(setup, g1 + g2, z)
        rhs = C.automorphy_cocycle(setup, g1, z + g2) * C.automorphy_cocycle(setup, g2, z)
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)
        mod = np.exp(setup.p * (potential(setup.geom, z + g1) - potential(setup.geom, z)))
        assert abs(abs(C.automorphy_cocycle(setup, g1, z)) - mod) < 1e-12 * mod


def test_cocycle_transforms_theta_sections(setup, rng):
    basis = setup.downstairs.basis
    z = cell_points(setup.tau, 5, rng)
    for gam in (1.0, setup.tau, 2 - setup.tau):
        e = C.automorphy_cocycle(setup, gam, z)
        np.testing.assert_allclose(basis.values(z + gam), e[:, None] * basis.values(z), rtol=1e-9)


def test_cocycle_rejects_non_lattice(setup):
    with pytest.raises(ValueError):
        C.automorphy_cocycle(setup, 0.5, 0.0)


def test_lattice_enumeration_complete(setup):
    R = 4.3
    g, idx, _ = C.lattice_points(setup.tau, R)
    b = setup.tau.imag
    brute = {(m, n) for m in range(-20, 21) for n in range(-20, 21)
             if abs(m + n * setup.tau) / math.sqrt(b) <= R}
    assert set(map(tuple, idx.tolist())) == brute
    norms = np.abs(g) / math.sqrt(b)
    assert np.all(np.diff(norms) >= 0)


def test_lattice_count():
    su = C.build_covering(1, 1j)
    assert C.lattice_count(su, 0.0) == 1
    assert C.lattice_count(su, 1.01) == 5
    for r in (1.0, 2.0, 5.0, 11.0):
        assert C.lattice_count(su, 2 * r) / C.lattice_count(su, r) <= 16
        assert C.lattice_count(su, r) <= math.pi * (1 + r) ** 2 + 1


@pytest.mark.parametrize("p", [3, 5, 8])
def test_covering_identity(p, rng):
    for tau in (1j, 0.5 + 1j):
        su = C.build_covering(p, tau)
        win = C.choose_window(su, 1e-7)
        assert win.truncation_error_bound < 1e-7
        res, _, _ = C.covering_residual(su, win, cell_points(tau, 20, rng), cell_points(tau, 20, rng))
        assert res.max() < 1e-6


def test_covering_shift_covariance(setup, rng):
    win = C.choose_window(setup, 1e-9)
    x, y = cell_points(setup.tau, 10, rng), cell_points(setup.tau, 10, rng)
    g0 = 1 - setup.tau
    a = C.covering_sum(setup, C.make_window(setup, win.radius + 3), x, y).normalized
    b = C.covering_sum(setup, C.make_window(setup, win.radius + 3), x + g0, y).normalized
    np.testing.assert_allclose(np.abs(b), np.abs(a), rtol=1e-10)


def test_window_shrink_within_bound(setup, rng):
    win = C.choose_window(setup, 1e-7)
    small = C.make_window(setup, win.radius - 1)
    x, y = cell_points(setup.tau, 10, rng), cell_points(setup.tau, 10, rng)
    diff = np.abs(C.covering_sum(setup, win, x, y).normalized - C.covering_sum(setup, small, x, y).normalized)
    assert np.all(diff <= small.truncation_error_bound)


def test_residual_decreases_with_radius(setup, rng):
    x, y = cell_points(setup.tau, 1, rng), cell_points(setup.tau, 1, rng)
    res = [C.covering_residual(setup, C.make_window(setup, r), x, y)[0][0] for r in (0.5, 1, 1.5, 2, 2.5, 3)]
    assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))


def test_partial_sums_cauchy(setup, rng):
    x, y = cell_points(setup.tau, 1, rng), cell_points(setup.tau, 1, rng)
    for r in (1.0, 1.5, 2.0):
        w = C.make_window(setup, r)
        inc = abs(C.covering_sum(setup, C.make_window(setup, r + 2), x, y).normalized[0]
                  - C.covering_sum(setup, w, x, y).normalized[0])
        assert inc <= w.truncation_error_bound


def test_window_too_small(setup):
    w = C.make_window(setup, 0.5)
    with pytest.raises(WindowTooSmallError):
        C.covering_sum(setup, w, 0.1, 0.2, tol=1e-12)


@pytest.mark.parametrize("p", [1, 4])
def test_gamma_dimension(p):
    su = C.build_covering(p, 1j)
    val = C.gamma_dimension(su, build_rule(su.geom, 8))
    assert val == pytest.approx(float(p), abs=1e-6)
    assert val >= C.gamma_dimension_lower_bound(su) * (1 - 1e-9)
