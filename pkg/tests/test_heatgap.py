import math

import numpy as np
import pytest

from bergman import heatgap as G
from bergman.errors import BoundViolationError, DiscretizationError

MU0 = 2 * math.pi


@pytest.fixture(scope="module")
def model4():
    return G.build_gap_model(4, 16)


def test_laplacian_hermitian(model4):
    H = model4.matrix
    assert abs(H - H.conj().T).max() < 1e-13


def test_plaquette_flux():
    # product of links around every plaquette is exp(i 2 pi p / N^2)
    p, N = 3, 8
    L = G.magnetic_laplacian(p, N).toarray() / N**2
    U = -L  # hopping amplitudes; U[a, b] is the link from a to b
    idx = np.arange(N * N).reshape(N, N)
    for k in range(N):
        for j in range(N):
            a, b = idx[k, j], idx[k, (j + 1) % N]
            c, d = idx[(k + 1) % N, (j + 1) % N], idx[(k + 1) % N, j]
            phase = U[a, b] * U[b, c] * U[c, d] * U[d, a]
            assert np.angle(phase) == pytest.approx(2 * math.pi * p / N**2, abs=1e-12)


@pytest.mark.parametrize("p,N", [(1, 8), (4, 16), (3, 12)])
def test_kernel_dimension_equals_p(p, N):
    assert G.build_gap_model(p, N).kernel_dim == p


def test_gap_ratio_converges():
    r16 = G.build_gap_model(4, 16).gap_ratio
    r32 = G.build_gap_model(4, 32).gap_ratio
    assert 0.9 <= r16 <= 1.1
    assert abs(r32 - 1) < abs(r16 - 1)


def test_sparse_and_dense_agree():
    dense = G.build_gap_model(2, 24)
    sparse = G.build_gap_model(2, 24, n_eigs=12)
    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues[:12], atol=1e-8)
    assert not sparse.complete and sparse.kernel_dim == 2


def test_flux_too_large():
    with pytest.raises(DiscretizationError):
        G.build_gap_model(5, 8)


def test_excited_level_degeneracy(model4):
    # each Landau level of the discrete model carries p states
    lam = model4.heat_eigenvalues
    first = lam[4:8]
    assert np.ptp(first) < 1e-8 * first[0]


def test_heat_small_time():
    # |W(u) - I| ~ (u/p) * max|H_ii|; at the coarsest admissible grid this is below 1e-6
    m = G.build_gap_model(4, 8)
    assert np.abs(G.heat_operator(m, 1e-8) - np.eye(64)).max() < 1e-6


def test_heat_trace_large_time(model4):
    W = G.heat_operator(model4, 50 * model4.p)
    assert np.trace(W).real == pytest.approx(model4.kernel_dim, abs=1e-8)


def test_semigroup(model4):
    W = lambda u: G.heat_operator(model4, u)  # noqa: E731
    assert np.abs(W(0.3) @ W(0.9) - W(1.2)).max() < 1e-10


def test_heat_hermitian_and_contractive(model4):
    W = G.heat_operator(model4, 0.7)
    assert np.abs(W - W.conj().T).max() < 1e-12
    assert np.trace(W).real > 0
    P = G.kernel_projector(model4)
    norm = np.linalg.norm(W @ (np.eye(W.shape[0]) - P), 2)
    lam1 = model4.heat_eigenvalues[model4.kernel_dim]
    assert norm == pytest.approx(math.exp(-0.7 * lam1 / 4), rel=1e-10)
    # discrete spectral defect of the first level stays within 10 percent of 2 p mu0
    assert norm <= math.exp(-(2 * 4 * MU0 * 0.9) * 0.7 / 4)


@pytest.mark.parametrize("u", [0.5, 1.0, 5.0])
def test_projector_identity(model4, u):
    r = G.projector_integral_identity(model4, u)
    assert r.scalar_residual < 1e-12
    assert r.matrix_residual < 1e-8


def test_gaussian_bounds(model4):
    us = [0.5, 1, 2, 5, 10]
    a = np.linspace(0.05, 3, 60)
    heat = G.gaussian_bound_check(model4, us, a, "heat")
    gap = G.gaussian_bound_check(model4, us, a, "gap")
    rem = G.gaussian_bound_check(model4, us, a, "remainder")
    assert heat.a_fit > 0 and gap.a_fit > 0 and rem.a_fit > 0
    # the gap variant decays at least like e^{-mu0 u / 2}
    assert gap.decay_slope <= -MU0 / 2
    sup = np.array(gap.sup_log) + 0.5 * MU0 * np.array(us)
    assert np.all(np.diff(sup) <= 1e-9)


def test_remainder_diagonal_decay(model4):
    # |W_u(x, x) - P(x, x)| <= C e^{-mu0 u / 2} for large u
    P = G.kernel_projector(model4)
    vals = [abs((G.heat_operator(model4, u) - P)[0, 0]) * math.exp(MU0 * u / 2) for u in (2, 4, 8)]
    assert vals[2] <= vals[1] <= vals[0]


def test_gaussian_bound_rejects_bad_u(model4):
    with pytest.raises(ValueError):
        G.gaussian_bound_check(model4, [0.1], [1.0])


def test_gaussian_bound_violation_signalled(model4):
    with pytest.raises(BoundViolationError):
        G.gaussian_bound_check(model4, [0.5], [1e6])


# ---- cutoff decomposition --------------------------------------------------

def test_bump_properties():
    cp = G.CutoffPair(1.0, 2.0, eps_cut=0.8)
    v = np.linspace(-2, 2, 4001)
    f = cp.f(v)
    assert np.all((f >= 0) & (f <= 1))
    np.testing.assert_array_equal(f, cp.f(-v))
    assert np.all(f[np.abs(v) <= 0.4] == 1) and np.all(f[np.abs(v) >= 0.8] == 0)


def test_cutoff_sum_zero_frequency():
    K, H = G.cutoff_kernels(G.CutoffPair(1.3, 3.0), 0.0)
    assert K + H == pytest.approx(1.0, abs=1e-12)


def test_cutoff_sum_gaussian_oracle():
    K, H = G.cutoff_kernels(G.CutoffPair(1.0, 2.0), 1.0)
    assert K + H == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_cutoff_sum_grid():
    a = np.linspace(0, 5, 41)
    for u in np.linspace(0.5, 5, 7):
        for h in (2, 4, 8):
            K, H = G.cutoff_kernels(G.CutoffPair(u, h), a)
            np.testing.assert_allclose(K + H, np.exp(-u * a * a), atol=1e-8)


def test_cutoff_large_h_vanishes():
    K, _ = G.cutoff_kernels(G.CutoffPair(1.0, 50.0), np.linspace(0, 3, 31))
    assert np.abs(K).max() < 1e-10


def test_cutoff_tail_bound():
    a = np.linspace(0, 3, 31)
    r = G.cutoff_tail_bound([1.0], [2, 4, 8], 0, a)
    assert r.C1 > 0 and min(r.gaps.values()) >= 0
    for m in (1, 2):
        assert G.cutoff_tail_bound([0.5, 1, 2], [2, 4, 8], m, a).C1 > 0
    # m >= 1 at a = 0 only: the left side vanishes
    assert G.cutoff_tail_bound([1.0], [2, 4], 1, [0.0]).log_max == {}


def test_cutoff_tail_quadratic_in_h():
    a = np.linspace(0, 3, 31)
    logs = [math.log(np.abs(G.cutoff_kernels(G.CutoffPair(1.0, h), a)[0]).max()) for h in (8, 16, 32)]
    ratios = [logs[1] / logs[0], logs[2] / logs[1]]
    assert 2.5 < ratios[0] < ratios[1] < 4.5


# ---- tail inequality ---------------------------------------------------------

def test_tail_zero_distance():
    lhs, rhs = G.tail_inequality_check(MU0, 1.0, 1, 0.0, 1.0)
    assert lhs == pytest.approx(2 / MU0 * math.exp(-MU0 / 2), rel=1e-12)
    assert rhs == pytest.approx(4 / MU0 * math.exp(-MU0 / 4), rel=1e-14)


def test_tail_grid_holds():
    grid = G.tail_grid()
    assert len(grid) == 72
    for a, p, d, u in grid:
        lhs, rhs = G.tail_inequality_check(MU0, a, p, d, u)
        assert lhs <= rhs * (1 + 1e-10)


@pytest.mark.parametrize("a,p,d", [(0.1, 1, 0.5), (1.0, 16, 1.0), (0.3, 64, 0.2)])
def test_am_gm_anchor(a, p, d):
    u1 = 2 * d * math.sqrt(a * p / MU0)
    lhs = 0.25 * MU0 * u1 + a * p * d * d / u1
    assert lhs == pytest.approx(math.sqrt(a * MU0 * p) * d, rel=1e-12)
    for t in (0.5 * u1, 2 * u1):
        assert 0.25 * MU0 * t + a * p * d * d / t >= math.sqrt(a * MU0 * p) * d
