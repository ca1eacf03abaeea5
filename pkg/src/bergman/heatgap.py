"""Spectral gap and heat-kernel identities on a discretized flat torus.

The Kodaira Laplacian ``2 box_p`` on the square torus (tau = i, area 1) is
the Landau Hamiltonian with flux 2 pi p through the cell, shifted by
-2 pi p so that the lowest level sits at 0 and the holomorphic sections
span its kernel.  Its levels are ``2 p mu0 k = 4 pi p k``.

The discretization is the five-point magnetic Laplacian with Peierls link
phases on an N x N grid, which carries exactly p flux quanta at every N.

Scalar identities (cutoff decomposition, tail integral) are checked with
quadrature against closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.linalg import eigsh

from .errors import AccuracyError, BoundViolationError, DiscretizationError, ResourceError
from .geometry import ModelGeometry, curvature_constants, distance
from .quadrature import composite_gauss_legendre, compensated_sum

MU0 = 2.0 * math.pi
DENSE_LIMIT = 1600  # largest N^2 solved with a full dense eigendecomposition


@dataclass
class SpectralGapModel:
    p: int
    N: int
    matrix: sp.csr_matrix
    eigenvalues: np.ndarray
    kernel_dim: int
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    gap_tol: float = 0.1
    ground_offset: float = 0.0

    @property
    def heat_eigenvalues(self):
        """Eigenvalues measured from the computed ground level, kernel set to 0.

        The lowest discrete level is exactly p-fold degenerate but sits
        O(p^2 / N^2) below the continuum value; the heat calculus uses it
        as the origin so that the kernel projector is exact.
        """
        lam = self.eigenvalues - self.ground_offset
        lam[:self.kernel_dim] = 0.0
        return lam

    @property
    def complete(self):
        """True when the full spectrum and eigenvectors are available."""
        return self.eigenvectors is not None

    @property
    def level_spacing(self):
        return 2.0 * self.p * MU0

    @property
    def first_nonzero(self):
        return float(self.eigenvalues[self.kernel_dim])

    @property
    def gap_ratio(self):
        """First nonzero eigenvalue divided by the continuum spacing 2 p mu0."""
        return self.first_nonzero / self.level_spacing

    @property
    def cell_area(self):
        return 1.0 / self.N**2

    def grid_points(self):
        """Chart coordinates of the grid, in matrix index order (row-major in y)."""
        g = np.arange(self.N) / self.N
        j, k = np.meshgrid(g, g, indexing="xy")
        return (j + 1j * k).ravel()


def magnetic_laplacian(p: int, N: int) -> sp.csr_matrix:
    """Five-point magnetic Laplacian with flux 2 pi p on the unit square torus.

    Index ``i = k N + j`` for grid point (j/N, k/N).  Links in x at row k
    carry exp(-i theta k) with theta = 2 pi p / N^2; the links closing the
    torus in y carry exp(i 2 pi p j / N).  Every plaquette then encloses
    flux theta.
    """
    theta = 2.0 * math.pi * p / N**2
    idx = np.arange(N * N).reshape(N, N)  # [k, j]
    k, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    # x-links (j, k) -> (j+1, k)
    ux = np.exp(-1j * theta * k)
    # y-links (j, k) -> (j, k+1); the wrap row gets the boundary gauge
    uy = np.where(k == N - 1, np.exp(2j * math.pi * p * j / N), 1.0)
    src = np.concatenate([idx.ravel(), idx.ravel()])
    dst = np.concatenate([np.roll(idx, -1, axis=1).ravel(), np.roll(idx, -1, axis=0).ravel()])
    link = np.concatenate([ux.ravel(), uy.ravel()])
    # hopping: (H psi)(src) gets -U psi(dst), (H psi)(dst) gets -conj(U) psi(src)
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    vals = -np.concatenate([link, link.conj()])
    hop = sp.csr_matrix((vals, (rows, cols)), shape=(N * N, N * N))
    lap = (4.0 * sp.identity(N * N, dtype=complex, format="csr") + hop) * N**2
    return lap.tocsr()


def build_gap_model(p: int, N: int, gap_tol=0.1, n_eigs=None) -> SpectralGapModel:
    """Discrete Kodaira Laplacian 2 box_p and its low spectrum.

    Small grids (N^2 <= DENSE_LIMIT) are diagonalized in full; larger grids
    get the lowest ``n_eigs`` eigenpairs by shift-invert Lanczos (default:
    the kernel and the first two excited levels, 3p + 6 values).
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if N < 2:
        raise ValueError("N must be at least 2")
    if N * N < 16 * p:
        raise DiscretizationError(f"N^2 = {N * N} < 16 p = {16 * p}: flux per plaquette exceeds pi/2")
    p, N = int(p), int(N)
    H = magnetic_laplacian(p, N) - 2.0 * math.pi * p * sp.identity(N * N, format="csr")
    H = H.tocsr()
    if N * N <= DENSE_LIMIT and n_eigs is None:
        lam, V = np.linalg.eigh(H.toarray())
    else:
        k = min(n_eigs or 3 * p + 6, N * N - 2)
        # the shifted operator is bounded below by -2 pi p
        lam, V = eigsh(H, k=k, sigma=-math.pi * p, which="LM", tol=1e-12)
        order = np.argsort(lam)
        lam, V = lam[order], None
    kernel_dim = int(np.count_nonzero(lam < gap_tol * 2.0 * p * MU0))
    if kernel_dim >= lam.size:
        raise ResourceError("no eigenvalue above the kernel was computed; raise n_eigs")
    ground = float(np.mean(lam[:kernel_dim])) if kernel_dim else 0.0
    return SpectralGapModel(p, N, H, np.asarray(lam, dtype=float), kernel_dim, V, gap_tol, ground)


def _require_complete(model):
    if not model.complete:
        raise ResourceError("operator functions need the full eigendecomposition (small N)")


def spectral_function(model: SpectralGapModel, values):
    """V diag(values) V^H for per-eigenvalue ``values``."""
    _require_complete(model)
    V = model.eigenvectors
    return (V * np.asarray(values)[None, :]) @ V.conj().T


def heat_operator(model: SpectralGapModel, u: float):
    """exp(-(u/p) 2 box_p) as a matrix on grid functions."""
    if not u > 0:
        raise ValueError("u must be positive")
    return spectral_function(model, np.exp(-u * model.heat_eigenvalues / model.p))


def kernel_projector(model: SpectralGapModel):
    mask = np.zeros(model.eigenvalues.size)
    mask[:model.kernel_dim] = 1.0
    return spectral_function(model, mask)


@dataclass
class GaussianBoundResult:
    variant: str
    a_fit: float
    logC: float
    logC_at_zero: float
    u_list: list
    sup_log: list            # log max |kernel| per u
    decay_slope: float       # d/du of sup_log, fitted


_EXPONENT = {"heat": MU0, "gap": -0.5 * MU0, "remainder": -0.25 * MU0}


def _variant_values(model, variant, u):
    lam, p = model.heat_eigenvalues, model.p
    e = np.exp(-u * lam / p)
    if variant == "heat":
        return e
    if variant == "gap":
        return (lam / p) * e
    out = e.copy()
    out[:model.kernel_dim] = 0.0
    return out


def gaussian_bound_check(model: SpectralGapModel, u_list, a_grid, variant="heat",
                         base_points=(0, None), c_cap=10.0) -> GaussianBoundResult:
    """Largest a on ``a_grid`` with |W(x, x')| <= C p exp(e u - (a p / u) d^2).

    ``variant`` selects the operator and the factor e:

    * ``"heat"``: exp(-(u/p) D^2), e = mu0;
    * ``"gap"``: (1/p) D^2 exp(-(u/p) D^2), e = -mu0/2;
    * ``"remainder"``: exp(-(u/p) D^2) - P, e = -mu0/4.

    On a finite grid every a admits some C, so an a is accepted when its
    smallest admissible C exceeds the a = 0 value by at most ``c_cap``.
    Kernels are matrix entries divided by the cell area.

    Raises
    ------
    BoundViolationError
        No positive a on the grid is accepted.
    """
    _require_complete(model)
    if variant not in _EXPONENT:
        raise ValueError(f"unknown variant {variant!r}")
    u_list = [float(u) for u in u_list]
    if any(not 0.5 <= u <= 10.0 for u in u_list):
        raise ValueError("u values must lie in [0.5, 10]")
    torus = ModelGeometry.torus(1j)
    pts = model.grid_points()
    rows = [0 if b is None else b for b in base_points]
    if len(base_points) > 1 and base_points[1] is None:
        rows[1] = (model.N // 3) * model.N + model.N // 2
    rows = sorted(set(rows))
    V = model.eigenvectors
    d2 = np.stack([np.asarray(distance(torus, pts[r], pts)) ** 2 for r in rows])
    # per u: log|kernel| over base rows x all points
    logs, sups = [], []
    for u in u_list:
        vals = _variant_values(model, variant, u)
        block = (V[rows] * vals[None, :]) @ V.conj().T / model.cell_area
        with np.errstate(divide="ignore"):
            lk = np.log(np.abs(block))
        logs.append(lk)
        sups.append(float(lk.max()))
    logp = math.log(model.p)
    expo = _EXPONENT[variant]

    def log_c(a):
        return max(float(np.max(lk - logp - expo * u + (a * model.p / u) * d2))
                   for lk, u in zip(logs, u_list))

    c0 = log_c(0.0)
    a_fit, c_fit = 0.0, c0
    for a in sorted(float(a) for a in a_grid):
        if a <= 0:
            continue
        c = log_c(a)
        if c <= c0 + math.log(c_cap):
            a_fit, c_fit = a, c
    if a_fit <= 0:
        raise BoundViolationError("no positive a satisfies the Gaussian bound form")
    slope = float(np.polyfit(u_list, sups, 1)[0]) if len(u_list) > 1 else float("nan")
    return GaussianBoundResult(variant, a_fit, c_fit, c0, u_list, sups, slope)


@dataclass
class ProjectorIdentityResult:
    scalar_residual: float
    matrix_residual: float | None
    u_max: float


def projector_integral_identity(model: SpectralGapModel, u: float, n_nodes=64,
                                n_panels=8, cutoff=1e-14) -> ProjectorIdentityResult:
    """Check exp(-(u/p) D^2) - P = int_u^inf (1/p) D^2 exp(-(u1/p) D^2) du1.

    Scalar form: for every eigenvalue, e^{-u lam/p} (or 0 on the kernel)
    against the closed-form integral.  Matrix form: the integral is
    truncated at u_max with e^{-u_max lam_min/p} < ``cutoff`` and evaluated
    with ``n_nodes`` Gauss-Legendre nodes on geometrically graded panels.
    """
    if not u > 0:
        raise ValueError("u must be positive")
    lam, p, kd = model.heat_eigenvalues, model.p, model.kernel_dim
    rate = lam / p
    pos = np.arange(lam.size) >= kd
    # per eigenvalue: e^{-u rate} - [rate = 0] against [-e^{-u1 rate}]_u^inf,
    # and on the kernel the integrand rate e^{-u1 rate} must vanish
    lhs = np.exp(-u * rate) - (~pos)
    antiderivative = lambda t: -np.exp(-t * rate)  # noqa: E731
    rhs = np.where(pos, 0.0 - antiderivative(u), 0.0)
    kernel_integrand = np.abs(rate * np.exp(-u * rate))[~pos]
    scalar = float(max(np.max(np.abs(lhs - rhs)), kernel_integrand.max(initial=0.0)))
    u_max = u + math.log(1.0 / cutoff) / rate[kd]
    if not model.complete:
        return ProjectorIdentityResult(scalar, None, u_max)
    # graded panels resolve fast-decaying high levels near u
    breaks = u + (u_max - u) * (np.geomspace(1.0, 2.0**n_panels, n_panels + 1) - 1.0) / (2.0**n_panels - 1.0)
    nodes, weights = composite_gauss_legendre(breaks, max(1, n_nodes // n_panels))
    integrand = rate[None, :] * np.exp(-nodes[:, None] * rate[None, :]) * pos[None, :]
    q = compensated_sum(weights[:, None] * integrand, axis=0)
    W = heat_operator(model, u)
    P = kernel_projector(model)
    M = spectral_function(model, q)
    matrix = float(np.max(np.abs(W - P - M)))
    return ProjectorIdentityResult(scalar, matrix, float(u_max))


# --------------------------------------------------------------------------
# cutoff decomposition

def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, glued from exp(-1/t)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffPair:
    u: float
    h: float
    eps_cut: float = 1.0

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError("u must be positive")
        if not self.h > 1:
            raise ValueError("h must exceed 1")
        if not self.eps_cut > 0:
            raise ValueError("eps_cut must be positive")

    def f(self, v):
        """Even bump: 1 on |v| <= eps/2, 0 on |v| >= eps."""
        e = self.eps_cut
        return _smooth_step((e - np.abs(np.asarray(v, dtype=float))) / (0.5 * e))


V_MAX = 40.0


def _cutoff_rule(cp: CutoffPair, a_max: float):
    """Composite Gauss-Legendre rule on [0, V_MAX] with breaks at the cutoff edges."""
    scale = math.sqrt(2.0 * cp.u)
    edges = [cp.eps_cut * cp.h / (2.0 * scale), cp.eps_cut * cp.h / scale]
    # panels short enough to resolve cos(v sqrt(2u) a) and the bump transition
    width = min(0.25, math.pi / (2.0 * scale * max(a_max, 1e-3)), 0.125 * (edges[1] - edges[0]))
    pts = {0.0, V_MAX}
    pts.update(e for e in edges if e < V_MAX)
    pts = sorted(pts)
    breaks = [pts[0]]
    for lo, hi in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((hi - lo) / width)))
        breaks.extend(np.linspace(lo, hi, n + 1)[1:])
    return composite_gauss_legendre(np.array(breaks), 16)


def cutoff_kernels(cp: CutoffPair, a):
    """K_{u,h}(a) and H_{u,h}(a) with the real-cosine convention.

    K = int cos(v sqrt(2u) a) e^{-v^2/2} (1 - f(sqrt(2u) v / h)) dv / sqrt(2 pi),
    H = the same with f in place of 1 - f; K + H = e^{-u a^2}.
    """
    a_arr = np.atleast_1d(np.asarray(a, dtype=float))
    v, w = _cutoff_rule(cp, float(np.max(np.abs(a_arr))) if a_arr.size else 0.0)
    scale = math.sqrt(2.0 * cp.u)
    fv = cp.f(scale * v / cp.h)
    gauss = 2.0 * w * np.exp(-0.5 * v**2) / math.sqrt(2.0 * math.pi)  # even integrand
    osc = np.cos(np.outer(a_arr, v) * scale)
    K = compensated_sum((osc * (gauss * (1.0 - fv))[None, :]).T, axis=0)
    H = compensated_sum((osc * (gauss * fv)[None, :]).T, axis=0)
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(H))):
        raise AccuracyError("cutoff quadrature produced non-finite values")
    if np.ndim(a) == 0:
        return float(K[0]), float(H[0])
    return np.asarray(K), np.asarray(H)


@dataclass
class CutoffTailBound:
    C: float
    C_prime: float
    C1: float
    log_max: dict            # (u, h) -> log max_a |a|^m |K|
    gaps: dict               # (u, h) -> log C - log max_a |a|^m |K|


def cutoff_tail_bound(u_list, h_list, m: int, a_grid, c_im=0.0, eps_cut=1.0) -> CutoffTailBound:
    """Constants with |a|^m |K_{u,h}(a)| <= C exp(C' c^2 u - C1 h^2 / u) on a real grid.

    With c_im = 0 the C' term is inactive and reported as 0.  C1 is the
    least-squares slope of log max_a |a|^m |K| against h^2/u, and C is the
    smallest constant making the bound hold at every (u, h).
    """
    if c_im != 0:
        raise NotImplementedError("only real a (c_im = 0) is supported")
    a_grid = np.asarray(a_grid, dtype=float)
    keys, xs, ys = [], [], []
    for u in u_list:
        for h in h_list:
            K, _ = cutoff_kernels(CutoffPair(u, h, eps_cut), a_grid)
            vals = np.abs(a_grid) ** m * np.abs(K)
            top = float(vals.max())
            if top == 0.0:
                continue
            keys.append((float(u), float(h)))
            xs.append(h * h / u)
            ys.append(math.log(top))
    if not keys:
        # left side vanishes identically; any constants work
        return CutoffTailBound(0.0, 0.0, 1.0, {}, {})
    xs, ys = np.array(xs), np.array(ys)
    if np.ptp(xs) == 0:
        raise BoundViolationError("need at least two distinct h^2/u values to fit C1")
    c1 = -float(np.polyfit(xs, ys, 1)[0])
    if not c1 > 0:
        raise BoundViolationError(f"fitted C1 = {c1:.3e} is not positive")
    logC = float(np.max(ys + c1 * xs))
    gaps = {k: float(logC - c1 * x - y) for k, x, y in zip(keys, xs, ys)}
    return CutoffTailBound(math.exp(logC), 0.0, c1, dict(zip(keys, ys.tolist())), gaps)


def tail_inequality_check(mu0: float, a: float, p: int, d: float, u: float):
    """(lhs, rhs) of int_u^inf exp(-mu0 u1/2 - a p d^2/u1) du1 <= (4/mu0) exp(-mu0 u/4 - sqrt(a mu0 p) d).

    Raises
    ------
    BoundViolationError
        lhs exceeds rhs by more than a relative 1e-10.
    """
    if not (mu0 > 0 and a > 0 and p > 0 and u > 0 and d >= 0):
        raise ValueError("mu0, a, p, u must be positive and d non-negative")
    b = a * p * d * d
    lhs, err = integrate.quad(lambda t: math.exp(-0.5 * mu0 * t - b / t), u, math.inf,
                              epsabs=0.0, epsrel=1e-12, limit=200)
    if not math.isfinite(lhs) or err > 1e-8 * max(lhs, 1e-300):
        raise AccuracyError(f"tail quadrature did not converge (estimate {err:.2e})")
    rhs = 4.0 / mu0 * math.exp(-0.25 * mu0 * u - math.sqrt(a * mu0 * p) * d)
    if lhs > rhs * (1.0 + 1e-10):
        raise BoundViolationError(f"tail inequality fails: {lhs:.6e} > {rhs:.6e}")
    return lhs, rhs


def tail_grid():
    """The 72-tuple parameter grid (a, p, d, u) at mu0 = 2 pi."""
    return [(a, p, d, u) for a in (0.1, 1.0) for p in (1, 16, 64)
            for d in (0.0, 0.1, 0.5, 1.0) for u in (0.5, 1.0, 5.0)]


def torus_mu0():
    return curvature_constants(ModelGeometry.torus()).mu0
