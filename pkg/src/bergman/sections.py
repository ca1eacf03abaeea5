"""Holomorphic L2 sections of L^p, Gram matrices and the Bergman kernel.

Sections are held in the chart trivialization.  Every evaluation goes
through complex logarithms so that h-weighted values
``f(z) * exp(-p*phi(z))`` stay finite even when the raw chart values
overflow (monomials of degree ~4000 on the disc, theta functions at p = 64).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import quadrature as quad
from .errors import AccuracyError, EmptySpaceError, NonIntegrableError, OutOfChartError
from .geometry import Kind, ModelGeometry, check_in_chart, potential, volume_density

GRAM_TOL = 1e-10
THETA_CUTOFF = math.log(1e18)


# --------------------------------------------------------------------------
# bases


@dataclass
class SectionBasis:
    """Raw (non-orthonormal) holomorphic sections of L^p.

    ``log_scale[k]`` divides element ``k`` before any weighted evaluation;
    it equilibrates the graded magnitudes of high-degree monomials.
    """

    geom: ModelGeometry
    p: int
    truncation: int
    log_scale: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.log_scale is None:
            self.log_scale = np.zeros(len(self))

    def __len__(self):
        if self.geom.kind is Kind.FLAT_TORUS:
            return self.p
        return self.truncation + 1

    @property
    def degrees(self):
        return np.arange(len(self))

    def log_values(self, z):
        """Complex logarithms of the raw elements, shape (npts, nelem)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.geom.kind is Kind.FLAT_TORUS:
            return _theta_log(self.p, self.geom.tau, z, derivative=False)
        return _monomial_log(z, self.degrees, derivative=False)

    def log_derivatives(self, z):
        """Complex logarithms of the chart derivatives of the raw elements."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.geom.kind is Kind.FLAT_TORUS:
            return _theta_log(self.p, self.geom.tau, z, derivative=True)
        return _monomial_log(z, self.degrees, derivative=True)

    def weighted_values(self, z, derivative=False):
        """h-weighted scaled elements f_k(z) exp(-p phi(z)) / scale_k."""
        z = check_in_chart(self.geom, np.atleast_1d(z))
        logs = self.log_derivatives(z) if derivative else self.log_values(z)
        shift = self.p * np.asarray(potential(self.geom, z))[:, None] + self.log_scale[None, :]
        with np.errstate(under="ignore"):
            return np.exp(logs - shift)

    def values(self, z):
        """Raw chart values (may overflow for large degree)."""
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.log_values(z))


def _monomial_log(z, degrees, derivative):
    with np.errstate(divide="ignore"):
        logz = np.log(z)[:, None]
    m = degrees[None, :].astype(float)
    if derivative:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(np.maximum(m, 1.0)) + (m - 1.0) * logz
        out = np.where(m == 0, -np.inf, out)
        out = np.where((m == 1), 0.0, out)
    else:
        with np.errstate(invalid="ignore"):
            out = m * logz
        out = np.where(m == 0, 0.0, out)
    return out.astype(complex)


def _theta_log(p, tau, z, derivative):
    """log theta_{j,p}(z) (or its derivative) for j = 0..p-1.

    theta_{j,p}(z) = sum_m exp(pi i tau p n^2 + 2 pi i p n z), n = m + j/p.
    The window of m is centred on the dominant term and truncated where
    terms drop below 1e-18 of the maximum.
    """
    j = np.arange(p) / p
    y = z.imag
    n0 = -y / tau.imag
    width = int(math.ceil(math.sqrt(THETA_CUTOFF / (math.pi * tau.imag * p)))) + 2
    offsets = np.arange(-width, width + 1)
    m = np.floor(n0)[:, None, None] + offsets[None, None, :]
    n = m + j[None, :, None]
    expo = 1j * math.pi * tau * p * n**2 + 2j * math.pi * p * n * z[:, None, None]
    top = expo.real.max(axis=2, keepdims=True)
    terms = np.exp(expo - top)
    if derivative:
        terms = terms * (2j * math.pi * p * n)
    total = terms.sum(axis=2)
    with np.errstate(divide="ignore"):
        return top[..., 0] + np.log(total)


def theta_norm_squared(p, tau):
    """Closed-form squared L2 norm of every level-p theta characteristic.

    Integrating over s in [0, 1) kills the cross terms; the remaining
    Gaussians in Im z tile the real line, giving 1/sqrt(2 p Im tau).
    """
    return 1.0 / math.sqrt(2.0 * p * complex(tau).imag)


def fock_truncation(p, radius, tail_tol):
    """Smallest M with Poisson(p pi R^2) tail P(N > M) < tail_tol.

    At |z| = R the omitted monomials carry exactly that fraction of the
    diagonal density p, and less at smaller radii.
    """
    lam = p * math.pi * radius**2
    m = int(lam)
    while special.pdtrc(m, lam) >= tail_tol:
        m += max(1, int(math.sqrt(lam) / 8))
    while m > 0 and special.pdtrc(m - 1, lam) < tail_tol:
        m -= 1
    return m


def disc_truncation(p, radius, tail_tol):
    """Smallest M with negative-binomial(2p, 1 - R^2) tail below tail_tol.

    The density at |z| = R is (p - 1/2) times a negative-binomial mass
    function in the monomial degree.
    """
    dist = stats.nbinom(2 * p, 1.0 - radius**2)
    m = int(dist.ppf(1.0 - tail_tol)) if tail_tol > 1e-15 else int(dist.isf(tail_tol))
    m = max(m, 0)
    while dist.sf(m) >= tail_tol:
        m += 1
    while m > 0 and dist.sf(m - 1) < tail_tol:
        m -= 1
    return m


def build_basis(geom: ModelGeometry, p: int, tail_tol: float = 1e-12) -> SectionBasis:
    """Basis of holomorphic L2 sections of L^p (truncated on non-compact models)."""
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if not 0 < tail_tol < 1:
        raise ValueError("tail_tol must lie in (0, 1)")
    p = int(p)
    if geom.kind is Kind.PROJECTIVE_LINE:
        basis = SectionBasis(geom, p, p)
    elif geom.kind is Kind.FLAT_TORUS:
        basis = SectionBasis(geom, p, p)
    elif geom.kind is Kind.FOCK:
        basis = SectionBasis(geom, p, fock_truncation(p, geom.chart_bound, tail_tol))
    else:
        if 2 * p <= 1:
            raise NonIntegrableError("no L2 sections on the disc for 2p <= 1")
        basis = SectionBasis(geom, p, disc_truncation(p, geom.chart_bound, tail_tol))
    basis.log_scale = _peak_log_scale(basis)
    return basis


def _peak_log_scale(basis):
    """log of max_r r^m exp(-p phi(r)) over the model domain, per monomial."""
    geom, p = basis.geom, basis.p
    if geom.kind is Kind.FLAT_TORUS:
        return np.zeros(len(basis))
    m = basis.degrees.astype(float)
    if geom.kind is Kind.FOCK:
        # maximum at r^2 = m / (p pi)
        r2 = m / (p * math.pi)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 0.5 * m * np.log(r2) - 0.5 * p * math.pi * r2
        return np.where(m == 0, 0.0, val)
    if geom.kind is Kind.PROJECTIVE_LINE:
        # r^{2m} (1 + r^2)^{-p}, maximum at r^2 = m / (p - m)
        q = m / p
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 0.5 * p * (special.xlogy(q, q) + special.xlogy(1.0 - q, 1.0 - q))
        return val
    # disc: r^{2m} (1 - r^2)^{2p}, maximum at r^2 = m / (m + 2p)
    r2 = m / (m + 2 * p)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 0.5 * m * np.log(r2) + p * np.log1p(-r2)
    return np.where(m == 0, 0.0, val)


# --------------------------------------------------------------------------
# Gram matrices


def _radial_variable(geom, p, m_max):
    """Breaks of a composite rule for the radial integral and the map v -> u = r^2.

    Returns (breaks, u_of_v, log_du_dv).
    """
    if geom.kind is Kind.FOCK:
        hi = (m_max + 40.0 * math.sqrt(m_max + 1.0) + 60.0) / (p * math.pi)
        n_panels = int(min(4000, max(200, 8 * hi * p * math.pi / math.sqrt(m_max + 1.0) + 50)))
        breaks = np.linspace(0.0, hi, n_panels + 1)
        return breaks, (lambda v: v), (lambda v: np.zeros_like(v))
    if geom.kind is Kind.PROJECTIVE_LINE:
        breaks = np.linspace(0.0, 1.0, 201)
        return breaks, (lambda v: v / (1.0 - v)), (lambda v: -2.0 * np.log1p(-v))
    n_panels = int(min(6000, max(400, 3.0 * math.sqrt(m_max + 2 * p) * 8)))
    breaks = np.linspace(0.0, 1.0, n_panels + 1)
    return breaks, (lambda v: v), (lambda v: np.zeros_like(v))


def radial_gram_diagonal(basis: SectionBasis, n_nodes=16, chunk=256):
    """Diagonal Gram entries of a monomial basis by 1-D radial quadrature.

    Rotational symmetry makes the Gram matrix diagonal; each entry is
    pi * int u^m exp(-2 p phi) rho du, evaluated with a composite
    Gauss-Legendre rule in log space.  Returns scaled entries
    G[m, m] / scale_m^2.
    """
    geom, p = basis.geom, basis.p
    if not geom.is_radial:
        raise ValueError("radial Gram requires a rotationally symmetric model")
    m = basis.degrees.astype(float)
    breaks, u_of_v, log_jac = _radial_variable(geom, p, m[-1])
    v, w = quad.composite_gauss_legendre(breaks, n_nodes)
    u = u_of_v(v)
    r = np.sqrt(u)
    base = (-2.0 * p * np.asarray(potential(geom, r)) + np.log(volume_density(geom, r))
            + log_jac(v) + math.log(math.pi) + np.log(w))
    logu = np.log(u)
    out = np.empty(m.size)
    for start in range(0, m.size, chunk):
        mm = m[start:start + chunk]
        lg = mm[:, None] * logu[None, :] + base[None, :] - 2.0 * basis.log_scale[start:start + chunk, None]
        top = lg.max(axis=1, keepdims=True)
        terms = np.exp(lg - top)
        out[start:start + chunk] = np.exp(top[:, 0]) * quad.compensated_sum(terms, axis=1)
    return out


def default_rule(geom: ModelGeometry, p: int, n_elem: int, degree=None):
    """Quadrature rule adequate for a Gram matrix of the given basis size."""
    if geom.kind is Kind.FLAT_TORUS:
        if degree is None:
            degree = 4 * p + 40
        return quad.build_rule(geom, degree)
    if geom.kind is Kind.PROJECTIVE_LINE:
        if degree is None:
            degree = 2 * p + 40
        return projective_rule(degree)
    if degree is None:
        degree = 2 * n_elem + 40
    if geom.kind is Kind.FOCK:
        m = n_elem - 1
        lam = m + 40.0 * math.sqrt(m + 1.0) + 60.0
        radius = math.sqrt(lam / (p * math.pi))
        # one radial node per unit of p*pi*u resolves exp(-p pi u) u^m on [0, R^2]
        return quad.build_rule(geom, max(degree, 4 * int(lam)), radius=radius)
    return quad.build_rule(geom, degree)


def projective_rule(degree):
    """Rule covering the whole chart of the projective line via v = r^2/(1+r^2)."""
    n_radial = degree // 2 + 2
    n_angle = degree + 1
    v, wv = quad.gauss_legendre(n_radial, 0.0, 1.0)
    u = v / (1.0 - v)
    theta = 2.0 * math.pi * np.arange(n_angle) / n_angle
    nodes = (np.sqrt(u)[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = (0.5 * (wv / (1.0 - v) ** 2)[:, None]
               * np.full(n_angle, 2.0 * math.pi / n_angle)[None, :]).ravel()
    return quad.QuadratureRule(nodes, weights, "sphere", radius=math.inf, degree=degree)


def assemble_gram(basis: SectionBasis, rule: quad.QuadratureRule, refine_check=False):
    """G[j, k] = int f_j conj(f_k) exp(-2 p phi) dv_X over the rule's domain.

    Entries refer to the scaled elements (see ``SectionBasis.log_scale``).
    With ``refine_check`` the rule degree is doubled and the two Gram
    matrices must agree to GRAM_TOL relative.
    """
    vals = basis.weighted_values(rule.nodes)
    rho = np.asarray(volume_density(basis.geom, rule.nodes))
    vals = vals * np.sqrt(rho)[:, None]
    G = quad.gram_sum(rule, vals)
    if refine_check:
        fine = _refined(basis.geom, rule)
        G2 = assemble_gram(basis, fine)
        err = np.max(np.abs(G2 - G)) / np.max(np.abs(G2))
        if err > GRAM_TOL:
            raise AccuracyError(f"Gram matrix changed by {err:.3e} under rule refinement")
    return G


def _refined(geom, rule):
    if rule.domain == "sphere":
        return projective_rule(2 * rule.degree)
    if rule.domain == "torus":
        return quad.build_rule(geom, 2 * rule.degree + 1)
    return quad.build_rule(geom, 2 * rule.degree, radius=rule.radius)


# --------------------------------------------------------------------------
# orthonormalization and kernel


@dataclass
class OrthonormalBasis:
    basis: SectionBasis
    transform: np.ndarray
    gram_condition: float
    dropped: int = 0
    eigenvalues: np.ndarray = field(default=None, repr=False)
    # diagonal transforms (radial fast path): kept columns and their scales
    keep: np.ndarray = field(default=None, repr=False)
    scale: np.ndarray = field(default=None, repr=False)

    def apply(self, values):
        """Coefficients in the orthonormal basis: values @ transform."""
        if self.keep is not None:
            return values[..., self.keep] * self.scale
        return values @ self.transform

    def __len__(self):
        return self.transform.shape[1]


def orthonormalize(G, drop_tol=1e-12, basis=None):
    """Eigen-whitening of a Hermitian PSD Gram matrix after Jacobi scaling.

    Returns an :class:`OrthonormalBasis` whose ``transform`` T satisfies
    T^H G T = I on the retained directions.
    """
    G = np.asarray(G, dtype=complex)
    diag = np.real(np.diag(G)).copy()
    if np.all(diag <= 0):
        raise EmptySpaceError("Gram matrix has no positive direction")
    d = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 0.0)
    Gs = d[:, None] * G * d[None, :]
    Gs = 0.5 * (Gs + Gs.conj().T)
    lam, V = np.linalg.eigh(Gs)
    top = lam.max()
    keep = lam > drop_tol * top
    if not np.any(keep):
        raise EmptySpaceError("all Gram eigenvalues fall below drop_tol")
    T = d[:, None] * V[:, keep] / np.sqrt(lam[keep])[None, :]
    return OrthonormalBasis(basis, T, float(top / lam[keep].min()),
                            dropped=int((~keep).sum()), eigenvalues=lam)


def orthonormalize_diagonal(basis: SectionBasis, diag, drop_tol=1e-12):
    """Fast path for a diagonal Gram matrix given by its diagonal.

    After Jacobi scaling a diagonal Gram matrix is the identity, so only
    non-positive entries are dropped; ``drop_tol`` is kept for signature
    parity with :func:`orthonormalize`.
    """
    diag = np.asarray(diag, dtype=float)
    top = diag.max()
    keep = diag > 0
    if not np.any(keep):
        raise EmptySpaceError("Gram matrix has no positive direction")
    T = np.zeros((diag.size, int(keep.sum())))
    T[np.flatnonzero(keep), np.arange(int(keep.sum()))] = 1.0 / np.sqrt(diag[keep])
    return OrthonormalBasis(basis, T, float(top / diag[keep].min()),
                            dropped=int((~keep).sum()), eigenvalues=diag,
                            keep=np.flatnonzero(keep), scale=1.0 / np.sqrt(diag[keep]))


def _transport_to_origin(geom, x, y):
    """Image of y under an isometry sending x to the chart origin.

    The isometry lifts to (L, h), so the h-norm of the kernel is unchanged.
    """
    if geom.kind is Kind.FOCK:
        return y - x
    if geom.kind is Kind.PROJECTIVE_LINE:
        return (y - x) / (1.0 + np.conj(x) * y)
    return (y - x) / (1.0 - np.conj(x) * y)


def _transport_phase(geom, p, x, y):
    """Unit complex number arg P_p(x, y) on the homogeneous models.

    The isometry moving x to the origin lifts to (L, h) through a
    unimodular multiplier; this is the product of those multipliers at x
    and y, so that P(x, y)_h = |P(x, y)|_h * phase.
    """
    if geom.kind is Kind.FOCK:
        return np.exp(1j * p * math.pi * np.imag(x * np.conj(y)))
    if geom.kind is Kind.PROJECTIVE_LINE:
        q = 1.0 + x * np.conj(y)
        return (q / np.abs(q)) ** p
    q = 1.0 - x * np.conj(y)
    return (np.conj(q) / np.abs(q)) ** (2 * p)


class KernelEvaluator:
    """Bergman kernel P_p built from an orthonormal basis.

    ``transport`` selects how off-diagonal h-norms are evaluated on the
    homogeneous models (Fock, projective line, disc): the pair (x, y) is
    moved by an isometry to (0, y'), which avoids the cancellation of
    the direct sum sum_j s_j(x) conj(s_j(y)) when the kernel is
    exponentially small.  The torus always uses the direct sum.
    """

    def __init__(self, onb: OrthonormalBasis, transport=True):
        self.onb = onb
        self.basis = onb.basis
        self.geom = onb.basis.geom
        self.p = onb.basis.p
        self.transport = transport and self.geom.kind is not Kind.FLAT_TORUS

    def sections(self, z, derivative=False):
        """h-weighted orthonormal sections, shape (npts, dim)."""
        return self.onb.apply(self.basis.weighted_values(z, derivative=derivative))

    def normalized(self, x, y):
        """Complex P_p(x, y) exp(-p (phi(x) + phi(y))), computed by the direct sum."""
        sx = self.sections(np.atleast_1d(x))
        sy = self.sections(np.atleast_1d(y))
        out = np.einsum("ij,ij->i", sx, sy.conj())
        return out[0] if np.ndim(x) == 0 and np.ndim(y) == 0 else out

    def normalized_magnitude(self, x, y):
        x = np.asarray(x, dtype=complex)
        y = np.asarray(y, dtype=complex)
        check_in_chart(self.geom, x)
        check_in_chart(self.geom, y)
        if not self.transport:
            return np.abs(self.normalized(x, y))
        x, y = np.broadcast_arrays(x, y)
        y0 = _transport_to_origin(self.geom, x, y)
        val = np.abs(self.normalized(np.zeros_like(y0), y0))
        return val[()] if np.ndim(val) == 0 else val

    def normalized_accurate(self, x, y):
        """Complex normalized kernel with transport on the homogeneous models.

        Equal to :meth:`normalized` inside the chart, but keeps full
        relative accuracy for far-apart pairs and for points beyond the
        truncation radius.  The torus falls back to the direct sum.
        """
        if not self.transport:
            return self.normalized(x, y)
        x = np.asarray(x, dtype=complex)
        y = np.asarray(y, dtype=complex)
        out = self.normalized_magnitude(x, y) * _transport_phase(self.geom, self.p, x, y)
        return out[()] if np.ndim(out) == 0 else out

    def eval_kernel(self, x, y):
        """(raw chart value, h-norm) of P_p(x, y)."""
        norm = self.normalized(x, y)
        gauge = self.p * (np.asarray(potential(self.geom, x)) + np.asarray(potential(self.geom, y)))
        with np.errstate(over="ignore"):
            raw = norm * np.exp(gauge)
        return raw, self.normalized_magnitude(x, y)

    def density(self, x):
        s = self.sections(np.atleast_1d(x))
        out = np.sum(np.abs(s) ** 2, axis=1)
        return out[0] if np.ndim(x) == 0 else out

    def reproducing_check(self, rule, x, z):
        """|int P(x,y) P(y,z) dv(y) - P(x,z)| / (1 + |P(x,z)|) in h-normalized form."""
        sy = self.sections(rule.nodes)
        rho = np.asarray(volume_density(self.geom, rule.nodes))
        sx = self.sections(np.atleast_1d(x))[0]
        sz = self.sections(np.atleast_1d(z))[0]
        pxy = sy.conj() @ sx          # P(x, y) normalized, as a function of node y
        pyz = sy @ sz.conj()          # P(y, z)
        integral = quad.integrate(rule, pxy * pyz * rho)
        direct = np.dot(sx, sz.conj())
        return float(abs(integral - direct) / (1.0 + abs(direct)))


def build_evaluator(geom: ModelGeometry, p: int, tail_tol=1e-12, drop_tol=1e-12,
                    quad_degree=None, refine_check=False, transport=True):
    """Basis -> Gram -> orthonormal basis -> kernel evaluator."""
    basis = build_basis(geom, p, tail_tol)
    if geom.is_radial and quad_degree is None:
        onb = orthonormalize_diagonal(basis, radial_gram_diagonal(basis), drop_tol)
    else:
        rule = default_rule(geom, basis.p, len(basis), quad_degree)
        G = assemble_gram(basis, rule, refine_check=refine_check)
        onb = orthonormalize(G, drop_tol, basis)
    return KernelEvaluator(onb, transport=transport)


def density(ev: KernelEvaluator, x):
    return ev.density(x)


def eval_kernel(ev: KernelEvaluator, x, y):
    return ev.eval_kernel(x, y)
