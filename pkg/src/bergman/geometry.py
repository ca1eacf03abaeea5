r"""Model Kähler curves and their metric data.

Convention sheet
----------------
Every model is a domain of :math:`\mathbb{C}` (or a quotient of it) with a
single chart coordinate ``z`` and a trivialized line bundle ``L`` whose
Hermitian metric is :math:`|1|^2_{h} = e^{-2\varphi}`.  Then

* curvature: :math:`R^L = 2\partial\bar\partial\varphi
  = 2\varphi_{z\bar z}\, dz\wedge d\bar z`;
* Kähler form from :math:`R^L = -2\pi i\,\omega`:
  :math:`\omega = \tfrac{i}{\pi}\varphi_{z\bar z}\, dz\wedge d\bar z
  = \tfrac{2}{\pi}\varphi_{z\bar z}\, dx\wedge dy`;
* metric :math:`g = \omega(\cdot, J\cdot) = \rho\,|dz|^2` with volume density
  :math:`\rho = \tfrac{2}{\pi}\varphi_{z\bar z}` against Lebesgue measure;
* :math:`|\partial_z|_g^2 = \rho/2`, so
  :math:`\mu_0 = R^L(\partial_z, \partial_{\bar z}) / |\partial_z|^2_g
  = 2\varphi_{z\bar z} / (\rho/2) = 2\pi` on every model, and the single
  eigenvalue of :math:`\dot R^L` is :math:`2\pi`, i.e.
  :math:`\det(\dot R^L/2\pi) = 1`.

Per model:

============== ============================== ============================ ==========================================
model          potential                      density                      distance
============== ============================== ============================ ==========================================
Fock           :math:`\pi|z|^2/2`             1                            :math:`|z-w|`
ProjectiveLine :math:`\tfrac12\log(1+|z|^2)`  :math:`1/(\pi(1+|z|^2)^2)`   :math:`\arctan(|z-w|/|1+\bar z w|)/\sqrt\pi`
FlatTorus      :math:`\pi(\Im z)^2/\Im\tau`   :math:`1/\Im\tau`            :math:`\min_\gamma |z-w-\gamma|/\sqrt{\Im\tau}`
PoincareDisc   :math:`-\log(1-|z|^2)`         :math:`2/(\pi(1-|z|^2)^2)`   :math:`\sqrt{2/\pi}\,\operatorname{artanh}|z-w|/|1-\bar z w|`
============== ============================== ============================ ==========================================

The projective line is the round sphere of radius :math:`1/(2\sqrt\pi)`
(area 1); the torus has area 1; the disc has constant curvature
:math:`-2\pi`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfChartError

TWO_PI = 2.0 * math.pi


class Kind(enum.Enum):
    FOCK = "fock"
    PROJECTIVE_LINE = "cp1"
    FLAT_TORUS = "torus"
    POINCARE_DISC = "disc"


_DEFAULT_BOUND = {Kind.FOCK: 3.0, Kind.POINCARE_DISC: 0.95}


@dataclass(frozen=True)
class ModelGeometry:
    """One of the four model geometries.

    ``chart_bound`` is the radius of the evaluation domain for the
    non-compact models; compact models ignore it.
    """

    kind: Kind
    tau: complex = 1j
    chart_bound: float | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "tau", complex(self.tau))
        if kind is Kind.FLAT_TORUS and not self.tau.imag > 0:
            raise ValueError("tau must have positive imaginary part")
        bound = self.chart_bound
        if bound is None:
            bound = _DEFAULT_BOUND.get(kind, math.inf)
        bound = float(bound)
        if not bound > 0:
            raise ValueError("chart_bound must be positive")
        if kind is Kind.POINCARE_DISC and not bound < 1:
            raise ValueError("chart_bound must lie in (0, 1) for the disc")
        object.__setattr__(self, "chart_bound", bound)

    @classmethod
    def fock(cls, chart_bound=3.0):
        return cls(Kind.FOCK, chart_bound=chart_bound)

    @classmethod
    def cp1(cls):
        return cls(Kind.PROJECTIVE_LINE)

    @classmethod
    def torus(cls, tau=1j):
        return cls(Kind.FLAT_TORUS, tau=tau)

    @classmethod
    def disc(cls, chart_bound=0.95):
        return cls(Kind.POINCARE_DISC, chart_bound=chart_bound)

    @classmethod
    def from_name(cls, name, tau=1j, chart_bound=None):
        return cls(Kind(name), tau=tau, chart_bound=chart_bound)

    @property
    def name(self):
        return self.kind.value

    @property
    def is_compact(self):
        return self.kind in (Kind.PROJECTIVE_LINE, Kind.FLAT_TORUS)

    @property
    def is_radial(self):
        """Rotation z -> e^{i theta} z is an isometry fixing the chart origin."""
        return self.kind is not Kind.FLAT_TORUS


@dataclass(frozen=True)
class CurvatureData:
    mu0: float
    det_rl_over_2pi: float
    epsilon_lower: float


def check_in_chart(geom: ModelGeometry, z):
    """Raise :class:`OutOfChartError` if any point lies outside the model's domain."""
    z = np.asarray(z, dtype=complex)
    if geom.kind is Kind.POINCARE_DISC:
        if np.any(np.abs(z) >= 1.0):
            raise OutOfChartError("point outside the unit disc")
    if not np.all(np.isfinite(z)):
        raise OutOfChartError("non-finite chart coordinate")
    return z


def potential(geom: ModelGeometry, z):
    """Local potential phi with h = exp(-2 phi), so that R^L = 2 d dbar phi."""
    z = check_in_chart(geom, z)
    r2 = (z * z.conjugate()).real
    if geom.kind is Kind.FOCK:
        out = 0.5 * math.pi * r2
    elif geom.kind is Kind.PROJECTIVE_LINE:
        out = 0.5 * np.log1p(r2)
    elif geom.kind is Kind.FLAT_TORUS:
        out = math.pi * z.imag**2 / geom.tau.imag
    else:
        out = -np.log1p(-r2)
    return out[()] if out.ndim == 0 else out


def volume_density(geom: ModelGeometry, z):
    """Density of dv_X against Lebesgue measure dx dy in the chart."""
    z = check_in_chart(geom, z)
    r2 = (z * z.conjugate()).real
    if geom.kind is Kind.FOCK:
        out = np.ones_like(r2)
    elif geom.kind is Kind.PROJECTIVE_LINE:
        out = 1.0 / (math.pi * (1.0 + r2) ** 2)
    elif geom.kind is Kind.FLAT_TORUS:
        out = np.full_like(r2, 1.0 / geom.tau.imag)
    else:
        out = 2.0 / (math.pi * (1.0 - r2) ** 2)
    return out[()] if out.ndim == 0 else out


def lattice_coords(tau, z):
    """Real coordinates (s, t) with z = s + t*tau."""
    z = np.asarray(z, dtype=complex)
    t = z.imag / tau.imag
    s = z.real - t * tau.real
    return s, t


def reduce_to_fundamental(geom: ModelGeometry, z):
    """Representative of z in {s + t tau : s, t in [0, 1)} and the lattice shift removed."""
    s, t = lattice_coords(geom.tau, z)
    fs, ft = np.floor(s), np.floor(t)
    gamma = fs + ft * geom.tau
    return np.asarray(z) - gamma, gamma


def _torus_min_norm(tau, delta):
    # reduce to the centred cell, then scan neighbouring translates
    s, t = lattice_coords(tau, delta)
    s = s - np.round(s)
    t = t - np.round(t)
    base = s + t * tau
    best = np.abs(base)
    for m in range(-2, 3):
        for n in range(-2, 3):
            if m == 0 and n == 0:
                continue
            best = np.minimum(best, np.abs(base + m + n * tau))
    return best


def distance(geom: ModelGeometry, x, y):
    """Riemannian distance of g = omega(., J.) between chart points."""
    x = check_in_chart(geom, x)
    y = check_in_chart(geom, y)
    diff = np.abs(x - y)
    if geom.kind is Kind.FOCK:
        out = diff
    elif geom.kind is Kind.PROJECTIVE_LINE:
        out = np.arctan2(diff, np.abs(1.0 + np.conj(x) * y)) / math.sqrt(math.pi)
    elif geom.kind is Kind.FLAT_TORUS:
        out = _torus_min_norm(geom.tau, x - y) / math.sqrt(geom.tau.imag)
    else:
        ratio = np.minimum(diff / np.abs(1.0 - np.conj(x) * y), 1.0)
        out = math.sqrt(2.0 / math.pi) * np.arctanh(ratio)
    out = np.asarray(out, dtype=float)
    return out[()] if out.ndim == 0 else out


def geodesic_point(geom: ModelGeometry, center, direction, d):
    """Chart point at distance ``d`` from ``center`` along the geodesic with angle ``direction``.

    For the radial models the geodesic is computed at the origin and moved by
    the isometry sending 0 to ``center``.
    """
    u = np.exp(1j * np.asarray(direction, dtype=float))
    d = np.asarray(d, dtype=float)
    center = complex(center)
    if geom.kind is Kind.FOCK:
        return center + d * u
    if geom.kind is Kind.FLAT_TORUS:
        return center + d * math.sqrt(geom.tau.imag) * u
    if geom.kind is Kind.PROJECTIVE_LINE:
        w = np.tan(np.minimum(d * math.sqrt(math.pi), math.pi / 2 - 1e-15)) * u
        # isometry of the round sphere mapping 0 to center
        return (w + center) / (1.0 - np.conj(center) * w)
    w = np.tanh(d * math.sqrt(math.pi / 2.0)) * u
    return (w + center) / (1.0 + np.conj(center) * w)


def max_radial_distance(geom: ModelGeometry):
    """Largest distance from the chart origin inside the evaluation domain."""
    if geom.kind is Kind.FOCK:
        return geom.chart_bound
    if geom.kind is Kind.POINCARE_DISC:
        return float(distance(geom, 0.0, geom.chart_bound))
    if geom.kind is Kind.PROJECTIVE_LINE:
        return 0.5 * math.sqrt(math.pi)
    return float(_torus_min_norm(geom.tau, 0.5 + 0.5 * geom.tau) / math.sqrt(geom.tau.imag))


def curvature_constants(geom: ModelGeometry) -> CurvatureData:
    """Curvature constants; identical for all four models (see module docstring)."""
    return CurvatureData(mu0=TWO_PI, det_rl_over_2pi=1.0, epsilon_lower=TWO_PI)
