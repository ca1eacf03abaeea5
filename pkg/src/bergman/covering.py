"""Covering identity for the flat torus C / (Z + tau Z).

Upstairs the line bundle is trivial on the plane with the lifted weight
e^{-2 p phi}, phi(z) = pi (Im z)^2 / Im tau, and volume dx dy / Im tau.
Writing phi = pi |z|^2 / (2b) - Re(pi z^2 / (2b)) with b = Im tau shows
the space is a Fock space twisted by exp(p pi z^2 / (2b)), whose kernel is

    P~_p(z, w) = p exp(-p pi (z - conj(w))^2 / (2b)),
    |P~_p(z, w)|_h = p exp(-p pi |z - w|^2 / (2b)).

Lifted sections satisfy s(z + gamma) = e_gamma(z) s(z) with
e_{m + n tau}(z) = exp(-pi i p n^2 tau - 2 pi i p n z), and the torus kernel
is recovered as sum_gamma e_gamma(x)^{-1} P~_p(x + gamma, y).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import estimates
from . import sections as S
from .errors import AccuracyError, WindowTooSmallError
from .geometry import ModelGeometry, lattice_coords, potential
from .quadrature import QuadratureRule, compensated_sum
from .quadrature import integrate as integrate_rule

EXP_FLOOR = 745.0  # exp(-EXP_FLOOR) underflows to zero


@dataclass
class CoveringSetup:
    tau: complex
    p: int
    downstairs: S.KernelEvaluator
    decay: estimates.DecayFit = field(repr=False)

    @property
    def geom(self):
        return self.downstairs.geom

    @property
    def b(self):
        return self.tau.imag

    @property
    def cell_diameter(self):
        """Metric diameter of the fundamental parallelogram."""
        t = self.tau
        return max(abs(1 + t), abs(1 - t), 1.0, abs(t)) / math.sqrt(self.b)


@dataclass
class LatticeWindow:
    radius: float
    members: np.ndarray                # complex lattice points, sorted by metric norm
    indices: np.ndarray                # (m, n) integer pairs
    truncation_error_bound: float


@dataclass
class CoveringSum:
    raw: np.ndarray
    normalized: np.ndarray
    truncation_error_bound: float
    n_terms: int


class _UpstairsMagnitude:
    """Upstairs kernel magnitude in metric-flat coordinates, for the decay fit."""

    geom = ModelGeometry.fock(chart_bound=math.inf)

    def __init__(self, p):
        self.p = p

    def normalized_magnitude(self, x, y):
        d2 = np.abs(np.asarray(x) - np.asarray(y)) ** 2
        return self.p * np.exp(-self.p * math.pi * d2 / 2.0)


def build_covering(p: int, tau=1j, check_tol=1e-10) -> CoveringSetup:
    """Downstairs theta kernel, its closed-form cross-check and upstairs decay constants.

    The theta Gram matrix from quadrature is compared with the closed-form
    norms before anything else runs; disagreement above ``check_tol``
    raises :class:`AccuracyError`.
    """
    geom = ModelGeometry.torus(tau)
    ev = S.build_evaluator(geom, p)
    closed = S.KernelEvaluator(S.orthonormalize_diagonal(
        ev.basis, np.full(len(ev.basis), S.theta_norm_squared(p, geom.tau))))
    st = np.array([(0.0, 0.0), (0.31, 0.17), (0.77, 0.52), (0.4, 0.93)])
    probe = st[:, 0] + st[:, 1] * geom.tau
    x, y = np.repeat(probe, probe.size), np.tile(probe, probe.size)
    a, b = ev.normalized(x, y), closed.normalized(x, y)
    err = float(np.max(np.abs(a - b)) / p)
    if err > check_tol:
        raise AccuracyError(f"theta kernel from quadrature differs from closed form by {err:.2e}")
    adapter = _UpstairsMagnitude(p)
    pairs = estimates.sample_pairs(adapter.geom, p, s_max=estimates.S_WINDOW[1], spread=0.0)
    decay = estimates.fit_offdiagonal_decay(adapter, pairs, p)
    return CoveringSetup(geom.tau, int(p), ev, decay)


def upstairs_log_kernel(setup: CoveringSetup, z, w):
    """log P~_p(z, w) (complex logarithm of the raw value)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return math.log(setup.p) - setup.p * math.pi * (z - np.conj(w)) ** 2 / (2.0 * setup.b)


def upstairs_kernel(setup: CoveringSetup, z, w):
    """(raw value, normalized magnitude) of the plane kernel P~_p(z, w)."""
    lk = upstairs_log_kernel(setup, z, w)
    with np.errstate(over="ignore"):
        raw = np.exp(lk)
    mag = setup.p * np.exp(-setup.p * math.pi * np.abs(np.asarray(z) - np.asarray(w)) ** 2
                           / (2.0 * setup.b))
    return raw, mag


def _lattice_index(tau, gamma, tol=1e-9):
    s, t = lattice_coords(complex(tau), gamma)
    m, n = np.round(s), np.round(t)
    if np.any(np.abs(s - m) > tol) or np.any(np.abs(t - n) > tol):
        raise ValueError("gamma is not a lattice point")
    return m.astype(int), n.astype(int)


def log_cocycle(setup: CoveringSetup, gamma, z):
    """log e_gamma(z) with s(z + gamma) = e_gamma(z) s(z)."""
    _, n = _lattice_index(setup.tau, gamma)
    z = np.asarray(z, dtype=complex)
    return -1j * math.pi * setup.p * (n**2 * setup.tau + 2.0 * n * z)


def automorphy_cocycle(setup: CoveringSetup, gamma, z):
    """Multiplier e_gamma(z) of lifted sections."""
    return np.exp(log_cocycle(setup, gamma, z))


def lattice_points(tau, radius):
    """All gamma = m + n tau with metric norm |gamma| / sqrt(Im tau) <= radius.

    Enumerated over the bounding box |n| <= R / sqrt(b), |m + n Re tau| <= R sqrt(b),
    and sorted by norm (ties by (n, m)).
    """
    tau = complex(tau)
    b = tau.imag
    rb = radius * math.sqrt(b)
    n_max = int(math.floor(rb / b + 1e-12))
    ms, ns = [], []
    for n in range(-n_max, n_max + 1):
        c = n * tau.real
        lo = int(math.ceil(-rb - c - 1e-12))
        hi = int(math.floor(rb - c + 1e-12))
        m = np.arange(lo, hi + 1)
        ms.append(m)
        ns.append(np.full(m.size, n))
    m = np.concatenate(ms) if ms else np.zeros(0, int)
    n = np.concatenate(ns) if ns else np.zeros(0, int)
    g = m + n * tau
    norm = np.abs(g) / math.sqrt(b)
    keep = norm <= radius * (1 + 1e-12)
    m, n, g, norm = m[keep], n[keep], g[keep], norm[keep]
    order = np.lexsort((m, n, norm))
    return g[order], np.stack([m[order], n[order]], axis=1), norm[order]


def lattice_count(setup: CoveringSetup, r: float) -> int:
    """Number of lattice points within metric distance r of the origin."""
    if r < 0:
        raise ValueError("r must be non-negative")
    return int(lattice_points(setup.tau, r)[0].size)


def truncation_bound(setup: CoveringSetup, radius: float):
    """Bound on sum_{|gamma| > R} of normalized term sizes from the fitted decay.

    Each omitted term is at most C p exp(-c sqrt(p) max(0, |gamma| - D)),
    D the cell diameter, valid when x and y lie in the fundamental cell.  The sum runs
    explicitly to an extended radius where terms underflow; beyond it the
    count N(r) <= pi (r + D)^2 + 1 bounds the remainder.
    """
    fit, p = setup.decay, setup.p
    k = fit.c_fit * math.sqrt(p)
    D = setup.cell_diameter
    log_amp = fit.logC_fit + math.log(p)
    r_ext = max(radius, D) + (EXP_FLOOR + max(log_amp, 0.0)) / k
    _, _, norm = lattice_points(setup.tau, r_ext)
    tail = norm > radius
    expo = log_amp - k * np.maximum(0.0, norm[tail] - D)
    explicit = float(compensated_sum(np.exp(np.sort(expo)[::-1]))) if expo.size else 0.0
    # remainder beyond r_ext: integrate by parts against N(r)
    remainder, _ = integrate.quad(
        lambda r: k * (math.pi * (r + D) ** 2 + 1.0) * math.exp(log_amp - k * (r - D)),
        r_ext, math.inf)
    return explicit + remainder


def choose_window(setup: CoveringSetup, tol=1e-7, step=0.25) -> LatticeWindow:
    """Smallest radius (on a ``step`` grid) whose truncation bound is below 0.1 * tol."""
    r = step
    while True:
        bound = truncation_bound(setup, r)
        if bound < 0.1 * tol:
            return make_window(setup, r, bound)
        r += step
        if r > 1e4:
            raise WindowTooSmallError("no window radius reaches the requested tolerance")


def make_window(setup: CoveringSetup, radius: float, bound=None) -> LatticeWindow:
    g, idx, _ = lattice_points(setup.tau, radius)
    if bound is None:
        bound = truncation_bound(setup, radius)
    return LatticeWindow(float(radius), g, idx, float(bound))


def covering_sum(setup: CoveringSetup, window: LatticeWindow, x, y, tol=None) -> CoveringSum:
    """sum_{gamma in window} e_gamma(x)^{-1} P~_p(x + gamma, y), in order of increasing |gamma|.

    Terms are formed in log space relative to exp(p (phi(x) + phi(y))) and
    accumulated with compensated summation; ``normalized`` is the sum times
    exp(-p (phi(x) + phi(y))).

    Raises
    ------
    WindowTooSmallError
        ``tol`` is given and the window's truncation bound exceeds it.
    """
    if tol is not None and window.truncation_error_bound > tol:
        raise WindowTooSmallError(
            f"truncation bound {window.truncation_error_bound:.2e} exceeds tolerance {tol:.2e}")
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    x, y = np.broadcast_arrays(x, y)
    gauge = setup.p * (np.asarray(potential(setup.geom, x)) + np.asarray(potential(setup.geom, y)))
    g = window.members[:, None]
    n = window.indices[:, 1][:, None]
    log_e = -1j * math.pi * setup.p * (n**2 * setup.tau + 2.0 * n * x[None, :])
    terms = np.exp(upstairs_log_kernel(setup, x[None, :] + g, y[None, :]) - log_e - gauge[None, :])
    norm = compensated_sum(terms, axis=0)
    with np.errstate(over="ignore"):
        raw = norm * np.exp(gauge)
    return CoveringSum(raw, norm, window.truncation_error_bound, int(window.members.size))


def covering_residual(setup: CoveringSetup, window: LatticeWindow, x, y):
    """|covering sum - torus kernel| / |torus kernel|, in normalized form."""
    cs = covering_sum(setup, window, x, y)
    down = np.atleast_1d(setup.downstairs.normalized(np.atleast_1d(x), np.atleast_1d(y)))
    return np.abs(cs.normalized - down) / np.abs(down), cs, down


def gamma_dimension(setup: CoveringSetup, rule: QuadratureRule) -> float:
    """Integral of the upstairs diagonal density over the fundamental domain.

    ``rule`` must be a torus rule (it covers the fundamental parallelogram).
    The result is p^n / n! times the curvature integral, i.e. p, in the
    flat model.
    """
    if rule.domain != "torus":
        raise ValueError("gamma_dimension needs a rule over the fundamental domain")
    _, dens = upstairs_kernel(setup, rule.nodes, rule.nodes)
    vol = 1.0 / setup.b
    total = float(np.real(integrate_rule(rule, dens * vol)))
    if not math.isfinite(total):
        raise AccuracyError("non-finite Gamma-dimension integral")
    return total


def gamma_dimension_lower_bound(setup: CoveringSetup) -> float:
    """p^n / n! * int_X (i R^L / 2 pi)^n = p for the unit-volume torus."""
    return float(setup.p)
