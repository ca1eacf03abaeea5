"""Integration rules over chart domains.

Radial domains use Gauss-Legendre in ``u = r**2`` times the trapezoid rule in
the angle; the torus uses the tensor trapezoid rule in lattice coordinates
``z = s + t*tau``, which is spectrally accurate for lattice-periodic
integrands.  All node sums go through :func:`compensated_sum`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import EvaluationError, ResourceError
from .geometry import Kind, ModelGeometry

MAX_NODES = 4_000_000


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray        # complex chart points
    weights: np.ndarray      # positive, Lebesgue measure dx dy
    domain: str              # "disc" | "torus" | "annulus"
    radius: float = math.inf
    degree: int = 0

    def __len__(self):
        return self.nodes.size


def gauss_legendre(n, a, b):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss_legendre(breaks, n):
    """Composite rule with ``n`` nodes on each panel between consecutive breaks."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = leggauss(n)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    return (lo + half * (x + 1.0)).ravel(), (half * w).ravel()


def disc_rule(radius, n_radial, n_angle, inner=0.0):
    """Tensor rule on the disc (or annulus) of the given radius."""
    if n_radial * n_angle > MAX_NODES:
        raise ResourceError(f"{n_radial * n_angle} nodes exceeds the budget of {MAX_NODES}")
    u, wu = gauss_legendre(n_radial, inner**2, radius**2)
    theta = 2.0 * math.pi * np.arange(n_angle) / n_angle
    r = np.sqrt(u)
    nodes = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    # dx dy = r dr dtheta = du dtheta / 2
    weights = (0.5 * wu[:, None] * np.full(n_angle, 2.0 * math.pi / n_angle)[None, :]).ravel()
    return nodes, weights


def torus_rule(tau, n_side):
    if n_side * n_side > MAX_NODES:
        raise ResourceError(f"{n_side**2} nodes exceeds the budget of {MAX_NODES}")
    g = np.arange(n_side) / n_side
    s, t = np.meshgrid(g, g, indexing="ij")
    nodes = (s + t * tau).ravel()
    weights = np.full(nodes.size, tau.imag / n_side**2)
    return nodes, weights


def build_rule(geom: ModelGeometry, degree: int, radius: float | None = None) -> QuadratureRule:
    """Rule integrating z^a conj(z)^b, a + b <= degree, exactly over the model domain.

    On the torus ``degree`` is the largest trigonometric degree per lattice
    direction.  ``radius`` overrides the integration radius for radial models
    (default: the chart bound, or 1 for the disc).
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if geom.kind is Kind.FLAT_TORUS:
        nodes, weights = torus_rule(geom.tau, degree + 1)
        return QuadratureRule(nodes, weights, "torus", degree=degree)
    if radius is None:
        radius = 1.0 if geom.kind is Kind.POINCARE_DISC else geom.chart_bound
    if not math.isfinite(radius):
        raise ValueError("a finite radius is required for this model")
    n_radial = degree // 4 + 2
    n_angle = degree + 1
    nodes, weights = disc_rule(radius, n_radial, n_angle)
    return QuadratureRule(nodes, weights, "disc", radius=radius, degree=degree)


def two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def compensated_sum(values, axis=0, block=256):
    """Sum along ``axis`` with Neumaier-style compensation over fixed blocks.

    Blocks are reduced with numpy's pairwise summation, and the block
    partials are accumulated with error-free transforms in a fixed order, so
    the result does not depend on thread count.
    """
    values = np.moveaxis(np.asarray(values), axis, 0)
    n = values.shape[0]
    total = np.zeros(values.shape[1:], dtype=values.dtype)
    comp = np.zeros_like(total)
    for start in range(0, n, block):
        part = values[start:start + block].sum(axis=0)
        total, err = two_sum(total, part)
        comp += err
    out = total + comp
    return out[()] if np.ndim(out) == 0 else out


def integrate(rule: QuadratureRule, f):
    """Weighted node sum of ``f`` (callable on the node array, or precomputed values)."""
    values = f(rule.nodes) if callable(f) else np.asarray(f)
    values = np.asarray(values)
    bad = ~np.isfinite(values)
    if np.any(bad):
        k = int(np.flatnonzero(bad.reshape(values.shape[0], -1).any(axis=1))[0])
        raise EvaluationError(f"non-finite integrand at node {k}: z = {rule.nodes[k]!r}")
    weights = rule.weights.reshape((-1,) + (1,) * (values.ndim - 1))
    return compensated_sum(values * weights, axis=0)


def gram_sum(rule: QuadratureRule, values, block=256):
    """G[j, k] = sum_i w_i v[i, j] conj(v[i, k]) with compensated block accumulation."""
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise EvaluationError("non-finite basis value at a quadrature node")
    n = values.shape[1]
    total = np.zeros((n, n), dtype=complex)
    comp = np.zeros_like(total)
    for start in range(0, values.shape[0], block):
        v = values[start:start + block]
        part = (v * rule.weights[start:start + block, None]).T @ v.conj()
        total, err = two_sum(total, part)
        comp += err
    return total + comp
