"""Peak sections and the constructions built from them.

A peak section at x is y -> P_p(y, x) w.  All values here are h-normalized,
S(y) e^{-p phi(y)}, and the coefficient is stored in the same form, so
|S(y)|_h = |P_p(y, x)|_h |w|_h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (BasePointError, BoundViolationError, PreconditionError,
                     SequenceNotEscapingError)
from .estimates import COMPLEX_DIM, DecayFit
from .geometry import Kind, ModelGeometry, distance, geodesic_point
from .sections import KernelEvaluator

RANK_TOL = 1e-8
BASE_POINT_TOL = 1e-12  # density below this times p counts as vanishing


@dataclass
class PeakSection:
    ev: KernelEvaluator = field(repr=False)
    center: complex
    coefficient: complex          # h-normalized w
    height: float                 # |S(center)|_h

    def values(self, y):
        """h-normalized complex values S(y) e^{-p phi(y)}."""
        y = np.asarray(y, dtype=complex)
        return self.ev.normalized_accurate(y, np.full(y.shape, self.center)) * self.coefficient

    def norm(self, y):
        """|S(y)|_h."""
        y = np.asarray(y, dtype=complex)
        return self.ev.normalized_magnitude(y, np.full(y.shape, self.center)) * abs(self.coefficient)


def _diagonal(ev, x):
    return float(ev.normalized_magnitude(np.asarray(x, dtype=complex), np.asarray(x, dtype=complex)))


def peak_section(ev: KernelEvaluator, x, target_height: float) -> PeakSection:
    """Peak section at x with |S(x)|_h equal to ``target_height``.

    Raises
    ------
    BasePointError
        The density vanishes at x.
    """
    x = complex(x)
    dens = _diagonal(ev, x)
    if not dens > BASE_POINT_TOL * ev.p:
        raise BasePointError(f"density vanishes at {x!r}: x is a base point")
    coef = target_height / dens
    return PeakSection(ev, x, coef, dens * coef)


def base_point_free(ev: KernelEvaluator, points) -> tuple[bool, float]:
    """(no sampled density vanishes, smallest density) over the sampled points.

    A density at or below ``BASE_POINT_TOL * p`` counts as vanishing.
    """
    d = np.atleast_1d(ev.density(np.asarray(points, dtype=complex)))
    return bool(np.all(d > BASE_POINT_TOL * ev.p)), float(d.min())


def _rank2_ratio(rows):
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    sv = np.linalg.svd(rows, compute_uv=False)
    if sv.size < 2:
        return 0.0
    return float(sv[1] / sv[0])


def separation_ratio(ev: KernelEvaluator, x, y) -> float:
    """sigma_2 / sigma_1 of the row-normalized evaluation matrix [s(x); s(y)]."""
    x, y = complex(x), complex(y)
    if x == y:
        raise ValueError("separation needs distinct points")
    rows = ev.sections(np.array([x, y]))
    if np.any(np.linalg.norm(rows, axis=1) == 0):
        raise BasePointError("a section row vanishes (base point)")
    return _rank2_ratio(rows)


def separation_check(ev: KernelEvaluator, x, y, tol=RANK_TOL) -> bool:
    """True iff some section vanishes at x but not at y."""
    return separation_ratio(ev, x, y) > tol


def coordinate_ratio(ev: KernelEvaluator, x) -> float:
    """sigma_2 / sigma_1 of the row-normalized matrix [s(x); s'(x)]."""
    z = np.array([complex(x)])
    val = ev.sections(z)
    der = ev.sections(z, derivative=True)
    if np.linalg.norm(val) == 0:
        raise BasePointError("all sections vanish at x")
    if np.linalg.norm(der) == 0:
        return 0.0
    return _rank2_ratio(np.vstack([val, der]))


def local_coordinates_check(ev: KernelEvaluator, x, tol=RANK_TOL) -> bool:
    """True iff some quotient S1/S0 has non-zero differential at x."""
    return coordinate_ratio(ev, x) > tol


# --------------------------------------------------------------------------
# holomorphic convexity


@dataclass(frozen=True)
class MetricBall:
    center: complex
    radius: float

    def distance_to(self, geom, x):
        """d(x, K) for the closed metric ball K."""
        return np.maximum(0.0, np.asarray(distance(geom, self.center, x)) - self.radius)

    def sample(self, geom, n_angle=64, n_radius=32):
        """Polar grid: the centre plus ``n_radius`` geodesic circles of ``n_angle`` points."""
        r = self.radius * np.arange(1, n_radius + 1) / n_radius
        th = 2.0 * math.pi * np.arange(n_angle) / n_angle
        pts = geodesic_point(geom, self.center, th[None, :], r[:, None]).ravel()
        return np.concatenate([[self.center], pts])


@dataclass
class ConvexityCertificate:
    K_desc: MetricBall
    eps: float
    M: float
    delta: float
    K_eps_M_desc: MetricBall
    witness_points: list      # (x, |S(x)|_h, max_K |S|_h)
    rho_min: float


def decay_delta(decay: DecayFit, p: int, eps: float, M: float, rho_min: float) -> float:
    """Smallest delta >= 0 with C p^n e^{-c sqrt(p) delta} M / rho_min <= eps."""
    if not (eps > 0 and M > 0 and rho_min > 0):
        raise ValueError("eps, M and rho_min must be positive")
    num = decay.logC_fit + COMPLEX_DIM * math.log(p) + math.log(M / rho_min) - math.log(eps)
    return max(0.0, num / (decay.c_fit * math.sqrt(p)))


def convexity_construct(ev: KernelEvaluator, decay: DecayFit, K: MetricBall, eps: float,
                        M: float, probes) -> ConvexityCertificate:
    """Compact K(eps, M) = {d(., K) <= delta} with witnesses outside it.

    For each probe x a peak section of height M is built; the certificate
    records |S(x)|_h >= M and max over the K sample of |S|_h <= eps.

    Raises
    ------
    PreconditionError
        The model is compact or a probe lies inside K(eps, M).
    BoundViolationError
        A witness breaks either inequality (the decay fit is inconsistent).
    """
    geom = ev.geom
    if geom.is_compact:
        raise PreconditionError("holomorphic convexity is constructed on non-compact models only")
    sample = K.sample(geom)
    rho_min = float(np.min(ev.normalized_magnitude(sample, sample)))
    delta = decay_delta(decay, ev.p, eps, M, rho_min)
    enlarged = MetricBall(K.center, K.radius + delta)
    witnesses = []
    for x in np.atleast_1d(np.asarray(probes, dtype=complex)):
        if float(K.distance_to(geom, x)) <= delta:
            raise PreconditionError(f"probe {x!r} lies inside K(eps, M)")
        S = peak_section(ev, x, M * (1.0 + 1e-12))
        at_x = float(S.norm(np.array([x]))[0])
        on_K = float(np.max(S.norm(sample)))
        if at_x < M or on_K > eps:
            raise BoundViolationError(
                f"certificate fails at {x!r}: |S(x)| = {at_x:.3e}, max_K |S| = {on_K:.3e}")
        witnesses.append((complex(x), at_x, on_K))
    return ConvexityCertificate(K, eps, M, delta, enlarged, witnesses, rho_min)


# --------------------------------------------------------------------------
# escaping section


@dataclass
class EscapeStage:
    stage: int
    index: int                 # nu(i)
    point: complex
    K_radius: float
    delta: float
    height: float              # |S_i(x_nu(i))|_h
    previous_sum: float        # sum_{j<i} |S_j(x_nu(i))|_h
    running_sum: float         # |sum_{j<=i} S_j(x_nu(i))|_h
    max_on_K: float            # max over K_i of |S_i|_h


def default_escape_sequence(geom: ModelGeometry, n=60, step=0.08):
    """Points at distance step*k from the origin along a golden-angle spiral."""
    k = np.arange(1, n + 1)
    ang = k * math.pi * (3.0 - math.sqrt(5.0))
    return np.array([complex(geodesic_point(geom, 0.0, a, step * kk)) for a, kk in zip(ang, k)])


def escaping_section(ev: KernelEvaluator, decay: DecayFit, seq, stages: int = 5,
                     r0: float = 0.2) -> list[EscapeStage]:
    """Greedy construction of sections S_1, ..., S_stages on an exhaustion by balls.

    Stage i uses K_i = ball of radius i r0 about the origin, eps_i = 2^{-i}
    and required height 2^i + sum_{j<i} |S_j(x)|.  nu(i) is the first
    sequence index outside K_i(eps_i, height) and after nu(i-1).

    Raises
    ------
    SequenceNotEscapingError
        No remaining sequence point lies outside the enlarged compact set.
    """
    if not 1 <= stages <= 8:
        raise ValueError("stages must lie in 1..8")
    geom = ev.geom
    if geom.is_compact:
        raise PreconditionError("escaping sequences need a non-compact model")
    seq = np.asarray(seq, dtype=complex)
    dist0 = np.asarray(distance(geom, 0.0, seq))
    if np.any(np.diff(dist0) < 0):
        raise PreconditionError("sequence must be sorted by distance from the origin")
    built: list[PeakSection] = []
    records = []
    start = 0
    for i in range(1, stages + 1):
        K = MetricBall(0.0, i * r0)
        sample = K.sample(geom)
        rho_min = float(np.min(ev.normalized_magnitude(sample, sample)))
        eps = 2.0 ** (-i)
        chosen = None
        for idx in range(start, seq.size):
            x = seq[idx]
            prev = float(sum(S.norm(np.array([x]))[0] for S in built))
            need = 2.0 ** i + prev
            delta = decay_delta(decay, ev.p, eps, need, rho_min)
            if float(K.distance_to(geom, x)) > delta:
                chosen = (idx, x, prev, need, delta)
                break
        if chosen is None:
            raise SequenceNotEscapingError(f"no sequence point escapes K_{i}(eps, M) at stage {i}")
        idx, x, prev, need, delta = chosen
        S = peak_section(ev, x, need * (1.0 + 1e-12))
        on_K = float(np.max(S.norm(sample)))
        if on_K > eps:
            raise BoundViolationError(f"stage {i}: max_K |S_i| = {on_K:.3e} exceeds {eps:.3e}")
        built.append(S)
        total = abs(sum(T.values(np.array([x]))[0] for T in built))
        records.append(EscapeStage(i, idx, complex(x), K.radius, delta, float(S.norm(np.array([x]))[0]),
                                   prev, float(total), on_K))
        start = idx + 1
    return records
