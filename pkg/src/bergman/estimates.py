"""Fitted constants for the kernel estimates.

Off-diagonal decay is fitted in the form

    log |P_p(x, y)|_h <= log C + n log p - c sqrt(p) d(x, y),      n = 1,

and the density on the diagonal is fitted to a polynomial in 1/p,
``p^{-n} P_p(x, x) ~ b_0 + b_1/p + ... + b_k/p^k``.  Both are reported as
empirical numbers; only the functional form is prescribed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConditioningError, PreconditionError, UnderflowError
from .geometry import (Kind, ModelGeometry, curvature_constants, distance,
                       geodesic_point, max_radial_distance)

COMPLEX_DIM = 1
S_WINDOW = (0.5, 8.0)
UNDERFLOW = 1e-300


@dataclass
class DecayFit:
    c_fit: float
    logC_fit: float
    n_used: int
    r_squared: float
    violations: int
    samples: np.ndarray = field(default=None, repr=False)  # rows (d, sqrt(p) d, log|P|_h)

    def bound(self, p, d):
        """Right-hand side log C + n log p - c sqrt(p) d of the fitted bound."""
        return self.logC_fit + self.n_used * math.log(p) - self.c_fit * math.sqrt(p) * np.asarray(d)


@dataclass
class ExpansionFit:
    b: list
    residual: float
    p_list: list
    condition: float = 0.0


@dataclass
class ConstantSheet:
    mu0: float
    C_L: Optional[float]
    p0_formula: Optional[float]
    c_formula_given_a: Callable[[float], float]
    note: str = ""

    @property
    def C_L_known(self):
        return self.C_L is not None


def common_s_max(geom: ModelGeometry, p_values, s_window=S_WINDOW, fraction=0.5):
    """Largest sqrt(p) d used for every p in ``p_values``.

    Sharing one range across p keeps the fitted slope comparable between
    powers.  Distances are further capped at ``fraction`` of the model's
    radial reach: curvature bends log|P|_h away from its Gaussian profile
    by O(s^4 / p), which would otherwise dominate the slope at small p.
    """
    d_max = fraction * max_radial_distance(geom)
    return min(s_window[1], math.sqrt(min(p_values)) * d_max)


def sample_pairs(geom: ModelGeometry, p: int, n_dirs=8, n_radii=25, s_max=None,
                 s_min=S_WINDOW[0], seed=0, spread=0.5):
    """Point pairs along geodesic rays: ``n_dirs`` directions times ``n_radii`` radii.

    Each ray starts at its own base point drawn from a fixed-seed generator
    (within ``spread`` of the chart origin, or anywhere on the torus) and
    the radii are evenly spaced in sqrt(p) d on [s_min, s_max].
    """
    if s_max is None:
        s_max = common_s_max(geom, [p])
    rng = np.random.default_rng(seed)
    if geom.kind is Kind.FLAT_TORUS:
        st = rng.random((n_dirs, 2))
        base = st[:, 0] + st[:, 1] * geom.tau
    else:
        r = spread * np.sqrt(rng.random(n_dirs))
        base = r * np.exp(2j * math.pi * rng.random(n_dirs))
        if geom.kind is Kind.POINCARE_DISC:
            base = base * 0.5
    angles = 2.0 * math.pi * (np.arange(n_dirs) + rng.random(n_dirs)) / n_dirs
    d = np.linspace(s_min, s_max, n_radii) / math.sqrt(p)
    xs, ys = [], []
    for x0, a in zip(base, angles):
        xs.append(np.full(n_radii, x0))
        ys.append(geodesic_point(geom, x0, a, d))
    return np.concatenate(xs), np.concatenate(ys)


def fit_offdiagonal_decay(ev, pairs, p: int, s_window=S_WINDOW) -> DecayFit:
    """Fit (c, log C) for the off-diagonal bound and inflate log C to zero violations.

    Parameters
    ----------
    ev : KernelEvaluator
        Evaluator at power ``p``.
    pairs : tuple of arrays or sequence of (x, y)
        Sample pairs.  Pairs with sqrt(p) d outside ``s_window`` are ignored.
    p : int

    Returns
    -------
    DecayFit
        ``c_fit`` and the intercept come from a least-squares line through
        ``log|P|_h - log p`` against sqrt(p) d; the intercept is then raised
        by the smallest amount making the bound hold at every sample.
    """
    x, y = _split_pairs(pairs)
    d = np.asarray(distance(ev.geom, x, y), dtype=float)
    s = math.sqrt(p) * d
    inside = (s >= s_window[0] * (1 - 1e-12)) & (s <= s_window[1] * (1 + 1e-12))
    if np.count_nonzero(inside) < 3:
        raise PreconditionError(
            f"need at least 3 pairs with sqrt(p) d in {list(s_window)}; got {np.count_nonzero(inside)}")
    x, y, d, s = x[inside], y[inside], d[inside], s[inside]
    mag = np.asarray(ev.normalized_magnitude(x, y), dtype=float)
    ok = mag > UNDERFLOW
    if not np.any(ok):
        raise UnderflowError("all kernel magnitudes underflow; reduce the distance range")
    with np.errstate(divide="ignore"):
        logm = np.log(mag)
    yv = logm[ok] - COMPLEX_DIM * math.log(p)
    sv = s[ok]
    if np.ptp(sv) == 0:
        raise PreconditionError("all usable pairs have the same distance")
    A = np.column_stack([np.ones_like(sv), -sv])
    (icpt, c), *_ = np.linalg.lstsq(A, yv, rcond=None)
    pred = A @ np.array([icpt, c])
    ss_tot = np.sum((yv - yv.mean()) ** 2)
    r2 = 1.0 - np.sum((yv - pred) ** 2) / ss_tot if ss_tot > 0 else 1.0
    # smallest intercept giving zero violations, plus a rounding margin
    top = float(np.max(yv + c * sv))
    logC = top + 1e-12 * (1.0 + abs(top))
    bound = logC - c * sv
    violations = int(np.count_nonzero(yv > bound))
    samples = np.column_stack([d, s, logm])
    return DecayFit(float(c), float(logC), COMPLEX_DIM, float(min(max(r2, 0.0), 1.0)),
                    violations, samples)


def _split_pairs(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2 and np.ndim(pairs[0]) == 1:
        x, y = pairs
    else:
        arr = np.asarray(list(pairs), dtype=complex).reshape(-1, 2)
        x, y = arr[:, 0], arr[:, 1]
    return np.asarray(x, dtype=complex), np.asarray(y, dtype=complex)


def fit_diagonal_expansion(densities: dict, k: int, n: int = COMPLEX_DIM,
                           max_condition=1e12) -> ExpansionFit:
    """Least-squares fit of P_p(x, x) = sum_{r<=k} b_r p^{n-r}.

    Parameters
    ----------
    densities : dict
        Map p -> density at one fixed chart point.
    k : int
        Highest correction order.
    n : int
        Complex dimension.

    Raises
    ------
    PreconditionError
        Fewer than k + 2 distinct powers.
    ConditioningError
        The column-scaled Vandermonde system has condition number above
        ``max_condition``.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    ps = np.array(sorted(densities), dtype=float)
    if np.unique(ps).size < k + 2:
        raise PreconditionError(f"need at least {k + 2} distinct powers, got {np.unique(ps).size}")
    vals = np.array([densities[p] for p in sorted(densities)], dtype=float)
    V = ps[:, None] ** (-np.arange(k + 1, dtype=float))[None, :]
    scale = np.linalg.norm(V, axis=0)
    Vs = V / scale
    cond = float(np.linalg.cond(Vs))
    if not np.isfinite(cond) or cond > max_condition:
        raise ConditioningError(f"Vandermonde condition number {cond:.3e} exceeds {max_condition:.1e}")
    rhs = vals / ps**n
    coef, *_ = np.linalg.lstsq(Vs, rhs, rcond=None)
    b = coef / scale
    fitted = (V @ b) * ps**n
    pmax = ps.max()
    denom = abs(b[0]) * pmax**n if b[0] != 0 else 1.0
    residual = float(np.max(np.abs(fitted - vals)) / denom)
    return ExpansionFit([float(v) for v in b], residual, [int(p) for p in ps], cond)


def constant_sheet(geom: ModelGeometry) -> ConstantSheet:
    """Explicit-constant relations: p0 = 2 C_L / mu0 and c(a) = sqrt(a mu0).

    On the flat models (Fock, torus) the metric is flat, the twisting bundle
    is trivial and the lower-order term of the Bochner-Kodaira formula
    vanishes, so C_L = 0 and every p >= 1 is admissible.  On the curved
    models C_L is not determined here and p0 is left empirical.
    """
    mu0 = curvature_constants(geom).mu0

    def c_of_a(a):
        if a < 0:
            raise ValueError("a must be non-negative")
        return math.sqrt(a * mu0)

    if geom.kind in (Kind.FOCK, Kind.FLAT_TORUS):
        return ConstantSheet(mu0, 0.0, 0.0, c_of_a, "flat metric, trivial twisting: C_L = 0")
    return ConstantSheet(mu0, None, None, c_of_a, "C_L unknown; p0 empirical")
