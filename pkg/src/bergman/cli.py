"""Command-line front end.

Every subcommand reads an optional plain ``key=value`` config file
(``--config``), applies command-line flags on top, validates all keys
before computing, writes CSV data files plus one JSON report into
``output_dir`` and exits with

* 0 when every verdict passes,
* 1 when some verdict fails,
* 2 on a configuration error (the message names the offending key),
* 3 on a computational error.

CSV files are comma separated with a header row and 17 significant digits
(``%.16e``).  The JSON report has the fields ``command``, ``inputs``,
``results``, ``verdicts``, ``version``, ``schema`` and ``timestamp``; it is
byte-identical across runs with the same config apart from ``timestamp``.
The environment variable ``BERGMAN_THREADS`` caps BLAS/LAPACK threads.
"""
from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import applications as A
from . import covering as C
from . import estimates as E
from . import heatgap as H
from . import sections as S
from .errors import BergmanError, BoundViolationError, OutOfChartError
from .geometry import Kind, ModelGeometry, check_in_chart, curvature_constants, distance, geodesic_point, potential

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_COMPUTE = 0, 1, 2, 3


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


# --------------------------------------------------------------------------
# configuration keys


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _int(s):
    return int(s)


def _pos_float(s):
    v = float(s)
    if not (v > 0 and math.isfinite(v)):
        raise ValueError("must be a positive finite number")
    return v


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _complex(s):
    parts = [t.strip() for t in str(s).split(",")]
    if len(parts) != 2:
        raise ValueError("expected 're,im'")
    re, im = float(parts[0]), float(parts[1])
    if not (math.isfinite(re) and math.isfinite(im)):
        raise ValueError("must be finite")
    return complex(re, im)


def _int_list(s):
    vals = [int(t) for t in str(s).split(",") if t.strip()]
    if not vals or min(vals) < 1:
        raise ValueError("expected a comma-separated list of positive integers")
    return vals


def _bool(s):
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _geometry(s):
    t = str(s).strip().lower()
    if t not in {k.value for k in Kind}:
        raise ValueError("expected one of fock, cp1, torus, disc")
    return t


KEYS = {
    "geometry": (_geometry, "model: fock | cp1 | torus | disc"),
    "tau_re": (_float, "real part of the torus modulus"),
    "tau_im": (_pos_float, "imaginary part of the torus modulus"),
    "chart_bound": (_pos_float, "chart radius for fock/disc"),
    "p": (_pos_int, "tensor power"),
    "p_list": (_int_list, "comma-separated tensor powers"),
    "quad_degree": (_pos_int, "quadrature degree (forces the 2-D Gram path)"),
    "tail_tol": (_pos_float, "basis truncation tolerance"),
    "drop_tol": (_pos_float, "Gram eigenvalue drop tolerance"),
    "grid": (_pos_int, "grid points per side N"),
    "seed": (_int, "random seed"),
    "output_dir": (str, "directory for CSV and JSON output"),
    "x": (_complex, "first point 're,im'"),
    "y": (_complex, "second point 're,im'"),
    "pairs": (_pos_int, "number of random point pairs"),
    "tol": (_pos_float, "residual tolerance"),
    "k": (_int, "highest correction order of the diagonal fit"),
    "eps": (_pos_float, "target bound on K"),
    "M": (_pos_float, "target height at the probe"),
    "K_radius": (_pos_float, "radius of the metric ball K"),
    "probes": (_pos_int, "number of probe points"),
    "stages": (_pos_int, "number of escaping stages"),
    "points": (_pos_int, "number of random configurations"),
    "refine": (_bool, "also run the doubled grid"),
    "u": (_pos_float, "heat time for the projector identity"),
    "full": (_bool, "run every acceptance check"),
}

COMMON = {"geometry", "tau_re", "tau_im", "chart_bound", "seed", "output_dir",
          "tail_tol", "drop_tol", "quad_degree"}

COMMANDS = {
    "kernel": ({"p", "x", "y"}, {"geometry": "fock", "p": 4, "x": 0j, "y": 0.5 + 0j},
               "one kernel value; CSV p,x_re,x_im,y_re,y_im,raw_re,raw_im,norm_mag,distance"),
    "decay-fit": ({"p_list"}, {"geometry": "fock", "p_list": [16, 32, 64]},
                  "off-diagonal decay fit; CSV p,d,sqrtp_d,log_norm_mag"),
    "tyz": ({"p_list", "k", "x"}, {"geometry": "cp1", "p_list": [8, 16, 32, 64], "k": 2, "x": 0j},
            "diagonal expansion fit; CSV p,density"),
    "covering-check": ({"p", "pairs", "tol"}, {"geometry": "torus", "p": 4, "pairs": 50, "tol": 1e-6},
                       "lattice covering sum; CSV p,x_re,x_im,y_re,y_im,sum_re,sum_im,"
                       "torus_re,torus_im,residual,trunc_bound"),
    "gap": ({"p", "grid", "refine"}, {"geometry": "torus", "p": 4, "refine": True},
            "spectral gap of the discrete Laplacian; CSV N,index,eigenvalue"),
    "heat-id": ({"p", "grid", "u"}, {"geometry": "torus", "p": 4, "grid": 16, "u": 1.0},
                "heat identities; CSVs u,h,a,K,H,exact and a,p,d,u,lhs,rhs"),
    "peaks": ({"p", "points"}, {"geometry": "fock", "p": 16, "points": 50},
              "peak-section rank checks; CSV index,x_re,x_im,y_re,y_im,density_x,"
              "separation_ratio,coordinate_ratio"),
    "convexity": ({"p", "eps", "M", "K_radius", "probes"},
                  {"geometry": "disc", "p": 16, "eps": 1e-3, "M": 10.0, "K_radius": 1.0, "probes": 10},
                  "holomorphic convexity certificate; CSV index,x_re,x_im,S_at_x,max_on_K"),
    "escape": ({"p", "stages"}, {"geometry": "disc", "p": 32, "stages": 5},
               "escaping section; CSV stage,index,x_re,x_im,K_radius,delta,height,previous_sum,"
               "running_sum,max_on_K"),
    "verify": ({"p", "full"}, {"geometry": "torus", "p": 4, "full": False},
               "acceptance runner: gap, covering, reproducing and decay for one model, "
               "or every check with full=true"),
}
BASE_DEFAULTS = {"seed": 0, "output_dir": "bergman-output", "tail_tol": 1e-12, "drop_tol": 1e-12}


def parse_config_file(path, allowed):
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno} is not key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key] = _convert(key, value, allowed)
    return out


def _convert(key, value, allowed):
    if key not in KEYS or key not in allowed:
        raise ConfigError(key, "unknown key")
    try:
        return KEYS[key][0](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(key, f"invalid value {value!r}: {exc}") from None


def resolve_config(command, file_values, flag_values):
    """Defaults < config file < flags, then cross-key validation."""
    cfg = dict(BASE_DEFAULTS)
    cfg.update(COMMANDS[command][1])
    cfg.update(file_values)
    cfg.update({k: v for k, v in flag_values.items() if v is not None})
    validate(command, cfg)
    return cfg


def make_geometry(cfg):
    name = cfg["geometry"]
    tau = complex(cfg.get("tau_re", 0.0), cfg.get("tau_im", 1.0))
    return ModelGeometry.from_name(name, tau=tau, chart_bound=cfg.get("chart_bound"))


def validate(command, cfg):
    try:
        geom = make_geometry(cfg)
    except ValueError as exc:
        raise ConfigError("geometry", str(exc)) from None
    if "chart_bound" in cfg and geom.kind in (Kind.PROJECTIVE_LINE, Kind.FLAT_TORUS):
        raise ConfigError("chart_bound", f"not used by {geom.name}")
    if geom.kind is Kind.POINCARE_DISC and cfg.get("chart_bound", 0.5) >= 1:
        raise ConfigError("chart_bound", "must be below 1 on the disc")
    for key in ("x", "y"):
        if key in cfg and command in ("kernel", "tyz"):
            try:
                check_in_chart(geom, cfg[key])
            except OutOfChartError as exc:
                raise ConfigError(key, str(exc)) from None
    if command == "tyz" and not 0 <= cfg["k"] <= 6:
        raise ConfigError("k", "must lie in 0..6")
    if command == "tyz" and len(set(cfg["p_list"])) < cfg["k"] + 2:
        raise ConfigError("p_list", f"needs at least k + 2 = {cfg['k'] + 2} distinct powers")
    if command in ("covering-check", "gap", "heat-id") and geom.kind is not Kind.FLAT_TORUS:
        raise ConfigError("geometry", f"{command} runs on the torus only")
    if command in ("gap", "heat-id") and geom.tau != 1j:
        raise ConfigError("tau_re" if geom.tau.real else "tau_im", "the discrete Laplacian uses tau = i")
    if command in ("gap", "heat-id"):
        N = cfg.get("grid", _default_grid(cfg["p"]))
        if N * N < 16 * cfg["p"]:
            raise ConfigError("grid", f"N^2 = {N * N} is below 16 p = {16 * cfg['p']}")
        if command == "heat-id" and N * N > H.DENSE_LIMIT:
            raise ConfigError("grid", f"heat identities need the full spectrum: N^2 <= {H.DENSE_LIMIT}")
    if command in ("convexity", "escape") and geom.is_compact:
        raise ConfigError("geometry", f"{command} needs a non-compact model")
    if command == "escape" and cfg["stages"] > 8:
        raise ConfigError("stages", "must lie in 1..8")
    if command == "covering-check" and cfg["pairs"] > 10000:
        raise ConfigError("pairs", "at most 10000")


def _default_grid(p):
    return int(round(16 * math.sqrt(p)))


# --------------------------------------------------------------------------
# outcomes


@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)      # file stem -> (header, rows)

    def check(self, name, passed, measured, threshold):
        self.verdicts.append({"name": name, "pass": bool(passed), "measured": measured,
                              "threshold": threshold})

    def merge(self, other, prefix=""):
        for key, val in other.results.items():
            self.results[prefix + key] = val
        for v in other.verdicts:
            self.verdicts.append(dict(v, name=prefix + v["name"]))
        for key, val in other.tables.items():
            self.tables[prefix + key] = val

    def only(self, prefix):
        """Copy keeping only the verdicts whose name starts with ``prefix``."""
        return Outcome(verdicts=[v for v in self.verdicts if v["name"].startswith(prefix)])

    @property
    def passed(self):
        return all(v["pass"] for v in self.verdicts)


def _evaluator(cfg, geom, p):
    return S.build_evaluator(geom, p, tail_tol=cfg["tail_tol"], drop_tol=cfg["drop_tol"],
                             quad_degree=cfg.get("quad_degree"))


def _random_points(geom, n, rng):
    """Random points of the evaluation domain (fundamental cell on the torus)."""
    if geom.kind is Kind.FLAT_TORUS:
        s, t = rng.random(n), rng.random(n)
        return s + t * geom.tau
    r = 2.0 if geom.kind is Kind.PROJECTIVE_LINE else geom.chart_bound
    if geom.kind is Kind.POINCARE_DISC:
        r = 0.9 * geom.chart_bound
    rad = r * np.sqrt(rng.random(n))
    return rad * np.exp(2j * math.pi * rng.random(n))


def run_kernel(cfg):
    geom, p = make_geometry(cfg), cfg["p"]
    x, y = cfg["x"], cfg["y"]
    ev = _evaluator(cfg, geom, p)
    norm = complex(ev.normalized_accurate(x, y))
    gauge = p * (float(potential(geom, x)) + float(potential(geom, y)))
    raw = norm * math.exp(gauge) if gauge < 700 else complex("nan")
    mag = float(ev.normalized_magnitude(x, y))
    d = float(distance(geom, x, y))
    out = Outcome()
    out.results = {"p": p, "x": x, "y": y, "raw": raw, "norm_mag": mag, "distance": d}
    dens = ev.density(np.array([x, y]))
    cs = mag / math.sqrt(dens[0] * dens[1])
    out.check("cauchy_schwarz", cs <= 1 + 1e-10, cs, 1.0)
    if geom.kind is Kind.FOCK:
        exact = p * math.exp(-p * math.pi * abs(x - y) ** 2 / 2)
        err = abs(mag - exact) / exact
        out.check("fock_closed_form", err < 1e-8, err, 1e-8)
    out.tables["kernel"] = ("p,x_re,x_im,y_re,y_im,raw_re,raw_im,norm_mag,distance",
                            [[p, x.real, x.imag, y.real, y.imag, raw.real, raw.imag, mag, d]])
    return out


def run_decay(cfg, geom=None, p_list=None):
    geom = geom or make_geometry(cfg)
    p_list = list(p_list or cfg["p_list"])
    s_max = E.common_s_max(geom, p_list)
    out = Outcome()
    rows, cs = [], []
    for p in p_list:
        ev = _evaluator(cfg, geom, p)
        fit = E.fit_offdiagonal_decay(ev, E.sample_pairs(geom, p, s_max=s_max, seed=cfg["seed"]), p)
        n = int(fit.samples.shape[0])
        out.results[f"p{p}"] = {"c_fit": fit.c_fit, "logC_fit": fit.logC_fit,
                                "r_squared": fit.r_squared, "violations": fit.violations, "n_pairs": n}
        rows.extend([p, *r] for r in fit.samples)
        out.check(f"decay_violations_{geom.name}_p{p}", fit.violations == 0, fit.violations, 0)
        out.check(f"decay_pairs_{geom.name}_p{p}", n >= 200, n, 200)
        out.check(f"decay_c_positive_{geom.name}_p{p}", fit.c_fit > 0, fit.c_fit, 0.0)
        cs.append(fit.c_fit)
    out.results["s_max"] = s_max
    if len(cs) > 1:
        ratio = max(cs) / min(cs) if min(cs) > 0 else math.inf
        out.check(f"decay_c_stability_{geom.name}", ratio < 1.25, ratio, 1.25)
    out.tables[f"decay_{geom.name}"] = ("p,d,sqrtp_d,log_norm_mag", rows)
    return out


def run_tyz(cfg, geom=None, p_list=None):
    geom = geom or make_geometry(cfg)
    p_list = sorted(set(p_list or cfg["p_list"]))
    x = cfg.get("x", 0j)
    dens = {}
    out = Outcome()
    rng = np.random.default_rng(cfg["seed"])
    pts = _random_points(geom, 5, rng)
    exact_err = 0.0
    for p in p_list:
        ev = _evaluator(cfg, geom, p)
        dens[p] = float(ev.density(np.array([x]))[0])
        if geom.kind is Kind.PROJECTIVE_LINE:
            exact_err = max(exact_err, float(np.max(np.abs(ev.density(pts) - (p + 1)) / (p + 1))))
    fit = E.fit_diagonal_expansion(dens, cfg.get("k", 2))
    b0 = curvature_constants(geom).det_rl_over_2pi
    err = abs(fit.b[0] - b0) / b0
    out.results = {"b": fit.b, "residual": fit.residual, "condition": fit.condition, "b0_expected": b0}
    out.check(f"tyz_b0_{geom.name}", err < 0.01, err, 0.01)
    if geom.kind is Kind.PROJECTIVE_LINE:
        out.check("cp1_density_exact", exact_err < 1e-6, exact_err, 1e-6)
    out.tables[f"tyz_{geom.name}"] = ("p,density", [[p, dens[p]] for p in p_list])
    return out


def run_covering(cfg, p=None, tau=None, pairs=None, tol=None):
    p = p or cfg["p"]
    tau = tau if tau is not None else make_geometry(cfg).tau
    pairs = pairs or cfg["pairs"]
    tol = tol or cfg["tol"]
    setup = C.build_covering(p, tau)
    window = C.choose_window(setup)
    rng = np.random.default_rng(cfg["seed"])
    x = _random_points(setup.geom, pairs, rng)
    y = _random_points(setup.geom, pairs, rng)
    res, cs, down = C.covering_residual(setup, window, x, y)
    tag = f"p{p}_tau{tau.real:g}+{tau.imag:g}i"
    worst = float(np.max(res))
    out = Outcome()
    out.results[tag] = {"max_residual": worst, "window_radius": window.radius,
                        "n_terms": cs.n_terms, "truncation_bound": window.truncation_error_bound}
    out.check(f"covering_residual_{tag}", worst < tol, worst, tol)
    out.check(f"covering_truncation_{tag}", window.truncation_error_bound < 1e-7,
              window.truncation_error_bound, 1e-7)
    rows = [[p, a.real, a.imag, b.real, b.imag, s.real, s.imag, t.real, t.imag, r,
             window.truncation_error_bound]
            for a, b, s, t, r in zip(x, y, cs.normalized, down, res)]
    out.tables[f"covering_{tag}"] = (
        "p,x_re,x_im,y_re,y_im,sum_re,sum_im,torus_re,torus_im,residual,trunc_bound", rows)
    return out


def run_gamma_dimension(cfg, p_values):
    out = Outcome()
    for p in p_values:
        setup = C.build_covering(p, 1j)
        rule = S.default_rule(setup.geom, p, p)
        gd = C.gamma_dimension(setup, rule)
        err = abs(gd - p)
        out.results[f"gamma_dimension_p{p}"] = gd
        out.check(f"gamma_dimension_p{p}", err < 1e-6, err, 1e-6)
        lower = C.gamma_dimension_lower_bound(setup)
        out.check(f"gamma_dimension_lower_bound_p{p}", gd >= lower - 1e-6, gd - lower, 0.0)
    return out


def run_gap(cfg, p=None, N=None, refine=None):
    p = p or cfg["p"]
    N = N or cfg.get("grid") or _default_grid(p)
    refine = cfg.get("refine", True) if refine is None else refine
    out = Outcome()
    target = 2 * p * H.MU0
    errs, rows = [], []
    for n in ([N, 2 * N] if refine else [N]):
        model = H.build_gap_model(p, n)
        lam1 = model.first_nonzero
        ratio = lam1 / target
        errs.append(abs(ratio - 1))
        out.results[f"p{p}_N{n}"] = {"kernel_dim": model.kernel_dim, "first_nonzero": lam1,
                                     "target": target, "ratio": ratio,
                                     "lowest": model.heat_eigenvalues[:3 * p + 6].tolist()}
        out.check(f"gap_kernel_dim_p{p}_N{n}", model.kernel_dim == p, model.kernel_dim, p)
        out.check(f"gap_first_level_p{p}_N{n}", abs(ratio - 1) <= 0.1, abs(ratio - 1), 0.1)
        rows.extend([n, i, v] for i, v in enumerate(model.heat_eigenvalues[:3 * p + 6]))
    if refine:
        out.check(f"gap_refinement_p{p}", errs[1] < errs[0], errs[1], errs[0])
    out.tables[f"gap_p{p}"] = ("N,index,eigenvalue", rows)
    return out


def run_heat(cfg):
    p, N, u = cfg.get("p", 4), cfg.get("grid", 16), cfg.get("u", 1.0)
    out = Outcome()
    a = np.linspace(0, 5, 41)
    worst, rows = 0.0, []
    for uu in np.linspace(0.5, 5, 7):
        for h in (2, 4, 8):
            K, Hh = H.cutoff_kernels(H.CutoffPair(uu, h), a)
            exact = np.exp(-uu * a * a)
            worst = max(worst, float(np.max(np.abs(K + Hh - exact))))
            rows.extend([uu, h, ai, ki, hi, ei] for ai, ki, hi, ei in zip(a, K, Hh, exact))
    out.check("heat_cutoff_sum", worst < 1e-8, worst, 1e-8)
    out.tables["heat_cutoff"] = ("u,h,a,K,H,exact", rows)
    mu0 = H.torus_mu0()
    trows, failures = [], 0
    for aa, pp, d, uu in H.tail_grid():
        try:
            lhs, rhs = H.tail_inequality_check(mu0, aa, pp, d, uu)
        except BoundViolationError:
            failures += 1
            lhs = rhs = float("nan")
        trows.append([aa, pp, d, uu, lhs, rhs])
    out.check("heat_tail_inequality", failures == 0 and len(trows) == 72, failures, 0)
    out.tables["heat_tail"] = ("a,p,d,u,lhs,rhs", trows)
    model = H.build_gap_model(p, N)
    pi = H.projector_integral_identity(model, u)
    out.check("heat_projector_identity_matrix", pi.matrix_residual < 1e-8, pi.matrix_residual, 1e-8)
    out.check("heat_projector_identity_scalar", pi.scalar_residual < 1e-8, pi.scalar_residual, 1e-8)
    us, a_grid = [0.5, 1, 2, 5, 10], np.linspace(0.05, 3, 60)
    heat = H.gaussian_bound_check(model, us, a_grid, "heat")
    gap = H.gaussian_bound_check(model, us, a_grid, "gap")
    out.check("heat_gaussian_a_positive", heat.a_fit > 0, heat.a_fit, 0.0)
    out.check("heat_gap_variant_a_positive", gap.a_fit > 0, gap.a_fit, 0.0)
    out.check("heat_gap_variant_decay", gap.decay_slope <= -mu0 / 2, gap.decay_slope, -mu0 / 2)
    out.results = {"cutoff_max_error": worst, "tail_failures": failures,
                   "projector": {"scalar": pi.scalar_residual, "matrix": pi.matrix_residual,
                                 "u_max": pi.u_max},
                   "gaussian_heat": {"a_fit": heat.a_fit, "logC": heat.logC},
                   "gaussian_gap": {"a_fit": gap.a_fit, "logC": gap.logC, "decay_slope": gap.decay_slope}}
    return out


def run_peaks(cfg, geom=None, p=None, n=None):
    geom = geom or make_geometry(cfg)
    p = p or cfg["p"]
    n = n or cfg["points"]
    ev = _evaluator(cfg, geom, p)
    rng = np.random.default_rng(cfg["seed"])
    x = _random_points(geom, n, rng)
    y = _random_points(geom, n, rng)
    ok, low = A.base_point_free(ev, np.concatenate([x, y]))
    sep = np.array([A.separation_ratio(ev, a, b) for a, b in zip(x, y)])
    loc = np.array([A.coordinate_ratio(ev, a) for a in x])
    tag = f"{geom.name}_p{p}"
    out = Outcome()
    out.check(f"base_point_free_{tag}", ok, low, 0.0)
    out.check(f"separation_{tag}", bool(np.all(sep > A.RANK_TOL)), float(sep.min()), A.RANK_TOL)
    out.check(f"local_coordinates_{tag}", bool(np.all(loc > A.RANK_TOL)), float(loc.min()), A.RANK_TOL)
    out.results[tag] = {"min_density": low, "min_separation_ratio": float(sep.min()),
                        "min_coordinate_ratio": float(loc.min())}
    dens = ev.density(x)
    out.tables[f"peaks_{tag}"] = (
        "index,x_re,x_im,y_re,y_im,density_x,separation_ratio,coordinate_ratio",
        [[i, a.real, a.imag, b.real, b.imag, d, s, c]
         for i, (a, b, d, s, c) in enumerate(zip(x, y, dens, sep, loc))])
    return out


def _fit_at(cfg, ev):
    geom, p = ev.geom, ev.p
    return E.fit_offdiagonal_decay(ev, E.sample_pairs(geom, p, s_max=E.common_s_max(geom, [p]),
                                                      seed=cfg["seed"]), p)


def run_convexity(cfg, p=None):
    geom = make_geometry(cfg)
    p = p or cfg["p"]
    ev = _evaluator(cfg, geom, p)
    fit = _fit_at(cfg, ev)
    K = A.MetricBall(0j, cfg["K_radius"])
    sample = K.sample(geom)
    rho_min = float(np.min(ev.normalized_magnitude(sample, sample)))
    delta = A.decay_delta(fit, p, cfg["eps"], cfg["M"], rho_min)
    n = cfg["probes"]
    probes = geodesic_point(geom, 0j, 2 * math.pi * np.arange(n) / n, K.radius + delta + 0.05)
    out = Outcome()
    tag = f"{geom.name}_p{p}"
    try:
        cert = A.convexity_construct(ev, fit, K, cfg["eps"], cfg["M"], probes)
        witnesses = cert.witness_points
        ok = len(witnesses) == n
    except BoundViolationError as exc:
        witnesses, ok = [], False
        out.results[f"{tag}_failure"] = str(exc)
    out.check(f"convexity_certificate_{tag}", ok, len(witnesses), n)
    out.results[tag] = {"c_fit": fit.c_fit, "logC_fit": fit.logC_fit, "delta": delta,
                        "rho_min": rho_min, "K_radius": K.radius,
                        "K_eps_M_radius": K.radius + delta,
                        "witnesses": [{"x": w[0], "S_at_x": w[1], "max_on_K": w[2]} for w in witnesses]}
    out.tables[f"convexity_{tag}"] = ("index,x_re,x_im,S_at_x,max_on_K",
                                      [[i, w[0].real, w[0].imag, w[1], w[2]]
                                       for i, w in enumerate(witnesses)])
    return out


def run_escape(cfg):
    geom = make_geometry(cfg)
    p, stages = cfg["p"], cfg["stages"]
    ev = _evaluator(cfg, geom, p)
    fit = _fit_at(cfg, ev)
    recs = A.escaping_section(ev, fit, A.default_escape_sequence(geom), stages)
    out = Outcome()
    tag = f"{geom.name}_p{p}"
    out.check(f"escape_stages_{tag}", len(recs) == stages, len(recs), stages)
    for r in recs:
        out.check(f"escape_height_stage{r.stage}", r.running_sum >= 2.0 ** (r.stage - 1),
                  r.running_sum, 2.0 ** (r.stage - 1))
        out.check(f"escape_small_on_K_stage{r.stage}", r.max_on_K <= 2.0 ** (-r.stage),
                  r.max_on_K, 2.0 ** (-r.stage))
    fields = ["stage", "index", "point", "K_radius", "delta", "height", "previous_sum",
              "running_sum", "max_on_K"]
    out.results[tag] = {"c_fit": fit.c_fit, "logC_fit": fit.logC_fit,
                        "stages": [{f: getattr(r, f) for f in fields} for r in recs]}
    out.tables[f"escape_{tag}"] = (
        "stage,index,x_re,x_im,K_radius,delta,height,previous_sum,running_sum,max_on_K",
        [[r.stage, r.index, r.point.real, r.point.imag, r.K_radius, r.delta, r.height,
          r.previous_sum, r.running_sum, r.max_on_K] for r in recs])
    return out


def run_reproducing(cfg, geom, p, n_pairs=20):
    ev = _evaluator(cfg, geom, p)
    rule = S.default_rule(geom, p, len(ev.basis))
    rng = np.random.default_rng(cfg["seed"])
    xs, zs = _random_points(geom, n_pairs, rng), _random_points(geom, n_pairs, rng)
    worst = max(ev.reproducing_check(rule, x, z) for x, z in zip(xs, zs))
    out = Outcome()
    out.check(f"reproducing_{geom.name}_p{p}", worst < 1e-6, worst, 1e-6)
    out.results[f"reproducing_{geom.name}_p{p}"] = worst
    return out


def run_fock_closed_form(cfg, p_values=(1, 4, 16), n=200):
    out = Outcome()
    geom = ModelGeometry.fock()
    rng = np.random.default_rng(cfg["seed"])
    for p in p_values:
        ev = _evaluator(cfg, geom, p)
        z = 2.0 * np.sqrt(rng.random(n)) * np.exp(2j * math.pi * rng.random(n))
        w = 2.0 * np.sqrt(rng.random(n)) * np.exp(2j * math.pi * rng.random(n))
        exact = p * np.exp(-p * math.pi * np.abs(z - w) ** 2 / 2)
        err = float(np.max(np.abs(ev.normalized_magnitude(z, w) - exact) / exact))
        out.check(f"fock_closed_form_p{p}", err < 1e-8, err, 1e-8)
    return out


def run_verify(cfg):
    geom, p = make_geometry(cfg), cfg["p"]
    out = Outcome()
    if not cfg.get("full"):
        out.merge(run_decay(cfg, geom, [p]))
        if geom.is_compact:
            out.merge(run_reproducing(cfg, geom, p))
        if geom.kind is Kind.FLAT_TORUS:
            out.merge(run_covering(cfg, p=p, tau=geom.tau, pairs=50, tol=1e-6))
            if geom.tau == 1j:
                out.merge(run_gap(cfg, p=p, N=_default_grid(p), refine=True))
        return out
    models = {"fock": ModelGeometry.fock(), "cp1": ModelGeometry.cp1(),
              "torus": ModelGeometry.torus(), "disc": ModelGeometry.disc()}
    out.merge(run_fock_closed_form(cfg), "c1_")
    for name in ("cp1", "torus"):
        for q in range(2, 9):
            out.merge(run_reproducing(cfg, models[name], q), "c2_")
    for name in ("cp1", "torus"):
        out.merge(run_tyz(dict(cfg, k=2, x=0j), models[name], [8, 16, 32, 64]), "c3_")
    for name, g in models.items():
        out.merge(run_decay(cfg, g, [16, 32, 64]), "c4_")
    for tau in (1j, 0.5 + 1j):
        for q in range(3, 13):
            out.merge(run_covering(cfg, p=q, tau=tau, pairs=50, tol=1e-6), "c5_")
    for q in (4, 8, 16):
        out.merge(run_gap(cfg, p=q, N=_default_grid(q), refine=True), "c6_")
    out.merge(run_heat(dict(cfg, p=4, grid=16, u=1.0)), "c7_")
    for name, g in models.items():
        out.merge(run_peaks(cfg, g, 1, 50).only("base_point_free"), "c8_")
        out.merge(run_peaks(cfg, g, 16, 50), "c8_")
    disc_cfg = dict(cfg, geometry="disc", eps=1e-3, M=10.0, K_radius=1.0, probes=10)
    disc_cfg.pop("tau_re", None), disc_cfg.pop("tau_im", None)
    for q in (16, 32):
        out.merge(run_convexity(disc_cfg, q), "c8_")
    out.merge(run_escape(dict(disc_cfg, p=32, stages=5)), "c8_")
    out.merge(run_gamma_dimension(cfg, range(1, 9)), "c9_")
    return out

RUNNERS = {
    "kernel": run_kernel,
    "decay-fit": run_decay,
    "tyz": run_tyz,
    "covering-check": run_covering,
    "gap": run_gap,
    "heat-id": run_heat,
    "peaks": run_peaks,
    "convexity": run_convexity,
    "escape": run_escape,
    "verify": run_verify,
}


# --------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(float(obj.real)), _jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def build_report(command, cfg, outcome):
    return {
        "command": command,
        "inputs": _jsonable({k: cfg[k] for k in sorted(cfg)}),
        "results": _jsonable(outcome.results),
        "verdicts": _jsonable(outcome.verdicts),
        "passed": outcome.passed,
        "version": __version__,
        "schema": SCHEMA_VERSION,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _fmt(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.16e" % float(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_outputs(command, cfg, outcome):
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for stem, (header, rows) in sorted(outcome.tables.items()):
        write_csv(out_dir / f"{stem}.csv", header, rows)
    report = build_report(command, cfg, outcome)
    path = out_dir / f"{command}.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path, report


# --------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bergman", description="Bergman kernel verification suite.",
        epilog="Exit status: 0 all verdicts pass, 1 a verdict fails, 2 config error, "
               "3 computational error.  BERGMAN_THREADS caps BLAS threads.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (keys, defaults, doc) in COMMANDS.items():
        sp = sub.add_parser(name, help=doc, description=doc)
        sp.add_argument("--config", help="plain key=value config file")
        sp.add_argument("--tau", help="torus modulus 're,im' (sets tau_re and tau_im)")
        for key in sorted(keys | COMMON):
            conv, text = KEYS[key]
            default = defaults.get(key, BASE_DEFAULTS.get(key))
            shown = f" (default {default})" if default is not None else ""
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                            help=text + shown)
    return parser


def _thread_limit():
    raw = os.environ.get("BERGMAN_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError("BERGMAN_THREADS", f"must be a positive integer, got {raw!r}")
    return n


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    allowed = COMMANDS[command][0] | COMMON
    try:
        threads = _thread_limit()
        file_values = parse_config_file(args.config, allowed) if args.config else {}
        flags = {}
        for key in allowed:
            raw = getattr(args, key, None)
            if raw is not None:
                flags[key] = _convert(key, raw, allowed)
        if args.tau is not None:
            try:
                tau = _complex(args.tau)
            except ValueError as exc:
                raise ConfigError("tau", str(exc)) from None
            flags["tau_re"], flags["tau_im"] = tau.real, _convert("tau_im", tau.imag, allowed)
        cfg = resolve_config(command, file_values, flags)
    except ConfigError as exc:
        print(f"bergman: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                outcome = RUNNERS[command](cfg)
        else:
            outcome = RUNNERS[command](cfg)
    except (BergmanError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"bergman: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    path, report = write_outputs(command, cfg, outcome)
    if command == "kernel":
        header, rows = outcome.tables["kernel"]
        print(header)
        print(",".join(_fmt(v) for v in rows[0]))
    for v in report["verdicts"]:
        print(f"{'PASS' if v['pass'] else 'FAIL'} {v['name']} measured={v['measured']} "
              f"threshold={v['threshold']}")
    print(f"report: {path}")
    return EXIT_OK if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
