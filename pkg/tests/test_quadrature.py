import math

import numpy as np
import pytest
from scipy import special

from bergman.errors import EvaluationError
from bergman.geometry import ModelGeometry
from bergman.quadrature import (QuadratureRule, build_rule, compensated_sum, disc_rule,
                                integrate)


def _disc(radius, degree):
    return build_rule(ModelGeometry.fock(chart_bound=radius), degree)


def test_torus_area():
    rule = build_rule(ModelGeometry.torus(), 8)
    assert integrate(rule, lambda z: np.ones_like(z.real)) == pytest.approx(1.0, abs=1e-12)


def test_odd_integrand_vanishes():
    rule = _disc(1.0, 20)
    assert abs(integrate(rule, lambda z: z)) < 1e-14


def test_gaussian_moment():
    # oracle: pi * int_0^25 u e^{-pi u} du via the regularized incomplete gamma
    expected = math.pi * special.gammainc(2, 25 * math.pi) * special.gamma(2) / math.pi**2
    rule = _disc(5.0, 160)
    val = integrate(rule, lambda z: np.abs(z) ** 2 * np.exp(-math.pi * np.abs(z) ** 2))
    assert val.real == pytest.approx(expected, abs=1e-10)
    assert expected == pytest.approx(1 / math.pi, abs=1e-12)


@pytest.mark.parametrize("degree", [0, 5, 12, 31])
def test_monomial_exactness(degree):
    rule = _disc(1.3, degree)
    R = 1.3
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = integrate(rule, lambda z: z**a * np.conj(z) ** b)
            exact = 2 * math.pi * R ** (a + b + 2) / (a + b + 2) if a == b else 0.0
            assert abs(val - exact) < 1e-12 * max(1.0, R ** (a + b + 2))


def test_weights_positive_nodes_inside():
    rule = _disc(2.0, 30)
    assert np.all(rule.weights > 0)
    assert np.all(np.abs(rule.nodes) < 2.0)
    trule = build_rule(ModelGeometry.torus(0.5 + 1j), 10)
    assert np.all(trule.weights > 0)


def test_conj_product_real():
    rule = _disc(1.0, 30)
    val = integrate(rule, lambda z: np.abs(np.sin(3 * z) + 1j * z**2) ** 2)
    assert abs(val.imag) < 1e-14


def test_refinement_reduces_error():
    # smooth non-polynomial integrand: the finer rule is closer to the oracle
    oracle = 2 * math.pi * (1 - math.exp(-1.0)) / 2  # int_disc exp(-|z|^2)
    errs = [abs(integrate(_disc(1.0, d), lambda z: np.exp(-np.abs(z) ** 2)) - oracle) for d in (4, 8)]
    assert errs[1] <= 0.5 * errs[0]


def test_nonfinite_integrand_named():
    rule = _disc(1.0, 4)
    with pytest.raises(EvaluationError, match="node"), np.errstate(all="ignore"):
        integrate(rule, lambda z: 1.0 / (z - rule.nodes[3]))


def test_compensated_sum_accuracy_and_order():
    rng = np.random.default_rng(1)
    vals = rng.standard_normal(100_000) * 10.0 ** rng.integers(-15, 15, 100_000)
    exact = math.fsum(vals)
    assert compensated_sum(vals) == pytest.approx(exact, rel=1e-14, abs=1e-3)
    assert compensated_sum(vals) == compensated_sum(vals.copy())
