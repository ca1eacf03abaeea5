import numpy as np
import pytest

from bergman.geometry import ModelGeometry


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ALL_MODELS = {
    "fock": ModelGeometry.fock(),
    "cp1": ModelGeometry.cp1(),
    "torus": ModelGeometry.torus(),
    "disc": ModelGeometry.disc(),
}


def random_chart_points(geom, n, rng, scale=None):
    """Uniform-ish points inside the evaluation domain of ``geom``."""
    if geom.name == "torus":
        s, t = rng.random(n), rng.random(n)
        return s + t * geom.tau
    if geom.name == "cp1":
        r = scale if scale is not None else 2.0
    elif geom.name == "disc":
        r = scale if scale is not None else geom.chart_bound
    else:
        r = scale if scale is not None else geom.chart_bound
    rad = r * np.sqrt(rng.random(n))
    return rad * np.exp(2j * np.pi * rng.random(n))


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            props = dict(rep.user_properties)
            lines.append((props.get("criterion", 0), outcome.upper()[:4],
                          props.get("title", rep.nodeid), props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num, verdict, title, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {num} [{verdict}] {title}: {detail}")
