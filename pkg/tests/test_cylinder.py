import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcalc.core import CylinderFunctional, NumericsConfig, SublinearGenerator
from gcalc.cylinder import (
    TensorBlowupError,
    conditional_g_expectation,
    estimated_cost,
    g_expectation,
    g_mean_bounds,
    parameter_axes,
    stage_slice_surface,
)
from gcalc.gheat import backward_sweep, interp_uniform, steps_for

G12 = SublinearGenerator.standard(1, 2)
COARSE = NumericsConfig(n_nodes=61)


def test_square_terminal():
    assert g_expectation(CylinderFunctional((1.0,), lambda x: x**2), G12) == pytest.approx(2.0, abs=1e-2)


def test_single_interval_equals_direct_solve():
    phi = lambda x: np.cos(x) + 0.1 * x**3  # noqa: E731
    xi = CylinderFunctional((0.7,), phi)
    cfg = NumericsConfig()
    ax = parameter_axes(xi, G12, cfg)[0]
    n = steps_for(G12, ax.dx, 0.7, safety=cfg.cfl_safety)
    direct = interp_uniform(ax.nodes, backward_sweep(phi(ax.nodes), G12, ax.nodes, 0, 0.7, n), 0.0)
    assert abs(g_expectation(xi, G12, cfg) - direct) <= 1e-12


def test_increment_square():
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: (b - a) ** 2)
    assert g_expectation(xi, G12) == pytest.approx(1.0, abs=1e-2)


def test_mean_bounds():
    lo, hi = g_mean_bounds(CylinderFunctional((1.0,), lambda x: x**2), G12)
    assert (lo, hi) == pytest.approx((1.0, 2.0), abs=1e-2)
    lo, hi = g_mean_bounds(CylinderFunctional((1.0,), lambda x: x), G12)
    assert abs(lo) <= 1e-2 and abs(hi) <= 1e-2
    lo, hi = g_mean_bounds(CylinderFunctional.constant(1.5), G12)
    assert lo == pytest.approx(1.5, abs=1e-12) and hi == pytest.approx(1.5, abs=1e-12)


@pytest.mark.parametrize("b", [0.0, 1.0])
def test_conditional_square(b):
    xi = CylinderFunctional((1.0,), lambda x: x**2)
    assert conditional_g_expectation(xi, 0.5, {0.5: b}, G12) == pytest.approx(b * b + 1.0, abs=1e-2)


def test_conditional_at_own_time_is_terminal():
    xi = CylinderFunctional((0.5,), lambda x: x)
    assert conditional_g_expectation(xi, 0.5, {0.5: 0.37}, G12) == pytest.approx(0.37)


def test_conditional_at_zero_matches_expectation():
    xi = CylinderFunctional((1.0,), lambda x: x**2)
    assert abs(conditional_g_expectation(xi, 0.0, {}, G12) - g_expectation(xi, G12)) <= 1e-12


def test_conditional_needs_observations():
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: a * b)
    with pytest.raises(ValueError, match="0.5"):
        conditional_g_expectation(xi, 0.75, {0.75: 0.1}, G12)


def test_arity_cap():
    xi = CylinderFunctional((0.25, 0.5, 0.75, 1.0), lambda a, b, c, d: d)
    with pytest.raises(TensorBlowupError) as info:
        g_expectation(xi, G12)
    assert info.value.cost == pytest.approx(estimated_cost(xi, G12, NumericsConfig()))
    assert "tensor blow-up" in str(info.value)


def test_tower():
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: np.maximum(b - a, 0) + 0.2 * a**2)
    full = g_expectation(xi, G12, COARSE)
    ax = parameter_axes(xi, G12, COARSE)[0]
    inner = np.array([conditional_g_expectation(xi, 0.5, {0.5: v}, G12, COARSE) for v in ax.nodes])
    n = steps_for(G12, ax.dx, 0.5, safety=COARSE.cfl_safety)
    nested = backward_sweep(inner, G12, ax.nodes, 0, 0.5, n)[ax.n_nodes // 2]
    assert abs(full - nested) <= 2 * COARSE.tol


def test_linear_matches_nested_quadrature():
    g = SublinearGenerator.linear()
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: np.sin(a) * np.cos(b) + a * b)
    y, w = np.polynomial.hermite_e.hermegauss(50)
    w = w / w.sum()
    a = math.sqrt(0.5) * y[:, None]
    b = a + math.sqrt(0.5) * y[None, :]
    ref = float((np.outer(w, w) * xi(a, b)).sum())
    assert g_expectation(xi, g) == pytest.approx(ref, abs=2e-3)


def test_stage_slice_surface():
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: (b - a) ** 2)
    s = stage_slice_surface(xi, G12, COARSE, 1, [0.3])
    assert s.time_levels[0] == pytest.approx(0.5) and s.time_levels[-1] == pytest.approx(1.0)
    assert s.at(0.5, 0.3) == pytest.approx(1.0, abs=2e-2)


poly_coef = st.lists(st.floats(-1, 1), min_size=5, max_size=5)


@settings(max_examples=15, deadline=None)
@given(poly_coef, poly_coef, st.floats(0, 4), st.floats(-3, 3))
def test_axioms(c1, c2, lam, c):
    g = SublinearGenerator.standard(0.5, 1.5)
    p1 = lambda a, b: np.polynomial.polynomial.polyval(b - 0.5 * a, c1)  # noqa: E731
    p2 = lambda a, b: np.polynomial.polynomial.polyval(a, c2) * 0.5  # noqa: E731
    x1, x2 = CylinderFunctional((0.5, 1.0), p1), CylinderFunctional((0.5, 1.0), p2)
    cfg = NumericsConfig(n_nodes=31)
    e1, e2 = g_expectation(x1, g, cfg), g_expectation(x2, g, cfg)
    assert e1 <= g_expectation(x1.maximum(x2), g, cfg) + cfg.tol
    assert g_expectation(x1 + x2, g, cfg) <= e1 + e2 + 2 * cfg.tol
    el = g_expectation(x1.scale(lam), g, cfg)
    assert abs(el - lam * e1) <= 1e-12 * max(1.0, abs(el))
    assert g_expectation(CylinderFunctional.constant(c, (0.5, 1.0)), g, cfg) == c
