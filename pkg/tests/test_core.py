import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcalc.core import (
    CFLError,
    ConfigurationError,
    CylinderFunctional,
    EtaContext,
    NumericsConfig,
    SpaceGrid,
    StepProcess,
    SublinearGenerator,
    TerminalFunction,
    TimePartition,
    default_domain,
    eval_generator,
)

finite = st.floats(-50, 50, allow_nan=False)
nonneg = st.floats(0, 20, allow_nan=False)

GENS = [
    SublinearGenerator.standard(1, 2),
    SublinearGenerator.standard(0.25, 4),
    SublinearGenerator.standard(0, 3),
    SublinearGenerator.linear(),
    SublinearGenerator.eps_shrunk(1, 2, 0.5),
]


def test_generator_examples():
    g = SublinearGenerator.standard(1, 2)
    assert eval_generator(g, 2.0) == 2.0
    assert eval_generator(g, -2.0) == -1.0
    for gg in GENS:
        assert eval_generator(gg, 0.0) == 0.0
    ge = SublinearGenerator.eta_symmetrized(1, 2, 1.0)
    assert ge(0.0, EtaContext(0.0)) == pytest.approx(0.25)


def test_linear_is_half():
    a = np.linspace(-3, 3, 13)
    assert np.array_equal(SublinearGenerator.linear()(a), a / 2)


def test_eps_shrunk_bounds():
    g = SublinearGenerator.eps_shrunk(1, 2, 0.25)
    assert g.variance_bounds == (1.25, 1.75)
    assert g(1.0) == pytest.approx(0.875)
    assert g(-1.0) == pytest.approx(-0.625)


def test_invalid_generators():
    with pytest.raises(ConfigurationError):
        SublinearGenerator.standard(2, 1)
    with pytest.raises(ConfigurationError):
        SublinearGenerator.standard(-1, 1)
    with pytest.raises(ConfigurationError):
        SublinearGenerator.eps_shrunk(1, 2, 0.6)
    with pytest.raises(ConfigurationError):
        SublinearGenerator("bogus", 1, 1)


def test_eta_variant_needs_context():
    ge = SublinearGenerator.eta_symmetrized(1, 2, lambda t, x: t)
    with pytest.raises(ConfigurationError):
        ge(1.0)
    assert ge(0.0, EtaContext(2.0)) == pytest.approx(0.25 * 2 * 1.0)


def test_beta_gamma():
    g = SublinearGenerator.standard(1, 2)
    assert g.beta == 2.0
    assert g.gamma == pytest.approx(1 / 3)
    with pytest.raises(ConfigurationError):
        SublinearGenerator.standard(0, 1).gamma


@settings(max_examples=300, deadline=None)
@given(finite, finite, nonneg)
def test_sublinearity(a, b, lam):
    for g in GENS:
        assert g(a) <= g(a + abs(b)) + 1e-12
        assert g(a + b) <= g(a) + g(b) + 1e-12
        assert g(lam * a) == pytest.approx(lam * g(a), rel=1e-12, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(finite, st.floats(-10, 10, allow_nan=False), st.sampled_from([(1, 2), (0.25, 4), (0.5, 0.75)]),
       st.floats(0, 1))
def test_generator_chain(a, alpha, bounds, frac):
    lo, hi = bounds
    eps = frac * (hi - lo) / 2
    g = SublinearGenerator.standard(lo, hi)
    ge = SublinearGenerator.eps_shrunk(lo, hi, eps)
    g_alpha = SublinearGenerator.eta_symmetrized(lo, hi, alpha)(a, EtaContext(0.0))
    assert ge(a) <= g(a) + 1e-12
    assert ge(a) + 0.5 * eps * abs(alpha) <= g_alpha + 1e-9
    assert g_alpha <= g(a + g.gamma * abs(alpha)) + 1e-9


def test_space_grid():
    grid = SpaceGrid(-1, 1, 5)
    assert grid.dx == 0.5
    assert np.allclose(grid.nodes, [-1, -0.5, 0, 0.5, 1])
    with pytest.raises(ConfigurationError):
        SpaceGrid(1, -1, 5)
    with pytest.raises(ConfigurationError):
        SpaceGrid(0, 1, 2)
    g2 = SpaceGrid.from_spacing(0.0, 6.0, 0.01)
    assert g2.n_nodes == 1201 and g2.dx == pytest.approx(0.01)


@pytest.mark.parametrize("hi,T,center,expected", [(1, 1, 0, (-6, 6)), (4, 1, 0, (-12, 12)),
                                                  (1, 0.25, 1, (-2, 4))])
def test_default_domain(hi, T, center, expected):
    d = default_domain(SublinearGenerator.standard(min(hi, 1), hi), T, center)
    assert (d.x_min, d.x_max) == pytest.approx(expected)


def test_time_partition():
    p = TimePartition.uniform(1.0, 4)
    assert p.T == 1.0 and p.n_intervals == 4
    with pytest.raises(ConfigurationError):
        TimePartition((0.0, 0.5, 0.5))
    with pytest.raises(ConfigurationError):
        TimePartition((0.1, 0.5))


def test_terminal_growth():
    phi = TerminalFunction(lambda x: x**2, 2, 1.0)
    assert phi.check_growth(np.linspace(-10, 10, 101))
    assert not TerminalFunction(lambda x: x**3, 2, 1.0).check_growth(np.linspace(-10, 10, 101))


def test_cylinder_algebra():
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: a * b)
    other = CylinderFunctional((0.5, 1.0), lambda a, b: a + b)
    assert xi.arity == 2 and xi.T == 1.0
    assert float((xi + other)(2.0, 3.0)) == 11.0
    assert float((-xi)(2.0, 3.0)) == -6.0
    assert float(xi.scale(2.0)(1.0, 1.0)) == 2.0
    assert float(xi.maximum(other)(2.0, 3.0)) == 6.0
    assert float(CylinderFunctional.constant(3.0)(np.zeros(1))[0]) == 3.0
    with pytest.raises(ConfigurationError):
        xi + CylinderFunctional((1.0,), lambda a: a)
    with pytest.raises(ConfigurationError):
        CylinderFunctional((0.0, 1.0), lambda a, b: a)


def test_step_process():
    p = StepProcess(TimePartition((0.0, 0.5, 1.0)), (lambda: 1.0, lambda b1: np.sign(b1)), bound=1.0)
    assert p.interval_index(0.5) == 0  # left-open intervals
    assert p.interval_index(0.51) == 1
    assert float(p.value(0.7, [-2.0])) == -1.0
    assert p.check_bound([[0.3], [-4.0]])
    with pytest.raises(ValueError):
        p.interval_index(0.0)


def test_numerics_config_validation():
    with pytest.raises(ConfigurationError):
        NumericsConfig(cfl_safety=1.5)
    with pytest.raises(ConfigurationError):
        NumericsConfig(interpolation="cubic")


def test_cfl_error_carries_dt():
    err = CFLError("x", 0.25)
    assert err.admissible_dt == 0.25 and isinstance(err, ValueError)
    assert math.isfinite(err.admissible_dt)
