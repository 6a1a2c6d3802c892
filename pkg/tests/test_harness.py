import pytest

from gcalc.core import SublinearGenerator
from gcalc.harness import (
    CheckResult,
    VerificationFailure,
    corollary_check,
    example1_value,
    example2_value,
    example3_value,
    finite_n_value,
)
from gcalc.scenarios import McConfig

G12 = SublinearGenerator.standard(1, 2)
GRID = [(1.0, 1.0), (1.0, 2.0), (0.25, 4.0)]


@pytest.mark.parametrize("eta,T,expected", [(1.0, 1.0, 1.0), (0.0, 1.0, 0.0), (2.0, 0.5, 1.0)])
def test_example1(eta, T, expected):
    r = example1_value(eta, G12, T)
    assert r.passed
    assert r.value("closed_form") == pytest.approx(expected)
    assert r.value("scenario_sup") == pytest.approx(expected, abs=1e-12)
    assert r.value("pde") == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("eta,bounds,expected", [(1.0, (1, 2), 0.25), (0.0, (1, 2), 0.0), (1.0, (1, 1), 0.0)])
def test_example2(eta, bounds, expected):
    r = example2_value(eta, SublinearGenerator.standard(*bounds), 1.0, (2, 4, 8))
    assert r.passed
    for name in ("pde", "closed_form", "scenario_n2", "scenario_n8"):
        assert r.value(name) == pytest.approx(expected, abs=1e-8)


def test_example2_odd_levels_carry_correction():
    r = example2_value(1.0, G12, 1.0, (3, 5))
    assert r.passed
    for n in (3, 5):
        extra = (2.0 + 1.0) * 1.0 / (4 * n)
        assert finite_n_value(1.0, G12, 1.0, n) == pytest.approx(0.25 + extra)
        assert r.value(f"scenario_n{n}") == pytest.approx(0.25 + extra)


@pytest.mark.parametrize("eta,eps,T,expected", [(1.0, 0.5, 1.0, 0.5), (1.0, 0.1, 1.0, 0.5),
                                                (0.0, 0.3, 1.0, 0.0), (3.0, 0.2, 2.0, 3.0)])
def test_example3(eta, eps, T, expected):
    r = example3_value(eta, eps, G12, T)
    assert r.passed
    assert r.value("pde") == pytest.approx(expected, abs=1e-8)
    assert r.value("scenario_sup") == pytest.approx(expected, abs=1e-12)


def test_corollary_reference_values():
    r = corollary_check(1.0, G12, 0.5)
    assert r.passed
    assert (r.value("left"), r.value("middle"), r.value("right")) == pytest.approx((2 / 3, 0.5, 0.5))
    z = corollary_check(0.0, G12, 0.5)
    assert z.passed and all(abs(v) < 1e-12 for v, _ in z.terms.values())
    e0 = corollary_check(2.0, G12, 0.0)
    assert e0.passed and e0.value("right") == 0.0


@pytest.mark.parametrize("bounds", GRID)
@pytest.mark.parametrize("eta", [0.0, 1.0, 2.0])
def test_routes_agree_on_grid(bounds, eta):
    lo, hi = bounds
    g = SublinearGenerator.standard(lo, hi)
    mc = McConfig(n_paths=10**4, dt=1.0, seed=1)
    assert example1_value(eta, g, 1.0, mc).passed
    assert example2_value(eta, g, 1.0, (2, 4), mc).passed
    assert example3_value(eta, (hi - lo) / 2, g, 1.0, mc).passed
    for eps in (0.0, (hi - lo) / 4, (hi - lo) / 2):
        assert corollary_check(eta, g, eps, 4, 1.0, mc).passed


def test_check_result_rows_and_failure():
    r = CheckResult("demo")
    r.add("a", 1.0, 0.1)
    assert list(r.rows()) == [("demo", "a", 1.0, 0.1, "pass")]
    r.passed = False
    assert list(r.rows())[0][-1] == "fail"
    with pytest.raises(VerificationFailure):
        r.raise_if_failed()
