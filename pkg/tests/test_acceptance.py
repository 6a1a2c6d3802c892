"""Acceptance criteria, one test each, at the stated tolerances.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math

import numpy as np
import pytest

from gcalc import verify
from gcalc.cli import main
from gcalc.core import CylinderFunctional, SpaceGrid, SublinearGenerator
from gcalc.cylinder import g_mean_bounds
from gcalc.gheat import solve_backward

CTX = verify.VerifyContext(seed=0, workers=1)
G12 = SublinearGenerator.standard(1.0, 2.0)


def _terms(res):
    return {k: v for k, (v, _) in res.terms.items()}


@pytest.mark.criterion(1, "linear-case exactness and first-order convergence in dx^2")
def test_linear_case_exactness():
    g = SublinearGenerator.linear()
    errs = []
    # dt / dx^2 = 0.4 at both resolutions
    for n_nodes, n_steps in ((1201, 25000), (2401, 100000)):  # dx = 0.01, 0.005
        grid = SpaceGrid(-6.0, 6.0, n_nodes)
        s = solve_backward(g, np.cos, grid, n_steps, store_every=25000)
        errs.append(abs(s.u0() - math.exp(-0.5)))
    print(f"errors {errs}, ratio {errs[0] / errs[1]:.3f}")
    assert errs[0] <= 1e-3
    assert errs[0] / errs[1] >= 3.0


@pytest.mark.criterion(2, "volatility bounds as expectations of B_1^2")
@pytest.mark.parametrize("lo,hi", [(1.0, 2.0), (0.25, 4.0)])
def test_volatility_bounds(lo, hi):
    g = SublinearGenerator.standard(lo, hi)
    lower, upper = g_mean_bounds(CylinderFunctional((1.0,), lambda x: x**2), g)
    assert upper == pytest.approx(hi, abs=1e-2)
    assert lower == pytest.approx(lo, abs=1e-2)


@pytest.mark.criterion(3, "sublinear expectation axioms over 200 random cylinder pairs")
def test_axiom_suite():
    res = verify.check_axioms(CTX, n_pairs=200)
    t = _terms(res)
    print(t)
    assert t["pairs"] == 200
    assert t["monotone_violation"] <= CTX.tol
    assert t["subadditive_violation"] <= 2 * CTX.tol
    assert t["homogeneity_rel_error"] <= 1e-12
    assert t["constant_error"] == 0.0
    assert res.passed


@pytest.mark.criterion(4, "Q^n derivatives exact and H-norm of D_x Q^n decreasing to <= 0.1")
def test_qn_reproduction():
    res = verify.check_qn(CTX, levels=(2, 3, 4, 5, 6, 7, 8, 9, 10))
    t = _terms(res)
    norms = [t[f"h_norm_sq_n{n}"] for n in range(2, 11)]
    print(norms)
    assert t["max_abs_dt"] == 0.0
    assert t["max_abs_dxx_minus_2"] == 0.0
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] <= 0.1
    assert res.passed


@pytest.mark.criterion(5, "G-Ito residual RMS halves (+-30%) when dt is quartered")
def test_ito_residual_scaling():
    res = verify.check_ito_scaling(CTX)
    ratios = _terms(res)
    print(ratios)
    assert len(ratios) == 6
    for r in ratios.values():
        assert 0.35 <= r <= 0.65
    assert res.passed


@pytest.mark.criterion(6, "discrete BSDE backward identity residual and Y_0 extraction")
def test_bsde_correspondence():
    res = verify.check_bsde_correspondence(CTX)
    t = _terms(res)
    print(t)
    for name in ("zero", "discount", "drift"):
        cs = [t[f"{name}_c_dt{k}"] for k in (8, 10, 12)]
        assert cs[0] > cs[1] > cs[2]
        assert t[f"{name}_y0_error"] <= 1e-3
    assert res.passed


@pytest.mark.criterion(7, "K-process contract for f = 0, phi = x^2")
def test_k_contract():
    res = verify.check_k_contract(CTX)
    t = _terms(res)
    print(t)
    assert t["k0_abs"] == 0.0
    assert t["max_k_increase"] <= 1e-10
    bound = 3 * math.sqrt(2) * G12.sigma_high_sq
    for k in (8, 10, 12):
        assert t[f"gap_c_dt{k}"] <= bound
    assert res.passed


@pytest.mark.criterion(8, "G-martingale check passes for M and fails for a decreasing process")
def test_g_martingale_checks():
    res = verify.check_g_martingales(CTX)
    t = _terms(res)
    print(t)
    assert t["example1_m"] <= 5e-3
    assert t["decreasing_process"] == pytest.approx(0.01, abs=1e-9)
    assert res.passed


@pytest.mark.criterion(9, "worked example values reproduced by both routes")
def test_example_oracles():
    ex1, ex2, ex3, _ = verify.check_examples(CTX)
    assert ex1.value("closed_form") == pytest.approx(1.0)
    assert ex2.value("closed_form") == pytest.approx(0.25)
    assert ex3.value("closed_form") == pytest.approx(0.5)
    for r in (ex1, ex2, ex3):
        print(r.check, r.terms)
        assert r.passed


@pytest.mark.criterion(10, "corollary chain values and grid-wide inequalities")
def test_corollary_chain():
    cor = verify.check_examples(CTX)[3]
    assert cor.value("left") == pytest.approx(2 / 3)
    assert cor.value("middle") == pytest.approx(0.5, abs=3 * cor.terms["middle"][1] + 1e-12)
    assert cor.value("right") == pytest.approx(0.5)
    assert cor.passed
    grid = verify.check_example_grid(CTX)
    print(_terms(grid))
    assert grid.value("failures") == 0 and grid.passed


@pytest.mark.criterion(11, "scenario MC is a lower bound and the convex gap is <= 1%")
def test_mc_lower_bound():
    res = verify.check_mc_lower_bound(CTX)
    for name in verify.MARKOV_PAYOFFS:
        est, se = res.terms[f"{name}_mc"]
        assert est <= res.value(f"{name}_pde") + 3 * se, name
    print("convex gap", res.value("convex_relative_gap"))
    assert res.value("convex_relative_gap") <= 0.01
    assert res.passed


@pytest.mark.criterion(12, "verify reports are byte-identical across worker counts")
def test_verify_reproducible(tmp_path, capsys):
    outs = []
    for w in (1, 4):
        p = tmp_path / f"verify_w{w}.csv"
        code = main(["verify", "--seed", "0", "--workers", str(w), "--out", str(p)])
        out = capsys.readouterr().out
        assert code == 0, out
        n_checks = int(out.split("checks=")[1].split()[0])
        assert n_checks >= 20
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
