import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcalc.core import ConfigurationError, SpaceGrid, SublinearGenerator
from gcalc.gbsde import (
    UnsupportedModeError,
    backward_identity_residual,
    check_g_martingale,
    example1_m_increment,
    extract_bsde_processes,
    k_increment,
    k_process_increment,
    pde_residual,
    rms,
    solve_markovian_gbsde,
    solve_wiener_bsde,
    surface_increment,
)
from gcalc.gheat import MarkovDriver, steps_for
from gcalc.scenarios import McConfig, Scenario, simulate

G12 = SublinearGenerator.standard(1, 2)
LIN = SublinearGenerator.linear()
SQ = lambda x: x**2  # noqa: E731


def surface(g, driver=None, dx=0.05, levels=256, phi=SQ):
    grid = SpaceGrid.from_spacing(0.0, 6 * math.sqrt(g.sigma_high_sq), dx)
    n = steps_for(g, grid.dx, 1.0, driver, 0.9, levels)
    return solve_markovian_gbsde(g, driver, phi, grid, n, 1.0, store_every=n // levels)


@pytest.fixture(scope="module")
def sq_surface():
    return surface(G12)


def test_zero_driver(sq_surface):
    assert sq_surface.u0() == pytest.approx(2.0, abs=5e-3)


def test_discount_driver():
    drv = MarkovDriver(lambda t, x, y, z, w: -0.05 * y, lipschitz_y=0.05)
    assert surface(G12, drv).u0() == pytest.approx(2 * math.exp(-0.05), abs=1e-2)


def test_drift_driver():
    drv = MarkovDriver(lambda t, x, y, z, w: 1.0 * z, lipschitz_z=1.0)
    s = surface(LIN, drv, dx=0.02)
    assert s.u0() == pytest.approx(2.0, abs=1e-2)
    # closed form (x + (T - t))^2 + (T - t) away from the boundary
    assert s.at(0.5, 0.3) == pytest.approx((0.3 + 0.5) ** 2 + 0.5, abs=1e-2)


def test_pde_residual_small(sq_surface):
    # boundary closure error leaks in slowly; the centre stays close to the exact solution
    assert pde_residual(sq_surface, G12, interior_fraction=0.5) <= 1e-4


def test_extraction_square(sq_surface):
    for sc in (Scenario.constant(1.0), Scenario.switch(2.0, 1.0, 0.5)):
        batch = simulate(sc, 1.0, McConfig(50, 2.0**-6, seed=1))
        sol = extract_bsde_processes(sq_surface, batch, G12)
        assert np.allclose(sol.eta, 2.0, atol=1e-6)
        assert np.all(sol.k_strong[:, 0] == 0)
        assert np.allclose(sol.k_strong, batch.qv - 2.0 * batch.times, atol=1e-5)
        assert sol.max_k_increase() <= 1e-10
        assert np.allclose(sol.y[:, -1], batch.b[:, -1] ** 2, atol=1e-2)
    hi = simulate(Scenario.constant(2.0), 1.0, McConfig(20, 2.0**-6, seed=1))
    assert np.max(np.abs(extract_bsde_processes(sq_surface, hi, G12).k_strong)) <= 1e-10


def test_weak_and_strong_forms_close(sq_surface):
    gaps = []
    for dt in (2.0**-6, 2.0**-8):
        batch = simulate(Scenario.constant(1.5), 1.0, McConfig(100, dt, seed=2))
        sol = extract_bsde_processes(sq_surface, batch, G12)
        gaps.append(rms(sol.k_strong - sol.k_weak))
    assert gaps[1] < gaps[0]
    assert gaps[1] <= 3 * math.sqrt(2) * 2.0 * math.sqrt(2.0**-8)


@pytest.mark.parametrize("sigma_sq", [1.0, 2.0])
def test_form_gap_constant_matches_oracle(sq_surface, sigma_sq):
    # per step the gap is eta/2 (dB^2 - sigma^2 dt), a martingale increment, so
    # RMS over the time grid is c sqrt(dt) with c = |eta| sigma^2 sqrt(T) / 2
    oracle = 2.0 * sigma_sq / 2
    for dt in (2.0**-6, 2.0**-8):
        batch = simulate(Scenario.constant(sigma_sq), 1.0, McConfig(2000, dt, seed=4))
        sol = extract_bsde_processes(sq_surface, batch, G12)
        c = rms(sol.k_strong - sol.k_weak) / math.sqrt(dt)
        assert c == pytest.approx(oracle, rel=0.1)


def test_backward_identity_residual_shrinks(sq_surface):
    cs = []
    for dt in (2.0**-4, 2.0**-6, 2.0**-8):
        batch = simulate(Scenario.switch(1.0, 2.0, 0.5), 1.0, McConfig(100, dt, seed=3))
        sol = extract_bsde_processes(sq_surface, batch, G12)
        cs.append(rms(backward_identity_residual(sol, batch)) / math.sqrt(dt))
    assert cs[0] > cs[1] > cs[2]


def test_weak_form_rejected_for_eta_driver(sq_surface):
    drv = MarkovDriver(lambda t, x, y, z, w: 0.1 * w, lipschitz_w=0.1)
    batch = simulate(Scenario.constant(1.0), 1.0, McConfig(3, 0.25, seed=0))
    with pytest.raises(UnsupportedModeError):
        extract_bsde_processes(sq_surface, batch, G12, drv, weak=True)
    assert extract_bsde_processes(sq_surface, batch, G12, drv).k_weak is None


def test_bsde_csv(sq_surface):
    batch = simulate(Scenario.constant(1.0), 1.0, McConfig(2, 0.5, seed=0))
    buf = io.StringIO()
    extract_bsde_processes(sq_surface, batch, G12).to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "path_id,t,y,z,eta,k_strong,k_weak"
    assert len(lines) == 1 + 2 * 3
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "0", "0", "1", "1", "1"]


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10), st.floats(0, 1), st.sampled_from([(1, 2), (0.25, 4), (1, 1)]))
def test_k_increment_nonpositive(eta, frac, bounds):
    g = SublinearGenerator.standard(*bounds)
    lo, hi = bounds
    dt = 0.01
    dqv = (lo + frac * (hi - lo)) * dt
    assert k_increment(g, eta, dqv, dt) <= 0.0


# Wiener case -------------------------------------------------------------------


def test_wiener_examples():
    grid = SpaceGrid.from_spacing(0.0, 6.0, 0.02)
    assert solve_wiener_bsde(None, np.cos, grid).u0() == pytest.approx(math.exp(-0.5), abs=1e-3)
    disc = solve_wiener_bsde(lambda t, x, y, z: -y, lambda x: np.ones_like(x), grid)
    assert disc.u0() == pytest.approx(math.exp(-1), abs=1e-3)
    lin = solve_wiener_bsde(None, lambda x: x, grid)
    batch = simulate(Scenario.constant(1.0), 1.0, McConfig(10, 2.0**-5, seed=4))
    sol = extract_bsde_processes(lin, batch, LIN)
    assert np.allclose(sol.z, 1.0) and np.allclose(sol.y, batch.b)
    assert np.allclose(sol.k_strong, 0.0)


def test_wiener_rejects_nonlinear_generator():
    with pytest.raises(ConfigurationError):
        solve_wiener_bsde(None, np.cos, SpaceGrid(-6, 6, 121), g=G12)


def test_wiener_k_small():
    grid = SpaceGrid.from_spacing(0.0, 6.0, 0.05)
    s = solve_wiener_bsde(None, np.cos, grid, n_steps=None)
    dt = 2.0**-8
    batch = simulate(Scenario.constant(1.0), 1.0, McConfig(50, dt, seed=5))
    sol = extract_bsde_processes(s, batch, LIN)
    assert np.max(np.abs(sol.k_strong)) <= math.sqrt(dt)


# G-martingales -----------------------------------------------------------------

PROBES = [(t, x) for t in (0.0, 0.3, 0.6) for x in np.linspace(-1.5, 1.5, 7)]


def test_example1_m_is_g_martingale():
    rep = check_g_martingale(example1_m_increment(1.0, G12, 0.01), G12, PROBES, 0.01)
    assert len(rep.probes) == 21 and rep.passed and rep.max_abs <= 5e-3


def test_k_process_signature():
    rep = check_g_martingale(k_process_increment(2.0, G12, 0.01), G12, PROBES, 0.01)
    assert rep.passed
    y = np.linspace(-1, 1, 11)
    assert np.all(k_process_increment(2.0, G12, 0.01)(0.0, 0.0, 0.0 * y) <= 0)


def test_decreasing_process_fails():
    dt = 0.01
    rep = check_g_martingale(lambda t, x, y: -dt * np.ones_like(y), G12, PROBES, dt, tol=dt / 2)
    assert not rep.passed and rep.max_abs == pytest.approx(dt, abs=1e-12)


def test_y_process_is_g_martingale(sq_surface):
    rep = check_g_martingale(surface_increment(sq_surface, 0.01), G12, PROBES[:7], 0.01)
    assert rep.passed
