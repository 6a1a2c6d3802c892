"""The verification suite: invariant and oracle checks across all modules.

Each check returns a :class:`CheckResult`.  Everything is seeded, so a run
is a pure function of ``(seed, tol)``; ``workers`` only changes how paths
are scheduled, never the numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    CylinderFunctional,
    EtaContext,
    NumericsConfig,
    SpaceGrid,
    SublinearGenerator,
    default_domain,
)
from .csvio import write_rows
from .cylinder import conditional_g_expectation, g_expectation, g_mean_bounds, parameter_axes
from .gbsde import (
    backward_identity_residual,
    check_g_martingale,
    example1_m_increment,
    extract_bsde_processes,
    k_process_increment,
    rms,
    solve_markovian_gbsde,
    solve_wiener_bsde,
    surface_increment,
)
from .gheat import MarkovDriver, backward_sweep, linear_heat_reference, solve_backward, steps_for
from .harness import CheckResult, corollary_check, example1_value, example2_value, example3_value
from .pathcalc import along_path, ito_residual, polynomial_process, qn_process
from .scenarios import (
    McConfig,
    Scenario,
    default_family,
    estimate_expectation_lower,
    norm_h,
    sample_mean,
    simulate,
)

REPORT_HEADER = ("check", "term", "value", "stderr", "status")


@dataclass(frozen=True)
class VerifyContext:
    seed: int = 0
    workers: int = 1
    tol: float = 1e-8

    def mc(self, n_paths, dt, offset=0, confidence=3.0) -> McConfig:
        return McConfig(n_paths, dt, self.seed + offset, confidence, self.workers)


G12 = SublinearGenerator.standard(1.0, 2.0)
G_GRID = ((1.0, 1.0), (1.0, 2.0), (0.25, 4.0))


def _result(name, ok, **terms) -> CheckResult:
    res = CheckResult(name)
    for k, v in terms.items():
        if isinstance(v, tuple):
            res.add(k, *v)
        else:
            res.add(k, v)
    res.passed = bool(ok)
    return res


def _solve_u0(g, phi, dx=0.01, T=1.0, half=None, driver=None):
    half = half if half is not None else 6.0 * math.sqrt(g.sigma_high_sq * T)
    grid = SpaceGrid.from_spacing(0.0, half, dx)
    n = steps_for(g, grid.dx, T, driver, 0.9)
    u = backward_sweep(np.asarray(phi(grid.nodes), dtype=float) * np.ones(grid.n_nodes), g,
                       grid.nodes, 0.0, T, n, driver)
    return float(u[grid.n_nodes // 2])


# --------------------------------------------------------------------------
# core
# --------------------------------------------------------------------------


def check_generator_properties(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng(ctx.seed)
    n = 10**4
    a, b = rng.normal(0, 3, n), rng.normal(0, 3, n)
    lam = rng.exponential(2.0, n)
    worst_mono = worst_sub = worst_hom = worst_zero = 0.0
    gens = [SublinearGenerator.standard(1, 2), SublinearGenerator.standard(0.25, 4),
            SublinearGenerator.linear(), SublinearGenerator.eps_shrunk(1, 2, 0.25),
            SublinearGenerator.standard(0, 1)]
    step = np.abs(rng.normal(0, 1, n))
    for g in gens:
        worst_mono = max(worst_mono, float(np.max(g(a) - g(a + step))))
        worst_sub = max(worst_sub, float(np.max(g(a + b) - g(a) - g(b))))
        worst_hom = max(worst_hom, float(np.max(np.abs(g(lam * a) - lam * g(a)))))
        worst_zero = max(worst_zero, abs(g(0.0)))
    # the eta-symmetrised variant is monotone but not sublinear (G^eta(0) > 0)
    ge = SublinearGenerator.eta_symmetrized(1, 2, 1.0)
    c0 = EtaContext(0.0, 0.0)
    worst_mono = max(worst_mono, float(np.max(ge(a, c0) - ge(a + step, c0))))
    ok = worst_mono <= 0 and worst_sub <= 1e-12 and worst_hom <= 1e-12 and worst_zero == 0
    return _result("generator_properties", ok, monotone_violation=worst_mono,
                   subadditive_violation=worst_sub, homogeneity_error=worst_hom, g_at_zero=worst_zero)


def check_generator_chain(ctx: VerifyContext) -> CheckResult:
    rng = np.random.default_rng(ctx.seed + 1)
    worst = 0.0
    for lo, hi in ((1.0, 2.0), (0.25, 4.0), (0.5, 0.75)):
        g = SublinearGenerator.standard(lo, hi)
        gam = g.gamma
        a = rng.normal(0, 3, 2000)
        alpha = rng.normal(0, 2, 2000)
        for eps in np.linspace(0, (hi - lo) / 2, 4):
            ge = SublinearGenerator.eps_shrunk(lo, hi, eps)
            ga = 0.5 * (g(a + alpha) + g(a - alpha))
            worst = max(worst, float(np.max(ge(a) - g(a))),
                        float(np.max(ge(a) + 0.5 * eps * np.abs(alpha) - ga)),
                        float(np.max(ga - g(a + gam * np.abs(alpha)))))
    return _result("generator_chain", worst <= 1e-12, max_violation=worst)


def check_default_domain(ctx: VerifyContext) -> CheckResult:
    d1 = default_domain(SublinearGenerator.standard(1, 1), 1.0)
    d2 = default_domain(SublinearGenerator.standard(1, 4), 1.0)
    d3 = default_domain(SublinearGenerator.standard(1, 1), 0.25, center=1.0)
    ok = (d1.x_min, d1.x_max) == (-6, 6) and (d2.x_min, d2.x_max) == (-12, 12) \
        and (d3.x_min, d3.x_max) == (-2, 4)
    return _result("default_domain", ok, half_width_1=d1.x_max, half_width_4=d2.x_max, shifted_min=d3.x_min)


# --------------------------------------------------------------------------
# gheat
# --------------------------------------------------------------------------


def check_heat_linear_cos(ctx: VerifyContext) -> CheckResult:
    g = SublinearGenerator.linear()
    exact = math.exp(-0.5)
    e1 = abs(_solve_u0(g, np.cos, 0.01, half=6.0) - exact)
    e2 = abs(_solve_u0(g, np.cos, 0.005, half=6.0) - exact)
    return _result("heat_linear_cos", e1 <= 1e-3 and e1 / e2 >= 3.0, error_dx_0_01=e1,
                   error_dx_0_005=e2, ratio=e1 / e2)


def check_heat_quadratic(ctx: VerifyContext) -> CheckResult:
    sq = lambda x: x**2  # noqa: E731
    lin = _solve_u0(SublinearGenerator.linear(), sq, 0.05)
    g12 = _solve_u0(G12, sq, 0.05)
    oracle = _solve_u0(SublinearGenerator.standard(2, 2), sq, 0.05)
    ok = abs(lin - 1.0) <= 5e-3 and abs(g12 - 2.0) <= 5e-3 and abs(g12 - oracle) <= 1e-9
    return _result("heat_quadratic", ok, linear=lin, standard_1_2=g12, sigma_high_heat=oracle)


def check_heat_structure(ctx: VerifyContext) -> CheckResult:
    """Constant preservation, comparison, sublinearity and homogeneity of the solution map."""
    g = G12
    grid = default_domain(g, 1.0, n_nodes=241)
    x = grid.nodes
    n = steps_for(g, grid.dx, 1.0)
    rng = np.random.default_rng(ctx.seed + 2)
    const_err = mono = sub = hom = 0.0
    for _ in range(8):
        c = rng.normal()
        s = solve_backward(g, lambda y: np.full_like(y, c), grid, n, store_every=1)
        const_err = max(const_err, float(np.max(np.abs(s.values - c))))
        p1 = np.sin(rng.normal() * x) + rng.normal() * np.abs(x - rng.normal())
        p2 = rng.normal() * np.cos(x) * x
        bump = np.abs(rng.normal(size=x.shape))
        u1, u2, u12 = (backward_sweep(p, g, x, 0, 1, n) for p in (p1, p1 + bump, p1 + p2))
        uu2 = backward_sweep(p2, g, x, 0, 1, n)
        lam = rng.exponential()
        ul = backward_sweep(lam * p1, g, x, 0, 1, n)
        mid = grid.n_nodes // 2
        mono = max(mono, float(np.max(u1 - u2)))
        sub = max(sub, float(u12[mid] - u1[mid] - uu2[mid]))
        hom = max(hom, abs(ul[mid] - lam * u1[mid]) / max(1.0, abs(ul[mid])))
    ok = const_err == 0 and mono <= 0 and sub <= 2 * ctx.tol and hom <= 1e-12
    return _result("heat_structure", ok, constant_error=const_err, comparison_violation=mono,
                   subadditivity_violation=sub, homogeneity_rel_error=hom)


def check_heat_reference(ctx: VerifyContext) -> CheckResult:
    g = SublinearGenerator.linear()
    worst = 0.0
    phis = (lambda y: np.exp(-y**2) * np.cos(2 * y), lambda y: np.sin(y) * np.exp(-y**2 / 8),
            lambda y: np.cos(y) + 0.3 * np.sin(2 * y))
    grid = default_domain(g, 1.0, n_nodes=401)
    for phi in phis:
        s = solve_backward(g, phi, grid, cfl_safety=0.9, store_every=1)
        xs = grid.nodes[(np.abs(grid.nodes) <= 2.0)]
        ref = linear_heat_reference(phi, 1.0, xs)
        worst = max(worst, float(np.max(np.abs(s.at(0.0, xs) - ref))))
    return _result("heat_gauss_hermite", worst <= 2e-3, max_abs_diff=worst)


# --------------------------------------------------------------------------
# cylinder
# --------------------------------------------------------------------------


def check_g_expectation_bounds(ctx: VerifyContext) -> CheckResult:
    res = CheckResult("g_expectation_bounds")
    ok = True
    for lo, hi in ((1.0, 2.0), (0.25, 4.0)):
        g = SublinearGenerator.standard(lo, hi)
        low, up = g_mean_bounds(CylinderFunctional((1.0,), lambda x: x**2), g)
        res.add(f"upper_{lo:g}_{hi:g}", up)
        res.add(f"lower_{lo:g}_{hi:g}", low)
        ok &= abs(up - hi) <= 1e-2 and abs(low - lo) <= 1e-2
    lo_b, up_b = g_mean_bounds(CylinderFunctional((1.0,), lambda x: x), G12)
    res.add("linear_payoff_upper", up_b)
    res.add("linear_payoff_lower", lo_b)
    ok &= abs(up_b) <= 1e-2 and abs(lo_b) <= 1e-2
    res.passed = bool(ok)
    return res


def check_g_expectation_increment(ctx: VerifyContext) -> CheckResult:
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: (b - a) ** 2)
    v = g_expectation(xi, G12)
    oracle = _solve_u0(G12, lambda y: y**2, 0.05, T=0.5)
    return _result("g_expectation_increment", abs(v - 1.0) <= 1e-2, value=v, one_interval=oracle)


def check_conditional(ctx: VerifyContext) -> CheckResult:
    xi = CylinderFunctional((1.0,), lambda b: b**2)
    res = CheckResult("conditional_g_expectation")
    ok = True
    for b in (0.0, 1.0):
        v = conditional_g_expectation(xi, 0.5, {0.5: b}, G12)
        res.add(f"b_{b:g}", v)
        ok &= abs(v - (b * b + 2.0 * 0.5)) <= 1e-2
    v0 = conditional_g_expectation(xi, 0.0, {}, G12)
    full = g_expectation(xi, G12)
    res.add("t0_minus_full", v0 - full)
    ok &= abs(v0 - full) <= 1e-12
    res.passed = bool(ok)
    return res


def check_tower(ctx: VerifyContext) -> CheckResult:
    cfg = NumericsConfig(n_nodes=81)
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: np.abs(b - 0.3 * a) - 0.5 * np.cos(a))
    full = g_expectation(xi, G12, cfg)
    ax = parameter_axes(xi, G12, cfg)[0]
    inner = np.array([conditional_g_expectation(xi, 0.5, {0.5: x1}, G12, cfg) for x1 in ax.nodes])
    n = steps_for(G12, ax.dx, 0.5, safety=cfg.cfl_safety)
    outer = backward_sweep(inner, G12, ax.nodes, 0.0, 0.5, n)
    nested = float(outer[ax.n_nodes // 2])
    return _result("tower_property", abs(full - nested) <= 2 * cfg.tol, direct=full, nested=nested)


def check_linear_cylinder(ctx: VerifyContext) -> CheckResult:
    g = SublinearGenerator.linear()
    xi = CylinderFunctional((0.5, 1.0), lambda a, b: np.cos(a) * np.sin(b) + a * b + np.cos(b))
    v = g_expectation(xi, g, NumericsConfig(n_nodes=241))
    y, w = np.polynomial.hermite_e.hermegauss(60)
    w = w / w.sum()
    a = math.sqrt(0.5) * y[:, None]
    b = a + math.sqrt(0.5) * y[None, :]
    ref = float((w[:, None] * w[None, :] * xi(a, b)).sum())
    return _result("linear_cylinder_quadrature", abs(v - ref) <= 2e-3, pde=v, quadrature=ref)


def check_axioms(ctx: VerifyContext, n_pairs: int = 200) -> CheckResult:
    """Sublinear-expectation axioms over random polynomial cylinder pairs."""
    rng = np.random.default_rng(ctx.seed + 3)
    cfg = NumericsConfig(n_nodes=41, tol=ctx.tol)
    mono = sub = hom = const = 0.0
    for i in range(n_pairs):
        lo = rng.uniform(0.2, 1.0)
        g = SublinearGenerator.standard(lo, lo + rng.uniform(0.0, 1.5))
        arity = 1 + i % 2
        times = (1.0,) if arity == 1 else (0.5, 1.0)
        c1 = rng.normal(0, 0.3, (5, 5) if arity == 2 else 5)
        c2 = rng.normal(0, 0.3, c1.shape)

        def poly(c):
            if c.ndim == 1:
                return lambda a: np.polynomial.polynomial.polyval(a, c)
            cc = np.triu(c[::-1])[::-1]  # total degree <= 4
            return lambda a, b: np.polynomial.polynomial.polyval2d(a, b, cc)

        x1 = CylinderFunctional(times, poly(c1))
        x2 = CylinderFunctional(times, poly(c2))
        bigger = x1.maximum(x2)
        lam = rng.exponential()
        e1, e2 = g_expectation(x1, g, cfg), g_expectation(x2, g, cfg)
        mono = max(mono, e1 - g_expectation(bigger, g, cfg))
        sub = max(sub, g_expectation(x1 + x2, g, cfg) - e1 - e2)
        el = g_expectation(x1.scale(lam), g, cfg)
        hom = max(hom, abs(el - lam * e1) / max(1.0, abs(el)))
        c = float(rng.normal())
        const = max(const, abs(g_expectation(CylinderFunctional.constant(c, times), g, cfg) - c))
    ok = mono <= cfg.tol and sub <= 2 * cfg.tol and hom <= 1e-12 and const == 0
    return _result("expectation_axioms", ok, monotone_violation=mono, subadditive_violation=sub,
                   homogeneity_rel_error=hom, constant_error=const, pairs=n_pairs)


# --------------------------------------------------------------------------
# pathcalc
# --------------------------------------------------------------------------


def check_qn(ctx: VerifyContext, levels: Sequence[int] = (2, 4, 6, 8, 10)) -> CheckResult:
    res = CheckResult("qn_derivatives")
    mc = ctx.mc(200, 2.0**-12, offset=4)
    batch = simulate(Scenario.constant(2.0), 1.0, mc)
    fam = [Scenario.constant(s) for s in (1.0, 1.5, 2.0)]
    worst_dt = worst_dxx = 0.0
    norms = []
    for n in levels:
        q = qn_process(n, validate=(n <= 6))
        ev = along_path(q, batch, ("dt", "dxx"))
        worst_dt = max(worst_dt, float(np.max(np.abs(ev["dt"]))))
        worst_dxx = max(worst_dxx, float(np.max(np.abs(ev["dxx"] - 2.0))))
        est = norm_h(lambda b, q=q: along_path(q, b, ("dx",))["dx"][:, :-1], 2.0, G12, 1.0,
                     ctx.mc(200, 2.0**-12, offset=5), fam)
        norms.append(est.estimate)
        res.add(f"h_norm_sq_n{n}", est.estimate, est.stderr)
    res.add("max_abs_dt", worst_dt)
    res.add("max_abs_dxx_minus_2", worst_dxx)
    decreasing = all(b < a for a, b in zip(norms, norms[1:]))
    res.passed = bool(worst_dt == 0 and worst_dxx == 0 and decreasing and norms[-1] <= 0.1)
    return res


def _ito_processes():
    sq = polynomial_process([[0, 0, 1]])
    cubic = polynomial_process([[0, 0, 0, 1], [0, 1, 0, 0]])  # x^3 + t x
    return {"x2": sq, "x3_plus_tx": cubic}


def check_ito_scaling(ctx: VerifyContext) -> CheckResult:
    res = CheckResult("ito_residual_scaling")
    ok = True
    controls = (Scenario.constant(1.0), Scenario.constant(2.0), Scenario.switch(1.0, 2.0, 0.5))
    for name, u in _ito_processes().items():
        for sc in controls:
            r1 = rms(ito_residual(u, simulate(sc, 1.0, ctx.mc(1000, 2.0**-6, offset=6))))
            r2 = rms(ito_residual(u, simulate(sc, 1.0, ctx.mc(1000, 2.0**-8, offset=6))))
            ratio = r2 / r1
            res.add(f"{name}_{sc.label}_ratio", ratio)
            ok &= 0.35 <= ratio <= 0.65
    res.passed = bool(ok)
    return res


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------


def check_simulation(ctx: VerifyContext) -> CheckResult:
    b = simulate(Scenario.constant(1.0), 1.0, ctx.mc(10**5, 0.25, offset=7))
    bt = b.b[:, -1]
    m, _ = sample_mean(bt)
    var = float(np.mean((bt - m) ** 2) * len(bt) / (len(bt) - 1))
    hi = simulate(Scenario.constant(2.0), 1.0, ctx.mc(10, 2.0**-6, offset=7))
    qv_err = float(np.max(np.abs(hi.qv - 2.0 * hi.times)))
    return _result("simulation", abs(var - 1.0) <= 0.02 and qv_err <= 1e-12, var_bt=var,
                   qv_max_error=qv_err)


MARKOV_PAYOFFS = {
    "square": lambda x: x**2,
    "neg_square": lambda x: -(x**2),
    "call": lambda x: np.maximum(x - 0.5, 0.0),
    "put": lambda x: np.maximum(-0.5 - x, 0.0),
    "butterfly": lambda x: np.maximum(x + 1, 0) - 2 * np.maximum(x, 0) + np.maximum(x - 1, 0),
    "cos": np.cos,
}


def check_mc_lower_bound(ctx: VerifyContext) -> CheckResult:
    res = CheckResult("mc_lower_bound")
    mc = ctx.mc(4000, 2.0**-4, offset=8)
    fam = default_family(G12, 1.0, mc)
    ok = True
    for name, phi in MARKOV_PAYOFFS.items():
        pde = _solve_u0(G12, phi, 0.02)
        est = estimate_expectation_lower(lambda b, phi=phi: phi(b.b[:, -1]), fam, 1.0, mc)
        res.add(f"{name}_pde", pde)
        res.add(f"{name}_mc", est.estimate, est.stderr)
        ok &= est.estimate <= pde + 3 * est.stderr
    big = ctx.mc(10**6, 1.0, offset=9)
    ladder = [Scenario.constant(s) for s in np.linspace(1.0, 2.0, 9)]
    convex = estimate_expectation_lower(lambda b: b.b[:, -1] ** 2, ladder, 1.0, big)
    pde = res.value("square_pde")
    gap = (pde - convex.estimate) / pde
    res.add("convex_constant_family", convex.estimate, convex.stderr)
    res.add("convex_relative_gap", gap)
    res.passed = bool(ok and gap <= 0.01)
    return res


def check_bang_bang(ctx: VerifyContext) -> CheckResult:
    """Bang-bang controls aligned with delta_n reach (hi - lo) T / 2 for int delta_n d<B>."""
    from .scenarios import delta_n_steps

    res = CheckResult("bang_bang")
    ok = True
    for n in (2, 4, 8):
        mc = ctx.mc(100, 1.0 / (4 * n), offset=10)
        payoff = lambda b, n=n: (delta_n_steps(b.times, n, 1.0) * b.dqv).sum(axis=1)  # noqa: E731
        bb = estimate_expectation_lower(payoff, [Scenario.bang_bang(G12, n, 1.0)], 1.0, mc)
        const = estimate_expectation_lower(payoff, [Scenario.constant(s) for s in (1.0, 1.5, 2.0)], 1.0, mc)
        res.add(f"bang_bang_n{n}", bb.estimate, bb.stderr)
        res.add(f"best_constant_n{n}", const.estimate, const.stderr)
        ok &= abs(bb.estimate - 0.5) <= 3 * bb.stderr + 1e-12 and const.estimate <= 0.5
    res.passed = bool(ok)
    return res


# --------------------------------------------------------------------------
# gbsde
# --------------------------------------------------------------------------


def bsde_cases():
    """The three example problems: (generator, driver, oracle u(0,0))."""
    lin = SublinearGenerator.linear()
    return {
        "zero": (G12, None, 2.0),
        "discount": (G12, MarkovDriver(lambda t, x, y, z, w: -0.05 * y, lipschitz_y=0.05), 2.0 * math.exp(-0.05)),
        "drift": (lin, MarkovDriver(lambda t, x, y, z, w: 1.0 * z, lipschitz_z=1.0), 2.0),
    }


_SURFACES: dict = {}


def bsde_surface(name: str, dx: float = 0.01, levels: int = 4096):
    key = (name, dx, levels)
    if key not in _SURFACES:
        g, drv, _ = bsde_cases()[name]
        grid = SpaceGrid.from_spacing(0.0, 6.0 * math.sqrt(g.sigma_high_sq), dx)
        n = steps_for(g, grid.dx, 1.0, drv, 0.9, levels)
        _SURFACES[key] = solve_markovian_gbsde(g, drv, lambda x: x**2, grid, n, 1.0,
                                               store_every=n // levels)
    return _SURFACES[key]


def _bsde_controls(g):
    lo, hi = g.variance_bounds
    out = [Scenario.constant(lo), Scenario.constant(hi)]
    if hi > lo:
        out.append(Scenario.switch(lo, hi, 0.5))
    return out


def check_bsde_values(ctx: VerifyContext) -> CheckResult:
    res = CheckResult("bsde_examples")
    ok = True
    for name, (g, drv, oracle) in bsde_cases().items():
        u0 = bsde_surface(name).u0()
        res.add(name, u0)
        ok &= abs(u0 - oracle) <= 5e-3
    res.passed = bool(ok)
    return res


def check_bsde_correspondence(ctx: VerifyContext) -> CheckResult:
    res = CheckResult("bsde_correspondence")
    ok = True
    for name, (g, drv, _) in bsde_cases().items():
        surf = bsde_surface(name)
        cs, y0err = [], 0.0
        for dt in (2.0**-8, 2.0**-10, 2.0**-12):
            worst = 0.0
            for sc in _bsde_controls(g):
                batch = simulate(sc, 1.0, ctx.mc(100, dt, offset=11))
                sol = extract_bsde_processes(surf, batch, g, drv)
                worst = max(worst, rms(backward_identity_residual(sol, batch)) / math.sqrt(dt))
                y0err = max(y0err, float(np.max(np.abs(sol.y[:, 0] - surf.u0()))))
            cs.append(worst)
            res.add(f"{name}_c_dt{int(round(-math.log2(dt)))}", worst)
        res.add(f"{name}_y0_error", y0err)
        ok &= all(b < a for a, b in zip(cs, cs[1:])) and y0err <= 1e-3
    res.passed = bool(ok)
    return res


def check_k_contract(ctx: VerifyContext) -> CheckResult:
    g = G12
    surf = bsde_surface("zero")
    res = CheckResult("k_contract")
    worst_inc = k0 = 0.0
    gaps = []
    for dt in (2.0**-8, 2.0**-10, 2.0**-12):
        gap = 0.0
        # reduced default family: ladder of 3 and switches at 1/3, 2/3
        for sc in default_family(g, 1.0, ctx.mc(100, dt), n_ladder=3, n_switch=2):
            batch = simulate(sc, 1.0, ctx.mc(100, dt, offset=12))
            sol = extract_bsde_processes(surf, batch, g)
            worst_inc = max(worst_inc, sol.max_k_increase())
            k0 = max(k0, float(np.max(np.abs(sol.k_strong[:, 0]))))
            gap = max(gap, rms(sol.k_strong - sol.k_weak) / math.sqrt(dt))
        gaps.append(gap)
        res.add(f"gap_c_dt{int(round(-math.log2(dt)))}", gap)
    hi = simulate(Scenario.constant(2.0), 1.0, ctx.mc(100, 2.0**-8, offset=12))
    k_hi = float(np.max(np.abs(extract_bsde_processes(surf, hi, g).k_strong)))
    res.add("k0_abs", k0)
    res.add("max_k_increase", worst_inc)
    res.add("k_under_high_control", k_hi)
    bound = 3 * math.sqrt(2) * g.sigma_high_sq
    res.passed = bool(k0 == 0 and worst_inc <= 1e-10 and k_hi <= 1e-10 and max(gaps) <= bound)
    return res


def check_g_martingales(ctx: VerifyContext) -> CheckResult:
    g = G12
    dt = 0.01
    probes = [(t, x) for t in (0.0, 0.25, 0.5) for x in np.linspace(-2, 2, 7)]
    probes = probes[:21]
    m = check_g_martingale(example1_m_increment(1.0, g, dt), g, probes, dt)
    k = check_g_martingale(k_process_increment(2.0, g, dt), g, probes, dt)
    surf = bsde_surface("zero")
    y = check_g_martingale(surface_increment(surf, dt), g, probes, dt)
    dec = check_g_martingale(lambda t, x, yy: -dt * np.ones_like(yy), g, probes, dt, tol=0.5 * dt)
    ok = m.passed and k.passed and y.passed and (not dec.passed) and abs(dec.max_abs - dt) <= 1e-9
    return _result("g_martingale", ok, example1_m=m.max_abs, k_process=k.max_abs, y_process=y.max_abs,
                   decreasing_process=dec.max_abs)


def check_wiener_bsde(ctx: VerifyContext) -> CheckResult:
    grid = SpaceGrid.from_spacing(0.0, 6.0, 0.02)
    cos_s = solve_wiener_bsde(None, np.cos, grid, T=1.0)
    disc = solve_wiener_bsde(lambda t, x, y, z: -y, lambda x: np.ones_like(x), grid, T=1.0)
    lin = solve_wiener_bsde(None, lambda x: x, grid, T=1.0)
    g = SublinearGenerator.linear()
    worst_k = 0.0
    for dt in (2.0**-8, 2.0**-10):
        batch = simulate(Scenario.constant(1.0), 1.0, ctx.mc(100, dt, offset=13))
        sol = extract_bsde_processes(cos_s, batch, g)
        worst_k = max(worst_k, float(np.max(np.abs(sol.k_strong))) / math.sqrt(dt))
    lin_path = extract_bsde_processes(lin, simulate(Scenario.constant(1.0), 1.0, ctx.mc(20, 2.0**-6, offset=13)), g)
    z_err = float(np.max(np.abs(lin_path.z - 1.0)))
    yb_err = float(np.max(np.abs(lin_path.y - simulate(Scenario.constant(1.0), 1.0,
                                                       ctx.mc(20, 2.0**-6, offset=13)).b)))
    ok = (abs(cos_s.u0() - math.exp(-0.5)) <= 1e-3 and abs(disc.u0() - math.exp(-1)) <= 1e-3
          and worst_k <= 1.0 and z_err <= 1e-9 and yb_err <= 1e-9)
    return _result("wiener_bsde", ok, cos_u0=cos_s.u0(), discount_u0=disc.u0(), k_over_sqrt_dt=worst_k,
                   z_error=z_err, y_minus_b=yb_err)


# --------------------------------------------------------------------------
# worked examples
# --------------------------------------------------------------------------


def check_examples(ctx: VerifyContext) -> list:
    mc = ctx.mc(10**5, 1.0, offset=14)
    num = NumericsConfig(tol=ctx.tol)
    return [example1_value(1.0, G12, 1.0, mc, num, ctx.tol),
            example2_value(1.0, G12, 1.0, (2, 4, 8, 16), mc, num, ctx.tol),
            example3_value(1.0, 0.5, G12, 1.0, mc, num, ctx.tol),
            corollary_check(1.0, G12, 0.5, 8, 1.0, mc)]


def check_example_grid(ctx: VerifyContext) -> CheckResult:
    res = CheckResult("example_grid")
    mc = ctx.mc(10**4, 1.0, offset=15)
    num = NumericsConfig(tol=ctx.tol)
    fails = 0
    runs = 0
    for lo, hi in G_GRID:
        g = SublinearGenerator.standard(lo, hi)
        for eta in (0.0, 1.0, 2.0):
            checks = [example1_value(eta, g, 1.0, mc, num, ctx.tol),
                      example2_value(eta, g, 1.0, (2, 4, 8), mc, num, ctx.tol),
                      example3_value(eta, (hi - lo) / 2, g, 1.0, mc, num, ctx.tol)]
            checks += [corollary_check(eta, g, e, 8, 1.0, mc) for e in (0.0, (hi - lo) / 4, (hi - lo) / 2)]
            runs += len(checks)
            fails += sum(not c.passed for c in checks)
    res.add("runs", runs)
    res.add("failures", fails)
    res.passed = fails == 0
    return res


CHECKS: list[tuple[str, Callable]] = [
    ("generator_properties", check_generator_properties),
    ("generator_chain", check_generator_chain),
    ("default_domain", check_default_domain),
    ("heat_linear_cos", check_heat_linear_cos),
    ("heat_quadratic", check_heat_quadratic),
    ("heat_structure", check_heat_structure),
    ("heat_gauss_hermite", check_heat_reference),
    ("g_expectation_bounds", check_g_expectation_bounds),
    ("g_expectation_increment", check_g_expectation_increment),
    ("conditional_g_expectation", check_conditional),
    ("tower_property", check_tower),
    ("linear_cylinder_quadrature", check_linear_cylinder),
    ("expectation_axioms", check_axioms),
    ("qn_derivatives", check_qn),
    ("ito_residual_scaling", check_ito_scaling),
    ("simulation", check_simulation),
    ("mc_lower_bound", check_mc_lower_bound),
    ("bang_bang", check_bang_bang),
    ("bsde_examples", check_bsde_values),
    ("bsde_correspondence", check_bsde_correspondence),
    ("k_contract", check_k_contract),
    ("g_martingale", check_g_martingales),
    ("wiener_bsde", check_wiener_bsde),
    ("examples", check_examples),
    ("example_grid", check_example_grid),
]


def run_checks(ctx: Optional[VerifyContext] = None, only: Optional[Sequence[str]] = None,
               progress: Optional[Callable] = None) -> list:
    ctx = ctx or VerifyContext()
    out = []
    for name, fn in CHECKS:
        if only and name not in only:
            continue
        got = fn(ctx)
        for r in (got if isinstance(got, list) else [got]):
            out.append(r)
            if progress:
                progress(r)
    return out


def report_rows(results):
    for r in results:
        yield from r.rows()


def write_report(results, target) -> None:
    write_rows(target, REPORT_HEADER, report_rows(results))
