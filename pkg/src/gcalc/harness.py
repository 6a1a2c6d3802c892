"""Worked examples with constant eta, each computed along independent routes.

Every function returns a :class:`CheckResult` whose terms carry a value and a
standard error; ``passed`` records whether the routes agree (MC terms within
``confidence`` standard errors, deterministic routes within ``num_tol``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import NumericsConfig, SpaceGrid, SublinearGenerator, eval_generator
from .gheat import MarkovDriver, backward_sweep, steps_for
from .scenarios import (
    McConfig,
    Scenario,
    delta_n_steps,
    estimate_expectation_lower,
)


class VerificationFailure(AssertionError):
    pass


@dataclass
class CheckResult:
    check: str
    terms: dict = field(default_factory=dict)  # name -> (value, stderr)
    passed: bool = True
    detail: str = ""

    def add(self, name, value, stderr=0.0):
        self.terms[name] = (float(value), float(stderr))

    def value(self, name) -> float:
        return self.terms[name][0]

    def rows(self):
        status = "pass" if self.passed else "fail"
        for name, (v, se) in self.terms.items():
            yield (self.check, name, v, se, status)

    def raise_if_failed(self):
        if not self.passed:
            raise VerificationFailure(f"{self.check} failed: {self.terms} {self.detail}")
        return self


def _agree(a, b, se, confidence, num_tol):
    return abs(a - b) <= confidence * se + num_tol


def _constant_ladder(lo, hi, n=3):
    return [Scenario.constant(s, (lo, hi)) for s in sorted(set(np.linspace(lo, hi, n)))]


def _pde_constant_state(g, driver, T, cfg: NumericsConfig):
    """Solve on a small grid for problems whose solution does not depend on x."""
    grid = SpaceGrid.centered(0.0, 1.0, 11)
    n = steps_for(g, grid.dx, T, driver, cfg.cfl_safety)
    u = backward_sweep(np.zeros(grid.n_nodes), g, grid.nodes, 0.0, T, n, driver)
    return float(u[grid.n_nodes // 2])


def example1_value(eta: float, g: SublinearGenerator, T: float = 1.0,
                   mc: Optional[McConfig] = None, num: Optional[NumericsConfig] = None,
                   num_tol: float = 1e-8) -> CheckResult:
    """u_0 = E^G[1/2 int_0^T eta d<B>]: closed form, scenario sup, PDE with G(D^2 u + eta)."""
    mc = mc or McConfig(n_paths=10**5, dt=T, seed=0)
    num = num or NumericsConfig()
    lo, hi = g.variance_bounds
    res = CheckResult("example1")
    closed = 0.5 * T * (hi * max(eta, 0.0) - lo * max(-eta, 0.0))
    est = estimate_expectation_lower(lambda b: 0.5 * eta * b.dqv.sum(axis=1),
                                     _constant_ladder(lo, hi), T, mc)
    shift = MarkovDriver(lambda t, x, y, z, w: eval_generator(g, w + eta) - eval_generator(g, w),
                         lipschitz_w=0.5 * hi)
    pde = _pde_constant_state(g, shift, T, num)
    res.add("closed_form", closed)
    res.add("scenario_sup", est.estimate, est.stderr)
    res.add("pde", pde)
    res.passed = (_agree(est.estimate, closed, est.stderr, mc.confidence, num_tol)
                  and _agree(pde, closed, 0.0, mc.confidence, num_tol))
    return res


def finite_n_value(eta: float, g: SublinearGenerator, T: float, n: int) -> float:
    """E^G[1/2 int delta_n eta d<B>] for constant eta: bang-bang on each interval."""
    lo, hi = g.variance_bounds
    total = 0.0
    for i in range(n):
        c = eta * (-1) ** i
        total += max(hi * c, lo * c)
    return 0.5 * total * T / n


def example2_value(eta: float, g: SublinearGenerator, T: float = 1.0,
                   n_levels: Sequence[int] = (2, 4, 8, 16), mc: Optional[McConfig] = None,
                   num: Optional[NumericsConfig] = None, num_tol: float = 1e-8) -> CheckResult:
    """v_0 = T G^eta(0) against the scenario value of 1/2 int delta_n eta d<B> for each n.

    The finite-n value equals the limit for even n only; odd n carry an
    extra (hi + lo) |eta| T / (4 n) and are compared with their own
    closed form instead.
    """
    mc = mc or McConfig(n_paths=10**5, dt=T, seed=0)
    num = num or NumericsConfig()
    lo, hi = g.variance_bounds
    res = CheckResult("example2")
    g_eta = SublinearGenerator.eta_symmetrized(g.sigma_low_sq, g.sigma_high_sq, eta)
    pde = _pde_constant_state(g_eta, None, T, num)
    limit = T * float(g_eta(0.0, _ctx0()))
    res.add("pde", pde)
    res.add("closed_form", limit)
    ok = _agree(pde, limit, 0.0, 1.0, num_tol)
    for n in n_levels:
        cfg_n = McConfig(mc.n_paths, T / n, mc.seed, mc.confidence, mc.workers)
        fam = [Scenario.bang_bang(g, n, T, +1.0), Scenario.bang_bang(g, n, T, -1.0)] + _constant_ladder(lo, hi)
        est = estimate_expectation_lower(
            lambda b, n=n: 0.5 * eta * (delta_n_steps(b.times, n, T) * b.dqv).sum(axis=1), fam, T, cfg_n)
        res.add(f"scenario_n{n}", est.estimate, est.stderr)
        ok &= _agree(est.estimate, finite_n_value(eta, g, T, n), est.stderr, mc.confidence, num_tol)
        if n % 2 == 0:
            ok &= _agree(est.estimate, limit, est.stderr, mc.confidence, num_tol)
    res.passed = bool(ok)
    return res


def _ctx0():
    from .core import EtaContext

    return EtaContext(0.0, 0.0)


def example3_value(eta: float, eps: float, g: SublinearGenerator, T: float = 1.0,
                   mc: Optional[McConfig] = None, num: Optional[NumericsConfig] = None,
                   num_tol: float = 1e-8) -> CheckResult:
    """u_0 = E^{G_eps}[1/2 int eta ds] = eta T / 2 by PDE, closed form and scenarios."""
    mc = mc or McConfig(n_paths=10**5, dt=T, seed=0)
    num = num or NumericsConfig()
    g_eps = SublinearGenerator.eps_shrunk(g.sigma_low_sq, g.sigma_high_sq, eps)
    lo, hi = g_eps.variance_bounds
    res = CheckResult("example3")
    drv = MarkovDriver(lambda t, x, y, z, w: 0.5 * eta * np.ones_like(y))
    pde = _pde_constant_state(g_eps, drv, T, num)
    est = estimate_expectation_lower(lambda b: 0.5 * eta * np.diff(b.times).sum() * np.ones(b.n_paths),
                                     _constant_ladder(lo, hi), T, mc)
    res.add("closed_form", 0.5 * eta * T)
    res.add("pde", pde)
    res.add("scenario_sup", est.estimate, est.stderr)
    res.passed = (_agree(pde, 0.5 * eta * T, 0, 1, num_tol)
                  and _agree(est.estimate, 0.5 * eta * T, est.stderr, mc.confidence, num_tol))
    return res


def corollary_check(eta: float, g: SublinearGenerator, eps: float, n_max: int = 8, T: float = 1.0,
                    mc: Optional[McConfig] = None) -> CheckResult:
    """gamma E^G[int |eta| d<B>] >= sup_n E^G[int delta_n eta d<B>] >= eps E^{G_eps}[int |eta| ds].

    The middle term runs over even n <= n_max, where the finite-n value
    already equals its limit.
    """
    mc = mc or McConfig(n_paths=10**4, dt=T, seed=0)
    res = CheckResult("corollary")
    left = g.gamma * abs(eta) * g.sigma_high_sq * T
    evens = [n for n in range(2, n_max + 1, 2)] or [2]
    ex2 = example2_value(eta, g, T, evens, mc)
    best = max(evens, key=lambda n: ex2.terms[f"scenario_n{n}"][0])
    mid, mid_se = ex2.terms[f"scenario_n{best}"]
    mid, mid_se = 2 * mid, 2 * mid_se
    right = eps * abs(eta) * T
    res.add("left", left)
    res.add("middle", mid, mid_se)
    res.add("right", right)
    tol = 1e-12 * max(1.0, abs(left))
    c = mc.confidence
    res.passed = bool(left >= mid - c * mid_se - tol and mid >= right - c * mid_se - tol)
    if not res.passed:
        res.detail = f"chain violated: {left} >= {mid} >= {right}"
    return res
