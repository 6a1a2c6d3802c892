"""Markovian G-BSDEs through the PDE correspondence.

The value surface u of  d_t u + G(d_xx u) + f(t, x, u, d_x u, d_xx u) = 0
yields along any path Y = u(t, B_t), Z = d_x u, eta = d_xx u and the
non-increasing G-martingale

    K_t = 1/2 int_0^t eta d<B> - int_0^t G(eta) ds            (strong form)

or, when f does not depend on eta,

    K_t = Y_t - Y_0 + int_0^t f ds - int_0^t Z dB            (weak form).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    ConfigurationError,
    EtaContext,
    SpaceGrid,
    SublinearGenerator,
    eval_generator,
)
from .csvio import write_rows
from .gheat import MarkovDriver, ValueSurface, backward_sweep, solve_backward, steps_for

logger = logging.getLogger(__name__)


class UnsupportedModeError(ConfigurationError):
    pass


def solve_markovian_gbsde(g: SublinearGenerator, driver: Optional[MarkovDriver], terminal,
                          grid: SpaceGrid, n_steps: Optional[int] = None, T: float = 1.0,
                          cfl_safety: float = 0.9, store_every: int = 1) -> ValueSurface:
    """Value surface whose ``values``, ``dxu``, ``dxxu`` are (u, D_x u, D_x^2 u)."""
    return solve_backward(g, terminal, grid, n_steps, T, driver, cfl_safety=cfl_safety,
                          store_every=store_every)


def _as_driver(f) -> Optional[MarkovDriver]:
    if f is None or isinstance(f, MarkovDriver):
        return f
    return MarkovDriver(lambda t, x, y, z, w: f(t, x, y, z))


def solve_wiener_bsde(driver, terminal, grid: SpaceGrid, n_steps: Optional[int] = None,
                      T: float = 1.0, g: Optional[SublinearGenerator] = None,
                      cfl_safety: float = 0.9, store_every: int = 1) -> ValueSurface:
    """Classical BSDE with f(t, x, y, z): the linear generator G(a) = a/2."""
    g = g or SublinearGenerator.linear()
    if g.kind != "linear":
        raise ConfigurationError("the Wiener BSDE needs the linear generator")
    driver = _as_driver(driver)
    if driver is not None and driver.depends_on_w:
        raise ConfigurationError("Wiener BSDE drivers do not depend on D_x^2 u")
    return solve_markovian_gbsde(g, driver, terminal, grid, n_steps, T, cfl_safety, store_every)


def pde_residual(surface: ValueSurface, g: SublinearGenerator, driver: Optional[MarkovDriver] = None,
                 interior_fraction: float = 0.5) -> float:
    """Max |D_t u + G(D_x^2 u) + f| over stored levels on the central part of the grid.

    D_t u is the forward difference between consecutive stored levels.
    """
    x = surface.x
    c = 0.5 * (x[0] + x[-1])
    mask = np.abs(x - c) <= interior_fraction * 0.5 * (x[-1] - x[0])
    ts = surface.time_levels
    u, zx, wx = surface.values, surface.dxu, surface.dxxu
    worst = 0.0
    for k in range(len(ts) - 1):
        dtu = (u[k + 1] - u[k]) / (ts[k + 1] - ts[k])
        ctx = EtaContext(ts[k], x) if g.kind == "eta_symmetrized" else None
        r = dtu + eval_generator(g, wx[k], ctx)
        if driver is not None:
            r = r + driver(ts[k], x, u[k], zx[k], wx[k])
        worst = max(worst, float(np.max(np.abs(r[mask]))))
    return worst


# --------------------------------------------------------------------------
# pathwise extraction
# --------------------------------------------------------------------------


def k_increment(g: SublinearGenerator, eta, dqv, dt, t=None, x=None):
    """1/2 eta d<B> - G(eta) dt.

    For the piecewise-linear kinds this is evaluated as
    1/2 eta^+ (d<B> - hi dt) - 1/2 eta^- (d<B> - lo dt), which is exactly
    nonpositive whenever d<B> lies in [lo dt, hi dt].
    """
    eta = np.asarray(eta, dtype=float)
    if g.kind == "eta_symmetrized":
        return 0.5 * eta * dqv - eval_generator(g, eta, EtaContext(t, x)) * dt
    lo, hi = g.variance_bounds
    return 0.5 * np.maximum(eta, 0.0) * (dqv - hi * dt) - 0.5 * np.maximum(-eta, 0.0) * (dqv - lo * dt)


@dataclass
class BsdeSolution:
    surface: ValueSurface
    times: np.ndarray
    path_ids: np.ndarray
    y: np.ndarray
    z: np.ndarray
    eta: np.ndarray
    k_strong: np.ndarray
    k_weak: Optional[np.ndarray]
    f: np.ndarray
    n_clamped: int = 0

    def rows(self):
        kw = self.k_weak
        for p in range(self.y.shape[0]):
            pid = int(self.path_ids[p])
            for j, t in enumerate(self.times):
                yield (pid, t, self.y[p, j], self.z[p, j], self.eta[p, j], self.k_strong[p, j],
                       None if kw is None else kw[p, j])

    def to_csv(self, target) -> None:
        write_rows(target, ("path_id", "t", "y", "z", "eta", "k_strong", "k_weak"), self.rows())

    def max_k_increase(self) -> float:
        """Largest positive increment of k_strong over all paths (0 if none)."""
        return float(max(0.0, np.max(np.diff(self.k_strong, axis=1), initial=0.0)))


def extract_bsde_processes(surface: ValueSurface, batch, g: SublinearGenerator,
                           driver: Optional[MarkovDriver] = None,
                           weak: Optional[bool] = None) -> BsdeSolution:
    """Read (Y, Z, eta) off the surface along each path and build both K forms.

    ``weak=None`` computes the weak form whenever the driver allows it.
    """
    driver = _as_driver(driver)
    eta_dep = driver is not None and driver.depends_on_w
    if weak and eta_dep:
        raise UnsupportedModeError("the weak-form K needs a driver independent of D_x^2 u")
    weak = (not eta_dep) if weak is None else weak
    times = np.asarray(batch.times)
    b = np.asarray(batch.b)
    if times[0] < surface.time_levels[0] - 1e-12 or times[-1] > surface.time_levels[-1] + 1e-12:
        raise ValueError("path times must lie within the surface time range")
    x = surface.x
    n_clamped = int(np.sum((b < x[0]) | (b > x[-1])))
    if n_clamped:
        logger.warning("%d path points fall outside the grid and are clamped", n_clamped)
    y = np.empty_like(b)
    z = np.empty_like(b)
    eta = np.empty_like(b)
    for j, t in enumerate(times):
        y[:, j] = surface.at(t, b[:, j], "u")
        z[:, j] = surface.at(t, b[:, j], "dxu")
        eta[:, j] = surface.at(t, b[:, j], "dxxu")
    dt = np.diff(times)
    if driver is not None:
        f = np.stack([np.asarray(driver(times[j], b[:, j], y[:, j], z[:, j], eta[:, j]), dtype=float)
                      * np.ones(b.shape[0]) for j in range(len(times))], axis=1)
    else:
        f = np.zeros_like(b)
    dk = np.stack([k_increment(g, eta[:, j], batch.dqv[:, j], dt[j], times[j], b[:, j])
                   for j in range(len(dt))], axis=1)
    k_strong = np.zeros_like(b)
    np.cumsum(dk, axis=1, out=k_strong[:, 1:])
    k_weak = None
    if weak:
        drift = np.zeros_like(b)
        np.cumsum(f[:, :-1] * dt - z[:, :-1] * np.diff(b, axis=1), axis=1, out=drift[:, 1:])
        k_weak = y - y[:, :1] + drift
    return BsdeSolution(surface, times, np.asarray(batch.path_ids), y, z, eta, k_strong, k_weak, f,
                        n_clamped)


def backward_identity_residual(sol: BsdeSolution, batch) -> np.ndarray:
    """Y_k - (Y_{k+1} + f_k dt - Z_k dB_k - dK_k) on each step, shape (n_paths, n_steps)."""
    dt = np.diff(sol.times)
    db = np.diff(batch.b, axis=1)
    dk = np.diff(sol.k_strong, axis=1)
    return sol.y[:, :-1] - (sol.y[:, 1:] + sol.f[:, :-1] * dt - sol.z[:, :-1] * db - dk)


def rms(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(math.sqrt(np.mean(a * a)))


# --------------------------------------------------------------------------
# G-martingale check by local one-step solves
# --------------------------------------------------------------------------


@dataclass
class GMartingaleReport:
    probes: list
    values: np.ndarray
    max_abs: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_abs <= self.tol


def one_step_g_expectation(increment: Callable, g: SublinearGenerator, t_k: float, x: float,
                           dt: float, n_nodes: int = 101, multiplier: float = 8.0,
                           cfl_safety: float = 0.9) -> float:
    """E^G[increment(t_k, x, B_{t_k + dt}) | B_{t_k} = x] by a local PDE solve."""
    hi = max(g.sigma_high_sq, 1e-12)
    grid = SpaceGrid.centered(x, multiplier * math.sqrt(hi * dt), n_nodes | 1)
    y = grid.nodes
    terminal = np.asarray(increment(t_k, x, y), dtype=float) * np.ones_like(y)
    n = steps_for(g, grid.dx, dt, safety=cfl_safety)
    u = backward_sweep(terminal, g, y, t_k, t_k + dt, n)
    return float(u[grid.n_nodes // 2])


def check_g_martingale(increment: Callable, g: SublinearGenerator, probes: Sequence[tuple],
                       dt: float, tol: float = 5e-3, n_nodes: int = 101) -> GMartingaleReport:
    """Max |E^G[increment | B_{t_k} = x]| over probe nodes (t_k, x).

    ``increment(t_k, x, y)`` is the step increment of the process over
    [t_k, t_k + dt] as a function of the end state y, with d<B> terms
    written through (y - x)^2 (they differ by a symmetric martingale
    increment, which has zero G-expectation).
    """
    vals = np.array([one_step_g_expectation(increment, g, tk, xk, dt, n_nodes) for tk, xk in probes])
    return GMartingaleReport(list(probes), vals, float(np.max(np.abs(vals))), tol)


def example1_m_increment(eta: float, g: SublinearGenerator, dt: float,
                         surface: Optional[ValueSurface] = None) -> Callable:
    """Step increment of  M = int D_x u dB + 1/2 int (D_x^2 u + eta) d<B> - int G(D_x^2 u + eta) ds.

    Without a surface u is taken spatially constant (D_x u = D_x^2 u = 0).
    """

    def inc(t, x, y):
        if surface is None:
            zx, wx = 0.0, 0.0
        else:
            zx = float(surface.at(t, x, "dxu"))
            wx = float(surface.at(t, x, "dxxu"))
        a = wx + eta
        return zx * (y - x) + 0.5 * a * (y - x) ** 2 - eval_generator(g, a) * dt

    return inc


def k_process_increment(eta: float, g: SublinearGenerator, dt: float) -> Callable:
    """Increment of K = 1/2 int eta d<B> - int G(eta) ds for constant eta."""
    return lambda t, x, y: 0.5 * eta * (y - x) ** 2 - eval_generator(g, eta) * dt


def surface_increment(surface: ValueSurface, dt: float) -> Callable:
    """Increment u(t + dt, y) - u(t, x) of the process Y = u(t, B_t)."""
    return lambda t, x, y: surface.at(t + dt, y) - float(surface.at(t, x))
