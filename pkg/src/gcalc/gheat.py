"""Explicit monotone finite differences for

    d_t u + G(d_xx u) + f(t, x, u, d_x u, d_xx u) = 0,   u(T, .) = phi,

solved backward in time on a uniform grid, plus a Gauss-Hermite reference
for the linear heat equation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    CFLError,
    ConfigurationError,
    DivergenceError,
    EtaContext,
    SpaceGrid,
    SublinearGenerator,
    eval_generator,
)
from .csvio import write_rows

logger = logging.getLogger(__name__)


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, estimate):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class MarkovDriver:
    """f(t, x, y, z, w) with declared Lipschitz constants in y, z and w.

    ``evaluate`` must accept numpy arrays.  A driver that ignores ``w``
    should declare ``lipschitz_w = 0``.
    """

    evaluate: Callable
    lipschitz_y: float = 0.0
    lipschitz_z: float = 0.0
    lipschitz_w: float = 0.0
    name: str = ""

    def __call__(self, t, x, y, z, w):
        return self.evaluate(t, x, y, z, w)

    @property
    def depends_on_w(self) -> bool:
        return self.lipschitz_w > 0

    def check_lipschitz(self, n_probes: int = 200, seed: int = 0, scale: float = 3.0) -> bool:
        """Spot-check the declared constants on random probe pairs (factor 1.01)."""
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 1, n_probes)
        x = rng.uniform(-scale, scale, n_probes)
        base = rng.uniform(-scale, scale, (3, n_probes))
        ok = True
        for axis, lip in enumerate((self.lipschitz_y, self.lipschitz_z, self.lipschitz_w)):
            bumped = base.copy()
            h = rng.uniform(-1, 1, n_probes)
            bumped[axis] += h
            f0 = np.asarray(self.evaluate(t, x, *base), dtype=float)
            f1 = np.asarray(self.evaluate(t, x, *bumped), dtype=float)
            ok &= bool(np.all(np.abs(f1 - f0) <= 1.01 * lip * np.abs(h) + 1e-12))
        return ok


# --------------------------------------------------------------------------
# discrete derivatives
# --------------------------------------------------------------------------


def discrete_second_diff(values, dx: float) -> np.ndarray:
    """Central second difference along the last axis; endpoints copy their neighbour."""
    v = np.asarray(values, dtype=float)
    if v.shape[-1] < 3:
        raise ValueError("need at least 3 nodes")
    out = np.empty_like(v)
    out[..., 1:-1] = (v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]) / (dx * dx)
    out[..., 0] = out[..., 1]
    out[..., -1] = out[..., -2]
    return out


def discrete_first_diff(values, dx: float) -> np.ndarray:
    """Central first difference along the last axis; endpoints copy their neighbour."""
    v = np.asarray(values, dtype=float)
    if v.shape[-1] < 3:
        raise ValueError("need at least 3 nodes")
    out = np.empty_like(v)
    out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * dx)
    out[..., 0] = out[..., 1]
    out[..., -1] = out[..., -2]
    return out


def _interp_weights(grid_x: np.ndarray, x):
    """Left index and weight of piecewise-linear interpolation on a uniform grid."""
    x = np.asarray(x, dtype=float)
    dx = (grid_x[-1] - grid_x[0]) / (len(grid_x) - 1)
    pos = np.clip((x - grid_x[0]) / dx, 0.0, len(grid_x) - 1)
    i = np.minimum(np.floor(pos).astype(int), len(grid_x) - 2)
    w = pos - i
    return i, w


def interp_uniform(grid_x: np.ndarray, row, x):
    """Piecewise-linear interpolation of ``row`` (last axis on ``grid_x``), clamped at edges."""
    i, w = _interp_weights(grid_x, x)
    row = np.asarray(row)
    return (1.0 - w) * row[..., i] + w * row[..., i + 1]


# --------------------------------------------------------------------------
# value surface
# --------------------------------------------------------------------------


@dataclass
class ValueSurface:
    grid: SpaceGrid
    time_levels: np.ndarray
    values: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def dxu(self) -> np.ndarray:
        if "dxu" not in self._cache:
            self._cache["dxu"] = discrete_first_diff(self.values, self.grid.dx)
        return self._cache["dxu"]

    @property
    def dxxu(self) -> np.ndarray:
        if "dxxu" not in self._cache:
            self._cache["dxxu"] = discrete_second_diff(self.values, self.grid.dx)
        return self._cache["dxxu"]

    def field(self, name: str) -> np.ndarray:
        return {"u": self.values, "dxu": self.dxu, "dxxu": self.dxxu}[name]

    def level_of(self, t: float) -> tuple[int, float]:
        """Lower level index and time weight for interpolation at time t."""
        ts = self.time_levels
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"t={t} outside surface time range [{ts[0]}, {ts[-1]}]")
        j = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        if abs(w) < 1e-9:
            w = 0.0
        elif abs(w - 1.0) < 1e-9:
            j, w = j + 1, 0.0
        return j, w

    def at(self, t: float, x, name: str = "u"):
        """Interpolate a field at time t (linear in time) and states x (linear in space)."""
        f = self.field(name)
        j, w = self.level_of(t)
        val = interp_uniform(self.x, f[j], x)
        if w:
            val = (1 - w) * val + w * interp_uniform(self.x, f[j + 1], x)
        return val

    def u0(self, x0: float = 0.0) -> float:
        return float(self.at(float(self.time_levels[0]), x0))

    def rows(self):
        x = self.x
        u, dxu, dxxu = self.values, self.dxu, self.dxxu
        for j, t in enumerate(self.time_levels):
            for i in range(len(x)):
                yield (t, x[i], u[j, i], dxu[j, i], dxxu[j, i])

    def to_csv(self, path_or_file) -> None:
        write_rows(path_or_file, ("t", "x", "u", "dxu", "dxxu"), self.rows())


# --------------------------------------------------------------------------
# explicit scheme
# --------------------------------------------------------------------------


def admissible_dt(g: SublinearGenerator, dx: float, driver: Optional[MarkovDriver] = None,
                  safety: float = 1.0) -> float:
    """Largest dt with (sigma_high^2 + 2 L_w) dt / dx^2 <= safety / 2."""
    lw = driver.lipschitz_w if driver is not None else 0.0
    rate = g.max_variance + 2.0 * lw
    if rate <= 0:
        return math.inf
    return 0.5 * safety * dx * dx / rate


def steps_for(g, dx, span, driver=None, safety=0.9, multiple_of: int = 1) -> int:
    """Smallest step count (a multiple of ``multiple_of``) satisfying the CFL bound."""
    dt_max = admissible_dt(g, dx, driver, safety)
    n = 1 if math.isinf(dt_max) else int(math.ceil(span / dt_max - 1e-12))
    n = max(n, 1)
    return int(math.ceil(n / multiple_of) * multiple_of)


def check_cfl(g, dx, dt, driver=None, safety=1.0) -> None:
    adm = admissible_dt(g, dx, driver, safety)
    if dt > adm * (1 + 1e-12):
        raise CFLError(f"time step {dt:.6g} violates CFL; admissible dt <= {adm:.6g}", adm)


def backward_sweep(values, g: SublinearGenerator, x: np.ndarray, t_start: float, t_end: float,
                   n_steps: int, driver: Optional[MarkovDriver] = None, store_every: int = 0,
                   check_every: int = 1):
    """March ``values`` (last axis on nodes ``x``) from ``t_end`` back to ``t_start``.

    Returns the final array, plus the list of stored levels (ascending time)
    when ``store_every > 0``.
    """
    u = np.array(values, dtype=float, copy=True)
    dx = (x[-1] - x[0]) / (len(x) - 1)
    dt = (t_end - t_start) / n_steps
    stored = [(t_end, u.copy())] if store_every else None
    d2 = np.zeros_like(u)
    inv_dx2 = 1.0 / (dx * dx)
    for step in range(n_steps):
        t_next = t_end - step * dt
        # zero curvature at the boundary nodes
        d2[..., 1:-1] = (u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]) * inv_dx2
        ctx = EtaContext(t_next, x) if g.kind == "eta_symmetrized" else None
        incr = eval_generator(g, d2, ctx)
        if driver is not None:
            z = discrete_first_diff(u, dx)
            incr = incr + driver(t_next, x, u, z, d2)
        u = u + dt * incr
        if check_every and (step % check_every == 0 or step == n_steps - 1):
            if not np.all(np.isfinite(u)):
                level = n_steps - step - 1
                raise DivergenceError(f"non-finite values at time level {level}", level)
        if store_every and ((step + 1) % store_every == 0):
            t_now = t_end - (step + 1) * dt if step + 1 < n_steps else t_start
            stored.append((t_now, u.copy()))
    if store_every:
        stored.reverse()
        return u, stored
    return u


def solve_backward(g: SublinearGenerator, terminal, grid: SpaceGrid, n_steps: Optional[int] = None,
                   T: float = 1.0, driver: Optional[MarkovDriver] = None, t0: float = 0.0,
                   cfl_safety: float = 1.0, store_every: int = 1) -> ValueSurface:
    """Solve on [t0, T] and return the stored levels as a :class:`ValueSurface`.

    ``terminal`` is a :class:`TerminalFunction`, any callable of x, or an
    array of nodal values.  With ``n_steps=None`` the step count is the
    smallest one meeting the CFL bound scaled by ``cfl_safety``.
    """
    if T <= t0:
        raise ConfigurationError("need T > t0")
    x = grid.nodes
    if n_steps is None:
        n_steps = steps_for(g, grid.dx, T - t0, driver, cfl_safety, max(store_every, 1))
    if store_every < 1 or n_steps % store_every:
        raise ConfigurationError("store_every must divide n_steps")
    dt = (T - t0) / n_steps
    check_cfl(g, grid.dx, dt, driver, cfl_safety)
    if isinstance(terminal, np.ndarray):
        phi = np.asarray(terminal, dtype=float)
    else:
        phi = np.asarray(terminal(x), dtype=float) * np.ones_like(x)
    if phi.shape != x.shape or not np.all(np.isfinite(phi)):
        raise ConfigurationError("terminal values must be finite on the grid")
    _, stored = backward_sweep(phi, g, x, t0, T, n_steps, driver, store_every=store_every)
    times = np.array([t for t, _ in stored])
    values = np.stack([v for _, v in stored])
    return ValueSurface(grid, times, values)


# --------------------------------------------------------------------------
# Gauss-Hermite reference for the heat equation
# --------------------------------------------------------------------------


def _gh(terminal, elapsed, x, n):
    y, w = np.polynomial.hermite_e.hermegauss(n)
    x = np.asarray(x, dtype=float)
    pts = x[..., None] + math.sqrt(elapsed) * y
    return (np.asarray(terminal(pts), dtype=float) * w).sum(axis=-1) / math.sqrt(2 * math.pi)


def linear_heat_reference(terminal, elapsed: float, x, n_nodes: int = 64, rtol: float = 1e-7):
    """(2 pi)^(-1/2) int phi(x + sqrt(elapsed) y) exp(-y^2/2) dy by Gauss-Hermite.

    The estimate is compared with a rule of twice the order; a mismatch
    beyond ``rtol`` raises :class:`QuadratureError` carrying the estimate.
    """
    if elapsed < 0:
        raise ValueError("elapsed time must be nonnegative")
    if n_nodes < 64:
        raise ValueError("use at least 64 quadrature nodes")
    if elapsed == 0:
        out = np.asarray(terminal(np.asarray(x, dtype=float)), dtype=float)
        return out if out.ndim else float(out)
    est = _gh(terminal, elapsed, x, n_nodes)
    fine = _gh(terminal, elapsed, x, 2 * n_nodes)
    if not np.all(np.abs(fine - est) <= rtol * (1.0 + np.abs(fine))):
        raise QuadratureError("Gauss-Hermite estimate not converged", fine)
    return fine if np.ndim(fine) else float(fine)
