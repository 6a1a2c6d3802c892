"""G-expectations of cylinder functionals by backward chained G-heat solves.

For xi = phi(B_{t_1}, ..., B_{t_n}) set v_n = phi and, for k = n-1 .. 0,

    v_k(x_1..x_k) = u(t_k, x_k)   where  d_t u + G(d_xx u) = 0 on [t_k, t_{k+1}],
                                          u(t_{k+1}, x) = v_{k+1}(x_1..x_k, x),

with x_0 = 0.  v_0 is the expectation.  Each v_k lives on a tensor grid; the
axis of x_j spans +-multiplier * sigma_high * sqrt(t_j).
"""

from __future__ import annotations

import math
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import (
    ConfigurationError,
    CylinderFunctional,
    NumericsConfig,
    SpaceGrid,
    SublinearGenerator,
)
from .gheat import ValueSurface, _interp_weights, backward_sweep, check_cfl, interp_uniform, steps_for


class TensorBlowupError(ConfigurationError):
    def __init__(self, message: str, cost: float):
        super().__init__(message)
        self.cost = cost


def parameter_axes(xi: CylinderFunctional, g: SublinearGenerator, cfg: NumericsConfig) -> list:
    hi = g.sigma_high_sq
    if hi <= 0:
        raise ConfigurationError("degenerate generator (sigma_high = 0)")
    return [SpaceGrid.centered(0.0, cfg.half_width_multiplier * math.sqrt(hi * t), cfg.n_nodes)
            for t in xi.times]


def _n_steps(g, grid, span, cfg):
    if cfg.dt is not None:
        n = max(1, int(math.ceil(span / cfg.dt - 1e-12)))
        check_cfl(g, grid.dx, span / n)
        return n
    return steps_for(g, grid.dx, span, safety=cfg.cfl_safety)


def estimated_cost(xi, g, cfg) -> float:
    """Node-updates of the full recursion."""
    axes = parameter_axes(xi, g, cfg)
    ts = (0.0,) + xi.times
    return float(sum(cfg.n_nodes ** (k + 1) * _n_steps(g, axes[k], ts[k + 1] - ts[k], cfg)
                     for k in range(xi.arity)))


def _check_arity(xi, g, cfg):
    if xi.arity > cfg.max_arity:
        cost = estimated_cost(xi, g, cfg)
        raise TensorBlowupError(
            f"tensor blow-up: arity {xi.arity} exceeds cap {cfg.max_arity} "
            f"(about {cost:.3g} node updates)", cost)


def _terminal_tensor(xi, axes):
    mesh = np.meshgrid(*[a.nodes for a in axes], indexing="ij")
    v = np.asarray(xi(*mesh), dtype=float)
    return np.broadcast_to(v, mesh[0].shape).copy()


def reduce_to_stage(xi: CylinderFunctional, g: SublinearGenerator, cfg: NumericsConfig,
                    stage: int):
    """Run the recursion down to v_stage (stage >= 1); returns (tensor, axes)."""
    _check_arity(xi, g, cfg)
    axes = parameter_axes(xi, g, cfg)
    ts = (0.0,) + xi.times
    v = _terminal_tensor(xi, axes)
    for k in range(xi.arity - 1, stage - 1, -1):
        v = _solve_stage(v, k, axes, ts, g, cfg)
    return v, axes


def _solve_stage(v, k, axes, ts, g, cfg):
    """From v_{k+1} on axes[0..k] to v_k on axes[0..k-1] (a scalar for k = 0)."""
    grid = axes[k]
    x = grid.nodes
    u = backward_sweep(v, g, x, ts[k], ts[k + 1], _n_steps(g, grid, ts[k + 1] - ts[k], cfg))
    if k == 0:
        return float(interp_uniform(x, u, 0.0))
    prev = axes[k - 1].nodes
    i, w = _interp_weights(x, prev)
    m = np.arange(len(prev))
    return (1.0 - w) * u[..., m, i] + w * u[..., m, i + 1]


def g_expectation(xi: CylinderFunctional, g: SublinearGenerator,
                  cfg: Optional[NumericsConfig] = None) -> float:
    cfg = cfg or NumericsConfig()
    v, axes = reduce_to_stage(xi, g, cfg, 1)
    return _solve_stage(v, 0, axes, (0.0,) + xi.times, g, cfg)


def g_mean_bounds(xi: CylinderFunctional, g: SublinearGenerator,
                  cfg: Optional[NumericsConfig] = None) -> tuple[float, float]:
    """(-E^G[-xi], E^G[xi])."""
    return -g_expectation(-xi, g, cfg), g_expectation(xi, g, cfg)


def _slice_row(v, axes, params):
    if not params:
        return np.asarray(v, dtype=float)
    k = len(params)
    for a, p in zip(axes[:k], params):
        if not (a.x_min - 1e-12 <= p <= a.x_max + 1e-12):
            raise ValueError(f"observed value {p} outside parameter axis [{a.x_min}, {a.x_max}]")
    interp = RegularGridInterpolator([a.nodes for a in axes[:k]], v, method="linear")
    return interp(np.asarray(params, dtype=float)[None, :])[0]


def _resolve_observed(xi, t, observed: Mapping[float, float]):
    obs = {float(k): float(v) for k, v in observed.items()}

    def lookup(s):
        for key, val in obs.items():
            if abs(key - s) <= 1e-12:
                return val
        return None

    need = [s for s in xi.times if s <= t + 1e-12] + [t]
    missing = [s for s in need if lookup(s) is None]
    if missing:
        raise ValueError(f"missing observations at times {missing}")
    return [lookup(s) for s in xi.times if s <= t + 1e-12], lookup(t)


def stage_slice_surface(xi: CylinderFunctional, g: SublinearGenerator, cfg: NumericsConfig,
                        stage: int, params: Sequence[float], t_start: Optional[float] = None,
                        store_every: int = 1) -> ValueSurface:
    """u_stage(t, x; params) on [t_start, t_{stage+1}] as a surface (stage >= 0)."""
    if not (0 <= stage < xi.arity) or len(params) != stage:
        raise ValueError("stage must index an interval and params must have length stage")
    ts = (0.0,) + xi.times
    t_start = ts[stage] if t_start is None else float(t_start)
    v, axes = reduce_to_stage(xi, g, cfg, stage + 1)
    row = _slice_row(v, axes, list(params))
    grid = axes[stage]
    span = ts[stage + 1] - t_start
    n = _n_steps(g, grid, span, cfg)
    n = int(math.ceil(n / store_every) * store_every)
    _, stored = backward_sweep(row, g, grid.nodes, t_start, ts[stage + 1], n, store_every=store_every)
    return ValueSurface(grid, np.array([s for s, _ in stored]), np.stack([u for _, u in stored]))


def conditional_g_expectation(xi: CylinderFunctional, t: float, observed: Mapping[float, float],
                              g: SublinearGenerator, cfg: Optional[NumericsConfig] = None) -> float:
    """E_t^G[xi] given ``observed`` = {time: omega(time)} for every functional time <= t and t."""
    cfg = cfg or NumericsConfig()
    if not (0.0 <= t <= xi.T + 1e-12):
        raise ValueError(f"t={t} outside [0, T]")
    if abs(t) <= 1e-15:
        observed = dict(observed)
        observed.setdefault(0.0, 0.0)
    knots, state = _resolve_observed(xi, t, observed)
    if len(knots) == xi.arity:
        return float(xi(*knots))
    k = len(knots)
    ts = (0.0,) + xi.times
    v, axes = reduce_to_stage(xi, g, cfg, k + 1)
    row = _slice_row(v, axes, knots)
    grid = axes[k]
    n = _n_steps(g, grid, ts[k + 1] - t, cfg)
    u = backward_sweep(row, g, grid.nodes, t, ts[k + 1], n)
    if not (grid.x_min - 1e-12 <= state <= grid.x_max + 1e-12):
        raise ValueError(f"observed state {state} outside grid [{grid.x_min}, {grid.x_max}]")
    return float(interp_uniform(grid.nodes, u, state))
