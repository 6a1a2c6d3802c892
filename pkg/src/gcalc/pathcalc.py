"""Path derivatives of cylinder path processes.

A cylinder path process is u(t, omega) = u_k(t, omega(t); omega(t_1), ..., omega(t_k))
on (t_k, t_{k+1}].  Each piece carries its own analytic derivatives in t and
x; D_t, D_x, D_x^2 evaluate them with the path substituted.  Derivatives are
never taken numerically during evaluation, only cross-checked when a process
is built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .core import ConfigurationError, SublinearGenerator, TimePartition, eval_generator


@dataclass(frozen=True)
class Piece:
    """One smooth piece u_k(t, x; params) and its derivatives.

    Every callable takes ``(t, x, params)`` where ``params`` has shape
    ``x.shape + (k,)`` holding omega(t_1)..omega(t_k).
    """

    value: Callable
    dt: Callable
    dx: Callable
    dxx: Callable


class CylinderPathProcess:
    def __init__(self, partition: TimePartition, pieces: Sequence[Piece], validate: bool = True,
                 max_checked_pieces: int = 8, seed: int = 0):
        self.partition = partition
        self.pieces = tuple(pieces)
        if len(self.pieces) != partition.n_intervals:
            raise ConfigurationError("one piece per partition interval required")
        if validate:
            self.validate(max_checked_pieces, seed)

    @property
    def T(self) -> float:
        return self.partition.T

    # ------------------------------------------------------------------
    def validate(self, max_pieces: int = 8, seed: int = 0, n_points: int = 16) -> None:
        """Check matching conditions (1e-10) and derivatives against central differences."""
        rng = np.random.default_rng(seed)
        ts = self.partition.times
        n = len(self.pieces)
        ks = sorted(set(np.linspace(0, n - 1, min(n, max_pieces)).round().astype(int)))
        for k in ks:
            pc = self.pieces[k]
            x = rng.uniform(-2, 2, n_points)
            params = rng.uniform(-2, 2, (n_points, k))
            t = rng.uniform(ts[k], ts[k + 1], n_points)
            h = 1e-4 * max(1.0, ts[k + 1] - ts[k])
            hx = 1e-4
            checks = (
                (pc.dx, (pc.value(t, x + hx, params) - pc.value(t, x - hx, params)) / (2 * hx)),
                (pc.dxx, (pc.value(t, x + hx, params) - 2 * pc.value(t, x, params)
                          + pc.value(t, x - hx, params)) / hx**2),
                (pc.dt, (pc.value(t + h, x, params) - pc.value(t - h, x, params)) / (2 * h)),
            )
            for deriv, fd in checks:
                exact = np.broadcast_to(np.asarray(deriv(t, x, params), dtype=float), x.shape)
                if not np.allclose(exact, fd, rtol=1e-4, atol=1e-4):
                    raise ConfigurationError(f"piece {k}: analytic derivative disagrees with finite differences")
            if k + 1 < n:
                tk1 = np.full(n_points, ts[k + 1])
                left = self.pieces[k].value(tk1, x, params)
                right = self.pieces[k + 1].value(tk1, x, np.concatenate([params, x[:, None]], axis=1))
                if not np.allclose(left, right, rtol=0, atol=1e-10):
                    raise ConfigurationError(f"matching condition fails at t_{k + 1}")

    # ------------------------------------------------------------------
    def piece_index(self, t: float, right_limit: bool = False) -> int:
        """Interval index: (t_k, t_{k+1}] by default, [t_k, t_{k+1}) for right limits."""
        ts = self.partition.times
        if not (-1e-14 <= t <= ts[-1] + 1e-12):
            raise ValueError(f"t={t} outside [0, {ts[-1]}]")
        side = "right" if right_limit else "left"
        k = int(np.searchsorted(ts, t, side=side)) - 1
        return int(min(max(k, 0), len(self.pieces) - 1))

    def _eval(self, which: str, t: float, x, knots, right_limit=False):
        k = self.piece_index(t, right_limit)
        x = np.asarray(x, dtype=float)
        knots = np.atleast_1d(np.asarray(knots, dtype=float))
        if knots.shape[-1] < k:
            raise ValueError(f"need path values at the first {k} partition times")
        params = np.broadcast_to(knots[..., :k], x.shape + (k,))
        out = getattr(self.pieces[k], which)(t, x, params)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape) * 1.0

    def value(self, t, x, knots=()):
        return self._eval("value", t, x, knots)


def _knots_arg(knots):
    return np.zeros(0) if knots is None else np.asarray(knots, dtype=float)


def d_t(u: CylinderPathProcess, t: float, x, knots=()):
    """Right time-derivative of the piece active on [t_k, t_{k+1})."""
    return u._eval("dt", t, x, _knots_arg(knots), right_limit=True)


def d_x(u: CylinderPathProcess, t: float, x, knots=()):
    return u._eval("dx", t, x, _knots_arg(knots))


def d_x2(u: CylinderPathProcess, t: float, x, knots=()):
    return u._eval("dxx", t, x, _knots_arg(knots))


def a_operator(u, t, x, knots=()):
    """D_t u + 1/2 D_x^2 u."""
    return d_t(u, t, x, knots) + 0.5 * d_x2(u, t, x, knots)


def a_g_operator(u, t, x, knots, g: SublinearGenerator):
    """D_t u + G(D_x^2 u)."""
    return d_t(u, t, x, knots) + eval_generator(g, d_x2(u, t, x, knots))


# --------------------------------------------------------------------------
# constructors
# --------------------------------------------------------------------------


def markov_process(value, dt, dx, dxx, T: float = 1.0, validate: bool = True) -> CylinderPathProcess:
    """Single-piece process u(t, omega(t)) from functions of (t, x)."""
    piece = Piece(lambda t, x, p: value(t, x), lambda t, x, p: dt(t, x),
                  lambda t, x, p: dx(t, x), lambda t, x, p: dxx(t, x))
    return CylinderPathProcess(TimePartition((0.0, T)), [piece], validate=validate)


def polynomial_process(coef, T: float = 1.0, validate: bool = True) -> CylinderPathProcess:
    """u(t, x) = sum_{i,j} coef[i, j] t^i x^j."""
    c = np.atleast_2d(np.asarray(coef, dtype=float))
    ct = P.polyder(c, axis=0) if c.shape[0] > 1 else np.zeros((1, c.shape[1]))
    cx = P.polyder(c, axis=1) if c.shape[1] > 1 else np.zeros((c.shape[0], 1))
    cxx = P.polyder(cx, axis=1) if cx.shape[1] > 1 else np.zeros((c.shape[0], 1))

    def ev(cc):
        return lambda t, x: P.polyval2d(np.broadcast_to(t, np.shape(x)), x, cc)

    return markov_process(ev(c), ev(ct), ev(cx), ev(cxx), T, validate)


def qn_process(n: int, T: float = 1.0, validate: bool = True) -> CylinderPathProcess:
    """Q^n(t) = sum_k (B_{t_{k+1} ^ t} - B_{t_k ^ t})^2 on the dyadic partition t_k = k T / 2^n."""
    if n < 0:
        raise ValueError("level n must be nonnegative")
    m = 2**n
    partition = TimePartition(tuple(k * T / m for k in range(m + 1)))

    def make(k):
        def last(p):
            return p[..., -1] if k else 0.0

        def value(t, x, p):
            if k:
                prev = np.concatenate([np.zeros(p.shape[:-1] + (1,)), p], axis=-1)
                acc = np.sum(np.diff(prev, axis=-1) ** 2, axis=-1)
            else:
                acc = 0.0
            return acc + (x - last(p)) ** 2

        return Piece(value,
                     lambda t, x, p: np.zeros(np.shape(x)),
                     lambda t, x, p: 2.0 * (x - last(p)),
                     lambda t, x, p: np.full(np.shape(x), 2.0))

    return CylinderPathProcess(partition, [make(k) for k in range(m)], validate=validate)


# --------------------------------------------------------------------------
# evaluation along simulated paths
# --------------------------------------------------------------------------


def _knot_columns(u: CylinderPathProcess, times: np.ndarray) -> np.ndarray:
    dt = times[1] - times[0]
    cols = []
    for tk in u.partition.times[1:-1]:
        j = int(round(tk / dt))
        if abs(j * dt - tk) > 1e-9 * max(1.0, tk):
            raise ValueError(f"path grid does not refine the partition (knot {tk})")
        cols.append(j)
    return np.array(cols, dtype=int)


def along_path(u: CylinderPathProcess, batch, fields: Sequence[str] = ("value", "dt", "dx", "dxx")):
    """Evaluate fields at every path time, shape (n_paths, n_times).

    Derivative fields use the left-point (predictable) convention: at path
    time s_j the piece active on [s_j, s_{j+1}) is used, so these arrays
    are the integrands of the Ito sums over each step.  ``value`` is
    continuous across knots by the matching condition.
    """
    times = np.asarray(batch.times)
    b = np.asarray(batch.b)
    cols = _knot_columns(u, times)
    knots = b[:, cols] if len(cols) else np.zeros((b.shape[0], 0))
    out = {f: np.empty_like(b) for f in fields}
    last = len(times) - 1
    for j, s in enumerate(times):
        k = u.piece_index(s, right_limit=(j < last))
        params = knots[:, :k]
        pc = u.pieces[k]
        x = b[:, j]
        for f in fields:
            out[f][:, j] = getattr(pc, f)(s, x, params)
    return out


def ito_residual(u: CylinderPathProcess, batch, g: Optional[SublinearGenerator] = None) -> np.ndarray:
    """u(T) - u(0) - sum [D_t u dt + D_x u dB + 1/2 D_x^2 u d<B>] per path (left points).

    ``g`` is accepted for interface symmetry; the quadratic variation comes
    from the path itself.
    """
    times = np.asarray(batch.times)
    if abs(times[-1] - u.T) > 1e-9:
        raise ValueError("path horizon must match the process horizon")
    ev = along_path(u, batch)
    dt = np.diff(times)
    db = np.diff(batch.b, axis=1)
    dq = batch.dqv
    integral = (ev["dt"][:, :-1] * dt + ev["dx"][:, :-1] * db + 0.5 * ev["dxx"][:, :-1] * dq).sum(axis=1)
    return ev["value"][:, -1] - ev["value"][:, 0] - integral
