"""Domain types shared by the solvers.

Everything here is an immutable value object.  The sublinear generator is
vectorised over numpy arrays so that PDE sweeps can apply it nodewise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Invalid or incomplete configuration of a solver object."""


class CFLError(ValueError):
    """Explicit time step violates the stability bound."""

    def __init__(self, message: str, admissible_dt: float):
        super().__init__(message)
        self.admissible_dt = admissible_dt


class DivergenceError(ArithmeticError):
    """A sweep produced non-finite values."""

    def __init__(self, message: str, level: int):
        super().__init__(message)
        self.level = level


# --------------------------------------------------------------------------
# sublinear generator
# --------------------------------------------------------------------------

KINDS = ("standard", "linear", "eps_shrunk", "eta_symmetrized")


@dataclass(frozen=True)
class EtaContext:
    """Time/state at which an eta-symmetrised generator is evaluated."""

    t: float
    x: object = None


def _g_standard(a, lo, hi):
    a = np.asarray(a, dtype=float)
    return 0.5 * (hi * np.maximum(a, 0.0) - lo * np.maximum(-a, 0.0))


@dataclass(frozen=True)
class SublinearGenerator:
    """The one-dimensional function G(a) = 1/2 (hi a^+ - lo a^-) and variants.

    ``eta_value_source`` is a callable ``(t, x) -> eta`` used only by the
    ``eta_symmetrized`` kind; it is resolved through an :class:`EtaContext`.
    """

    kind: str
    sigma_low_sq: float
    sigma_high_sq: float
    eps: float = 0.0
    eta_value_source: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown generator kind {self.kind!r}")
        lo, hi = self.sigma_low_sq, self.sigma_high_sq
        if not (0.0 <= lo <= hi) or not math.isfinite(hi):
            raise ConfigurationError(f"need 0 <= sigma_low_sq <= sigma_high_sq, got {lo}, {hi}")
        if self.kind == "linear" and not (lo == hi == 1.0):
            raise ConfigurationError("linear generator has sigma_low_sq = sigma_high_sq = 1")
        if self.kind == "eps_shrunk":
            if not (0.0 <= self.eps <= (hi - lo) / 2):
                raise ConfigurationError(f"eps must lie in [0, {(hi - lo) / 2}], got {self.eps}")
        elif self.eps != 0.0:
            raise ConfigurationError("eps is only meaningful for the eps_shrunk kind")
        if self.kind == "eta_symmetrized" and self.eta_value_source is None:
            raise ConfigurationError("eta_symmetrized generator needs an eta_value_source")

    # constructors -------------------------------------------------------
    @classmethod
    def standard(cls, sigma_low_sq: float, sigma_high_sq: float) -> "SublinearGenerator":
        return cls("standard", float(sigma_low_sq), float(sigma_high_sq))

    @classmethod
    def linear(cls) -> "SublinearGenerator":
        return cls("linear", 1.0, 1.0)

    @classmethod
    def eps_shrunk(cls, sigma_low_sq, sigma_high_sq, eps) -> "SublinearGenerator":
        return cls("eps_shrunk", float(sigma_low_sq), float(sigma_high_sq), float(eps))

    @classmethod
    def eta_symmetrized(cls, sigma_low_sq, sigma_high_sq, eta_value_source) -> "SublinearGenerator":
        if not callable(eta_value_source):
            value = float(eta_value_source)
            eta_value_source = lambda t, x, _v=value: _v  # noqa: E731
        return cls("eta_symmetrized", float(sigma_low_sq), float(sigma_high_sq),
                   eta_value_source=eta_value_source)

    # bounds used by the schemes ------------------------------------------
    @property
    def variance_bounds(self) -> tuple[float, float]:
        """Effective (low, high) variance rates of the uncertainty set."""
        if self.kind == "eps_shrunk":
            return self.sigma_low_sq + self.eps, self.sigma_high_sq - self.eps
        return self.sigma_low_sq, self.sigma_high_sq

    @property
    def max_variance(self) -> float:
        # twice the Lipschitz constant of a -> G(a); drives the CFL bound
        return self.variance_bounds[1]

    @property
    def beta(self) -> float:
        if self.sigma_low_sq <= 0:
            raise ConfigurationError("beta = hi/lo needs sigma_low_sq > 0")
        return self.sigma_high_sq / self.sigma_low_sq

    @property
    def gamma(self) -> float:
        b = self.beta
        return (b - 1.0) / (b + 1.0)

    def __call__(self, a, context: Optional[EtaContext] = None):
        return eval_generator(self, a, context)


def eval_generator(g: SublinearGenerator, a, context: Optional[EtaContext] = None):
    """Evaluate G(a); arrays are handled elementwise."""
    if g.kind in ("standard", "linear", "eps_shrunk"):
        lo, hi = g.variance_bounds
        out = _g_standard(a, lo, hi)
    else:
        if context is None:
            raise ConfigurationError("eta_symmetrized generator evaluated without an EtaContext")
        eta = np.asarray(g.eta_value_source(context.t, context.x), dtype=float)
        lo, hi = g.sigma_low_sq, g.sigma_high_sq
        out = 0.5 * (_g_standard(np.add(a, eta), lo, hi) + _g_standard(np.subtract(a, eta), lo, hi))
    return out if np.ndim(out) else float(out)


# --------------------------------------------------------------------------
# grids and partitions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceGrid:
    x_min: float
    x_max: float
    n_nodes: int

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise ConfigurationError(f"x_min < x_max required, got {self.x_min}, {self.x_max}")
        if self.n_nodes < 3:
            raise ConfigurationError("a grid needs at least 3 nodes")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_nodes)

    @classmethod
    def centered(cls, center: float, half_width: float, n_nodes: int) -> "SpaceGrid":
        return cls(center - half_width, center + half_width, n_nodes)

    @classmethod
    def from_spacing(cls, center: float, half_width: float, dx: float) -> "SpaceGrid":
        """Symmetric grid around ``center`` whose spacing is exactly ``dx``.

        The half-width is rounded up to a whole number of cells.
        """
        cells = int(math.ceil(half_width / dx - 1e-9))
        return cls(center - cells * dx, center + cells * dx, 2 * cells + 1)


@dataclass(frozen=True)
class TimePartition:
    times: tuple

    def __post_init__(self):
        ts = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", ts)
        if len(ts) < 2 or ts[0] != 0.0:
            raise ConfigurationError("partition must start at 0 and have at least one interval")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError("partition times must be strictly increasing")

    @property
    def T(self) -> float:
        return self.times[-1]

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    @classmethod
    def uniform(cls, T: float, n: int) -> "TimePartition":
        return cls(tuple(k * T / n for k in range(n + 1)))


# --------------------------------------------------------------------------
# terminal data and cylinder objects
# --------------------------------------------------------------------------


def _growth_ok(values, points, degree, coeff, rtol=1e-9):
    bound = coeff * (1.0 + np.abs(points) ** degree)
    return bool(np.all(np.abs(values) <= bound * (1 + rtol) + 1e-300))


@dataclass(frozen=True)
class TerminalFunction:
    """phi(x) with a declared bound |phi(x)| <= C (1 + |x|^d)."""

    evaluate: Callable
    growth_degree: int = 0
    growth_coeff: float = float("inf")
    name: str = ""

    def __call__(self, x):
        return np.asarray(self.evaluate(np.asarray(x, dtype=float)), dtype=float)

    def check_growth(self, xs) -> bool:
        xs = np.asarray(xs, dtype=float)
        return _growth_ok(self(xs), xs, self.growth_degree, self.growth_coeff)


@dataclass(frozen=True)
class CylinderFunctional:
    """xi(omega) = phi(omega(t_1), ..., omega(t_n)).

    ``phi`` takes n broadcastable arrays, one per observation time.
    """

    times: tuple
    phi: Callable
    growth_degree: int = 0
    growth_coeff: float = float("inf")
    T: Optional[float] = None

    def __post_init__(self):
        ts = tuple(float(t) for t in np.atleast_1d(self.times))
        object.__setattr__(self, "times", ts)
        if not ts:
            raise ConfigurationError("a cylinder functional needs at least one time")
        if ts[0] <= 0 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError("cylinder times must satisfy 0 < t_1 < ... < t_n")
        if self.T is None:
            object.__setattr__(self, "T", ts[-1])
        elif ts[-1] > self.T:
            raise ConfigurationError("cylinder times must lie in (0, T]")

    @property
    def arity(self) -> int:
        return len(self.times)

    def __call__(self, *values):
        return np.asarray(self.phi(*values), dtype=float)

    def _combine(self, other, op):
        if isinstance(other, CylinderFunctional):
            if other.times != self.times:
                raise ConfigurationError("combining functionals requires shared times")
            p1, p2 = self.phi, other.phi
            return CylinderFunctional(self.times, lambda *v: op(p1(*v), p2(*v)), T=self.T)
        c = float(other)
        p1 = self.phi
        return CylinderFunctional(self.times, lambda *v: op(p1(*v), c), T=self.T)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __neg__(self):
        p = self.phi
        return CylinderFunctional(self.times, lambda *v: -np.asarray(p(*v), dtype=float),
                                  self.growth_degree, self.growth_coeff, self.T)

    def scale(self, lam: float) -> "CylinderFunctional":
        p = self.phi
        return CylinderFunctional(self.times, lambda *v: lam * np.asarray(p(*v), dtype=float),
                                  self.growth_degree, abs(lam) * self.growth_coeff, self.T)

    def maximum(self, other: "CylinderFunctional") -> "CylinderFunctional":
        return self._combine(other, np.maximum)

    @classmethod
    def constant(cls, c: float, times=(1.0,)) -> "CylinderFunctional":
        return cls(times, lambda *v: np.full(np.broadcast(*v).shape, float(c)), 0, abs(c))


@dataclass(frozen=True)
class StepProcess:
    """Piecewise-constant process on left-open intervals of a partition.

    ``coefficients[k]`` maps the tuple of path values at t_1..t_k (arrays) to
    the value on (t_k, t_{k+1}].
    """

    partition: TimePartition
    coefficients: tuple
    bound: float = float("inf")

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if len(self.coefficients) != self.partition.n_intervals:
            raise ConfigurationError("one coefficient per partition interval required")

    def interval_index(self, t: float) -> int:
        ts = self.partition.times
        if not (0.0 < t <= ts[-1] + 1e-12):
            raise ValueError(f"t={t} outside (0, T]")
        return max(0, int(np.searchsorted(ts, t, side="left")) - 1)

    def value(self, t: float, knot_values: Sequence) -> np.ndarray:
        k = self.interval_index(t)
        return np.asarray(self.coefficients[k](*knot_values[:k]), dtype=float)

    def check_bound(self, samples: Sequence[Sequence[float]]) -> bool:
        for k, c in enumerate(self.coefficients):
            for s in samples:
                if abs(float(c(*s[:k]))) > self.bound:
                    return False
        return True

    @classmethod
    def constant(cls, c: float, T: float = 1.0) -> "StepProcess":
        return cls(TimePartition((0.0, T)), (lambda *v: c,), abs(c))


@dataclass(frozen=True)
class NumericsConfig:
    """Discretisation settings for PDE-based evaluations."""

    n_nodes: int = 201
    half_width_multiplier: float = 6.0
    cfl_safety: float = 0.9
    dt: Optional[float] = None
    interpolation: str = "linear"
    tol: float = 1e-8
    max_arity: int = 3

    def __post_init__(self):
        if self.n_nodes < 3 or self.half_width_multiplier <= 0 or self.tol <= 0:
            raise ConfigurationError("numerics settings must be positive")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ConfigurationError("cfl_safety must lie in (0, 1]")
        if self.dt is not None and self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.interpolation != "linear":
            raise ConfigurationError("only piecewise-linear interpolation is supported")


def default_domain(g: SublinearGenerator, T: float, center: float = 0.0,
                   multiplier: float = 6.0, n_nodes: int = 201) -> SpaceGrid:
    """Grid of half-width ``multiplier * sigma_high * sqrt(T)`` around ``center``."""
    if T <= 0:
        raise ConfigurationError("horizon T must be positive")
    half = multiplier * math.sqrt(g.sigma_high_sq * T)
    if half <= 0:
        raise ConfigurationError("degenerate generator (sigma_high = 0) has no natural domain")
    return SpaceGrid.centered(center, half, n_nodes)
