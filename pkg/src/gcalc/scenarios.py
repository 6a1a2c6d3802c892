"""Volatility scenarios, path simulation and Monte-Carlo lower bounds.

Every scenario is one prior in the uncertainty set behind G, so the mean of a
payoff under it can never exceed the PDE value.  All MC numbers produced here
are therefore lower-bound estimates of the sublinear expectation.

Normal variates are drawn from numpy's counter-based Philox generator: the
variate of (path p, step j) sits at stream position p * n_steps + j of the
stream keyed by the seed, so any chunking of paths across workers reproduces
the same numbers bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .core import ConfigurationError, StepProcess, SublinearGenerator, eval_generator
from .csvio import write_rows

CHUNK = 4096


@dataclass(frozen=True)
class Scenario:
    """A volatility control sigma^2(.) taking values in ``bounds``.

    ``constant``: ``values = (s2,)``.  ``piecewise_constant``: ``values[i]``
    applies on (breakpoints[i-1], breakpoints[i]] with breakpoints interior
    switch times.  ``feedback``: ``fn(t, x) -> s2`` evaluated at the left end
    of every step.
    """

    kind: str
    values: tuple = ()
    breakpoints: tuple = ()
    fn: Optional[Callable] = field(default=None, compare=False)
    bounds: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "breakpoints", tuple(float(v) for v in self.breakpoints))
        if self.kind == "constant":
            ok = len(self.values) == 1
        elif self.kind == "piecewise_constant":
            ok = len(self.values) == len(self.breakpoints) + 1 and all(
                b > a for a, b in zip(self.breakpoints, self.breakpoints[1:]))
        elif self.kind == "feedback":
            ok = callable(self.fn)
        else:
            raise ConfigurationError(f"unknown scenario kind {self.kind!r}")
        if not ok:
            raise ConfigurationError(f"malformed {self.kind} scenario")
        if self.bounds is not None:
            lo, hi = self.bounds
            if any(v < lo - 1e-15 or v > hi + 1e-15 for v in self.values):
                raise ConfigurationError(f"scenario {self.label} leaves [{lo}, {hi}]")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "constant":
            return f"const({self.values[0]:g})"
        if self.kind == "piecewise_constant":
            return "pw(" + ";".join(f"{v:g}" for v in self.values) + ")"
        return "feedback"

    # constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, s2, bounds=None) -> "Scenario":
        return cls("constant", (s2,), bounds=bounds)

    @classmethod
    def switch(cls, first, second, at, bounds=None) -> "Scenario":
        return cls("piecewise_constant", (first, second), (at,), bounds=bounds)

    @classmethod
    def bang_bang(cls, g: SublinearGenerator, n: int, T: float, sign: float = 1.0) -> "Scenario":
        """sigma_high^2 where sign * delta_n > 0, sigma_low^2 elsewhere."""
        lo, hi = g.variance_bounds
        vals = [(hi if sign * (-1) ** i > 0 else lo) for i in range(n)]
        return cls("piecewise_constant", vals, tuple(i * T / n for i in range(1, n)),
                   bounds=(lo, hi), name=f"bangbang(n={n},{'+' if sign > 0 else '-'})")

    @classmethod
    def feedback(cls, fn, bounds=None, name="feedback") -> "Scenario":
        return cls("feedback", fn=fn, bounds=bounds, name=name)

    # ----------------------------------------------------------------------
    def step_variances(self, times: np.ndarray) -> np.ndarray:
        """sigma^2 on each step (t_j, t_{j+1}] for open-loop kinds."""
        if self.kind == "constant":
            return np.full(len(times) - 1, self.values[0])
        if self.kind == "piecewise_constant":
            mid = 0.5 * (times[1:] + times[:-1])
            return np.asarray(self.values)[np.searchsorted(self.breakpoints, mid)]
        raise ConfigurationError("feedback scenarios have no open-loop variance path")


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 1000
    dt: float = 2.0**-8
    seed: int = 0
    confidence: float = 3.0
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1 or self.dt <= 0 or self.workers < 1:
            raise ConfigurationError("MC settings must be positive")


@dataclass(frozen=True)
class SamplePath:
    times: np.ndarray
    b_values: np.ndarray
    qv_values: np.ndarray
    dqv: np.ndarray
    scenario: Scenario
    seed: int
    path_index: int


@dataclass
class PathBatch:
    """Simulated paths stored row-wise: ``b[p, j]`` is B at ``times[j]`` on path p."""

    times: np.ndarray
    b: np.ndarray
    dqv: np.ndarray
    scenario: Scenario
    seed: int
    path_ids: np.ndarray

    @property
    def qv(self) -> np.ndarray:
        q = np.zeros_like(self.b)
        np.cumsum(self.dqv, axis=1, out=q[:, 1:])
        return q

    @property
    def n_paths(self) -> int:
        return self.b.shape[0]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def __len__(self):
        return self.n_paths

    def __getitem__(self, i) -> SamplePath:
        qv = self.qv[i]
        return SamplePath(self.times, self.b[i], qv, self.dqv[i], self.scenario, self.seed,
                          int(self.path_ids[i]))

    def __iter__(self):
        return (self[i] for i in range(self.n_paths))

    def rows(self):
        qv = self.qv
        for p in range(self.n_paths):
            pid = int(self.path_ids[p])
            for j, t in enumerate(self.times):
                yield (pid, t, self.b[p, j], qv[p, j])

    def to_csv(self, target) -> None:
        write_rows(target, ("path_id", "t", "b", "qv"), self.rows())


def n_steps_for(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError(f"dt={dt} does not divide T={T}")
    return n


def standard_normals(seed: int, first_path: int, n_paths: int, n_steps: int) -> np.ndarray:
    """Inverse-CDF normals for paths [first_path, first_path + n_paths)."""
    start = first_path * n_steps
    bg = np.random.Philox(key=int(seed))
    bg.advance(start // 4)
    skip = start % 4
    raw = bg.random_raw(skip + n_paths * n_steps)[skip:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u).reshape(n_paths, n_steps)


def _simulate_chunk(scenario, times, dt, seed, first, count):
    n_steps = len(times) - 1
    z = standard_normals(seed, first, count, n_steps)
    if scenario.kind == "feedback":
        b = np.zeros((count, n_steps + 1))
        dqv = np.empty((count, n_steps))
        for j in range(n_steps):
            s2 = np.broadcast_to(np.asarray(scenario.fn(times[j], b[:, j]), dtype=float), (count,))
            if scenario.bounds is not None:
                lo, hi = scenario.bounds
                if np.any(s2 < lo - 1e-15) or np.any(s2 > hi + 1e-15):
                    raise ConfigurationError("feedback control left its variance bounds")
            dqv[:, j] = s2 * dt
            b[:, j + 1] = b[:, j] + np.sqrt(s2 * dt) * z[:, j]
        return b, dqv
    s2 = scenario.step_variances(times)
    dqv = np.broadcast_to(s2 * dt, (count, n_steps)).copy()
    b = np.zeros((count, n_steps + 1))
    np.cumsum(np.sqrt(s2 * dt) * z, axis=1, out=b[:, 1:])
    return b, dqv


def simulate(scenario: Scenario, T: float, cfg: McConfig, first_path: int = 0) -> PathBatch:
    n_steps = n_steps_for(T, cfg.dt)
    times = np.arange(n_steps + 1) * cfg.dt
    times[-1] = T
    starts = list(range(first_path, first_path + cfg.n_paths, CHUNK))
    counts = [min(CHUNK, first_path + cfg.n_paths - s) for s in starts]
    job = lambda sc: _simulate_chunk(scenario, times, cfg.dt, cfg.seed, *sc)  # noqa: E731
    if cfg.workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(job, zip(starts, counts)))
    else:
        parts = [job(sc) for sc in zip(starts, counts)]
    b = np.concatenate([p[0] for p in parts])
    dqv = np.concatenate([p[1] for p in parts])
    ids = np.arange(first_path, first_path + cfg.n_paths)
    return PathBatch(times, b, dqv, scenario, cfg.seed, ids)


# --------------------------------------------------------------------------
# lower-bound estimation
# --------------------------------------------------------------------------


def sample_mean(x: np.ndarray) -> tuple[float, float]:
    """Mean and standard error; exact for constant samples."""
    x = np.asarray(x, dtype=float).ravel()
    x0 = x[0]
    d = x - x0
    mean = x0 + d.mean()
    se = float(d.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(mean), se


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    n_paths: int
    seed: int
    best: str = ""
    per_scenario: list = field(default_factory=list)

    def __iter__(self):
        yield self.estimate
        yield self.stderr

    def row(self, name):
        return (name, self.estimate, self.stderr, self.n_paths, self.seed)


def estimate_expectation_lower(payoff: Callable, family: Sequence[Scenario], T: float,
                               cfg: McConfig) -> MCEstimate:
    """Max over ``family`` of the MC mean of ``payoff(batch)`` (a per-path array)."""
    family = list(family)
    if not family:
        raise ValueError("scenario family is empty")
    per = []
    for sc in family:
        batch = simulate(sc, T, cfg)
        vals = np.broadcast_to(np.asarray(payoff(batch), dtype=float), (batch.n_paths,))
        m, se = sample_mean(vals)
        per.append((sc.label, m, se))
    # first maximiser wins ties, so enlarging the family never lowers the estimate
    best = max(range(len(per)), key=lambda i: (per[i][1], -i))
    return MCEstimate(per[best][1], per[best][2], cfg.n_paths, cfg.seed, per[best][0], per)


def write_estimates(target, named: Iterable[tuple[str, MCEstimate]]) -> None:
    write_rows(target, ("name", "estimate", "stderr", "n_paths", "seed"),
               (est.row(name) for name, est in named))


def default_family(g: SublinearGenerator, T: float, cfg: McConfig, n_ladder: int = 9,
                   n_switch: int = 8, convexity_hint: Optional[Callable] = None) -> list:
    """Constant ladder, single-switch bang-bang controls and optional sign feedback.

    Switch times are the ``n_switch`` evenly spaced interior points rounded to
    the simulation grid.
    """
    lo, hi = g.variance_bounds
    bounds = (lo, hi)
    fam = [Scenario.constant(s, bounds) for s in sorted(set(np.linspace(lo, hi, n_ladder)))]
    if hi > lo:
        n_steps = n_steps_for(T, cfg.dt)
        taus = sorted({round(i * n_steps / (n_switch + 1)) * cfg.dt for i in range(1, n_switch + 1)})
        for tau in taus:
            if 0 < tau < T:
                fam.append(Scenario.switch(lo, hi, tau, bounds))
                fam.append(Scenario.switch(hi, lo, tau, bounds))
        if convexity_hint is not None:
            fam.append(Scenario.feedback(
                lambda t, x: np.where(np.asarray(convexity_hint(t, x)) >= 0, hi, lo), bounds,
                name="sign-feedback"))
    return fam


def delta_n(s, n: int, T: float = 1.0):
    """sum_i (-1)^i 1_{(iT/n, (i+1)T/n]}(s)."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0) or np.any(s_arr > T * (1 + 1e-12)):
        raise ValueError("delta_n is defined on (0, T]")
    i = np.ceil(np.round(s_arr * n / T, 12)).astype(int) - 1
    out = np.where(i % 2 == 0, 1, -1)
    return int(out) if out.ndim == 0 else out


def delta_n_steps(times: np.ndarray, n: int, T: float) -> np.ndarray:
    """delta_n evaluated on each simulation step (via its midpoint)."""
    return delta_n(0.5 * (times[1:] + times[:-1]), n, T)


# --------------------------------------------------------------------------
# norm estimators (lower bounds of the sublinear norms, returned as p-th powers)
# --------------------------------------------------------------------------


def step_values(process: StepProcess, batch: PathBatch) -> np.ndarray:
    """Values of a step process on each simulation step, shape (n_paths, n_steps)."""
    times = batch.times
    ts = process.partition.times
    cols = [int(round(tk / batch.dt)) for tk in ts[1:-1]]
    knots = batch.b[:, cols] if cols else np.zeros((batch.n_paths, 0))
    out = np.empty((batch.n_paths, len(times) - 1))
    for j in range(len(times) - 1):
        k = int(np.searchsorted(ts, times[j], side="right")) - 1
        k = min(max(k, 0), len(process.coefficients) - 1)
        c = process.coefficients[k](*[knots[:, i] for i in range(k)])
        out[:, j] = np.broadcast_to(np.asarray(c, dtype=float), (batch.n_paths,))
    return out


def _integrand(process, batch):
    if isinstance(process, StepProcess):
        return step_values(process, batch)
    return np.asarray(process(batch), dtype=float)


def _family(g, T, cfg, family):
    return list(family) if family is not None else default_family(g, T, cfg)


def norm_m(process, p: float, g: SublinearGenerator, T: float, cfg: McConfig, family=None) -> MCEstimate:
    """E^G[int_0^T |eta_s|^p ds]."""
    if p < 1:
        raise ValueError("p >= 1 required")
    fn = lambda b: (np.abs(_integrand(process, b)) ** p * np.diff(b.times)).sum(axis=1)  # noqa: E731
    return estimate_expectation_lower(fn, _family(g, T, cfg, family), T, cfg)


def norm_h(process, p: float, g: SublinearGenerator, T: float, cfg: McConfig, family=None) -> MCEstimate:
    """E^G[(int_0^T |eta_s|^2 ds)^(p/2)]."""
    if p <= 1:
        raise ValueError("p > 1 required")
    fn = lambda b: ((_integrand(process, b) ** 2 * np.diff(b.times)).sum(axis=1)) ** (p / 2)  # noqa: E731
    return estimate_expectation_lower(fn, _family(g, T, cfg, family), T, cfg)


def norm_s(values: Callable, p: float, g: SublinearGenerator, T: float, cfg: McConfig,
           family=None) -> MCEstimate:
    """E^G[sup_t |u_t|^p]; ``values(batch)`` returns u at every path time."""
    if p <= 1:
        raise ValueError("p > 1 required")
    fn = lambda b: (np.abs(np.asarray(values(b), dtype=float)) ** p).max(axis=1)  # noqa: E731
    return estimate_expectation_lower(fn, _family(g, T, cfg, family), T, cfg)


def norm_m_tilde(process, g: SublinearGenerator, T: float, cfg: McConfig, family=None) -> MCEstimate:
    """int_0^T E^G[|eta_s|^2] ds (squared form, p = 2 only).

    The outer sup is taken per time step, then integrated; the reported
    standard error adds the per-step errors, so it is conservative.
    """
    best = None
    for sc in _family(g, T, cfg, family):
        batch = simulate(sc, T, cfg)
        sq = _integrand(process, batch) ** 2
        m = sq.mean(axis=0)
        se = sq.std(axis=0, ddof=1) / math.sqrt(batch.n_paths) if batch.n_paths > 1 else 0 * m
        if best is None:
            best = (m, se, np.diff(batch.times))
        else:
            take = m > best[0]
            best = (np.where(take, m, best[0]), np.where(take, se, best[1]), best[2])
    m, se, dts = best
    return MCEstimate(float((m * dts).sum()), float((se * dts).sum()), cfg.n_paths, cfg.seed, "per-step sup")


def _path_fields(u, batch):
    from .pathcalc import along_path

    return along_path(u, batch)


def norm_w12p(u, p: float, g: SublinearGenerator, T: float, cfg: McConfig, family=None) -> MCEstimate:
    """E^G[sup|u|^p + int (|D_t u|^p + |D_x^2 u|^p) ds + (int |D_x u|^2 ds)^(p/2)]."""

    def fn(b):
        ev = _path_fields(u, b)
        dt = np.diff(b.times)
        return ((np.abs(ev["value"]) ** p).max(axis=1)
                + ((np.abs(ev["dt"][:, :-1]) ** p + np.abs(ev["dxx"][:, :-1]) ** p) * dt).sum(axis=1)
                + ((ev["dx"][:, :-1] ** 2 * dt).sum(axis=1)) ** (p / 2))

    return estimate_expectation_lower(fn, _family(g, T, cfg, family), T, cfg)


def norm_w_half(u, p: float, g: SublinearGenerator, T: float, cfg: McConfig, family=None) -> MCEstimate:
    """E^G[sup|u|^p + (int |D_x u|^2 ds)^(p/2) + int |D_t u + G(D_x^2 u)|^p ds]."""

    def fn(b):
        ev = _path_fields(u, b)
        dt = np.diff(b.times)
        ag = ev["dt"][:, :-1] + eval_generator(g, ev["dxx"][:, :-1])
        return ((np.abs(ev["value"]) ** p).max(axis=1)
                + ((ev["dx"][:, :-1] ** 2 * dt).sum(axis=1)) ** (p / 2)
                + (np.abs(ag) ** p * dt).sum(axis=1))

    return estimate_expectation_lower(fn, _family(g, T, cfg, family), T, cfg)
