"""Command-line entry point: ``gcalc {gheat,expect,bsde,simulate,verify}``.

Each run reads one JSON config.  Flags override environment variables
(``GCALC_SEED``, ``GCALC_WORKERS``, ``GCALC_TOL``, ``GCALC_OUT``,
``GCALC_CONFIG``), which override values in the config.

Exit codes: 0 ok, 2 bad config or usage, 3 CFL rejection, 4 divergence,
5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from .core import (
    CFLError,
    ConfigurationError,
    CylinderFunctional,
    DivergenceError,
    NumericsConfig,
    SpaceGrid,
    SublinearGenerator,
    TerminalFunction,
)
from .csvio import fmt, write_rows
from .cylinder import conditional_g_expectation, g_mean_bounds
from .gbsde import extract_bsde_processes, solve_markovian_gbsde
from .gheat import MarkovDriver
from .scenarios import McConfig, Scenario, estimate_expectation_lower, simulate

EXIT_OK, EXIT_CONFIG, EXIT_CFL, EXIT_DIVERGENCE, EXIT_VERIFY = 0, 2, 3, 4, 5

log = logging.getLogger("gcalc")


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# config decoding
# --------------------------------------------------------------------------


def _get(d, key, default=None, kind=float):
    if key not in d or d[key] is None:
        return default
    try:
        return kind(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {d[key]!r}") from exc


def build_generator(conf: dict) -> SublinearGenerator:
    kind = conf.get("kind", "standard")
    lo = _get(conf, "sigma_low_sq", 1.0)
    hi = _get(conf, "sigma_high_sq", 1.0)
    if kind == "linear":
        return SublinearGenerator.linear()
    if kind == "standard":
        return SublinearGenerator.standard(lo, hi)
    if kind == "eps_shrunk":
        return SublinearGenerator.eps_shrunk(lo, hi, _get(conf, "eps", 0.0))
    if kind == "eta_symmetrized":
        return SublinearGenerator.eta_symmetrized(lo, hi, _get(conf, "eta", 0.0))
    raise ConfigError(f"unknown generator kind {kind!r}")


def build_terminal(conf: dict) -> TerminalFunction:
    """Named terminal families (no embedded code)."""
    fam = conf.get("family")
    if fam == "polynomial":
        c = np.asarray(conf.get("coefficients", [0.0]), dtype=float)
        return TerminalFunction(lambda x: np.polynomial.polynomial.polyval(x, c), len(c) - 1,
                                float(np.abs(c).sum()), "polynomial")
    if fam in ("cos", "sin"):
        a, w, s = _get(conf, "amplitude", 1.0), _get(conf, "frequency", 1.0), _get(conf, "shift", 0.0)
        f = np.cos if fam == "cos" else np.sin
        return TerminalFunction(lambda x: a * f(w * (x - s)), 0, abs(a), fam)
    if fam in ("call", "put"):
        k = _get(conf, "strike", 0.0)
        sign = 1.0 if fam == "call" else -1.0
        return TerminalFunction(lambda x: np.maximum(sign * (x - k), 0.0), 1, 1.0 + abs(k), fam)
    if fam == "butterfly":
        c, w = _get(conf, "center", 0.0), _get(conf, "width", 1.0)
        if w <= 0:
            raise ConfigError("butterfly width must be positive")
        return TerminalFunction(lambda x: np.maximum(w - np.abs(x - c), 0.0), 0, w, fam)
    if fam == "constant":
        v = _get(conf, "value", 0.0)
        return TerminalFunction(lambda x: np.full(np.shape(x), v), 0, abs(v), fam)
    raise ConfigError(f"unknown terminal family {fam!r}")


def build_driver(conf: Optional[dict]) -> Optional[MarkovDriver]:
    if not conf:
        return None
    fam = conf.get("family", "zero")
    if fam == "zero":
        return None
    if fam == "discount":
        r = _get(conf, "rate", 0.0)
        return MarkovDriver(lambda t, x, y, z, w: -r * y, lipschitz_y=abs(r), name="discount")
    if fam == "drift":
        mu = _get(conf, "mu", 0.0)
        return MarkovDriver(lambda t, x, y, z, w: mu * z, lipschitz_z=abs(mu), name="drift")
    if fam == "constant":
        v = _get(conf, "value", 0.0)
        return MarkovDriver(lambda t, x, y, z, w: v * np.ones_like(y), name="constant")
    raise ConfigError(f"unknown driver family {fam!r}")


def build_grid(conf: dict, g: SublinearGenerator, T: float) -> SpaceGrid:
    conf = conf or {}
    if "x_min" in conf:
        return SpaceGrid(_get(conf, "x_min"), _get(conf, "x_max"), _get(conf, "n_nodes", 201, int))
    center = _get(conf, "center", 0.0)
    half = _get(conf, "half_width")
    if half is None:
        half = _get(conf, "multiplier", 6.0) * math.sqrt(g.sigma_high_sq * T)
    if "dx" in conf:
        return SpaceGrid.from_spacing(center, half, _get(conf, "dx"))
    return SpaceGrid.centered(center, half, _get(conf, "n_nodes", 201, int))


def build_scenario(conf: dict, g: SublinearGenerator, T: float) -> Scenario:
    kind = conf.get("kind", "constant")
    bounds = g.variance_bounds
    if kind == "constant":
        return Scenario.constant(_get(conf, "value", bounds[1]), bounds)
    if kind == "switch":
        return Scenario.switch(_get(conf, "first"), _get(conf, "second"), _get(conf, "at"), bounds)
    if kind == "bang_bang":
        return Scenario.bang_bang(g, _get(conf, "n", 2, int), T, _get(conf, "sign", 1.0))
    raise ConfigError(f"unknown scenario kind {kind!r}")


def _steps(cfg: dict, T: float):
    st = cfg.get("steps", {}) or {}
    n = _get(st, "n_steps", None, int)
    dt = _get(st, "dt")
    if n is None and dt is not None:
        n = max(1, int(round(T / dt)))
    return n, _get(st, "cfl_safety", 0.9), _get(st, "store_every", 1, int)


def _mc(cfg: dict, seed: int, workers: int) -> McConfig:
    mc = cfg.get("mc", {}) or {}
    return McConfig(_get(mc, "n_paths", 1000, int), _get(mc, "dt", 2.0**-8), seed,
                    _get(mc, "confidence", 3.0), workers)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _surface(cfg):
    T = _get(cfg, "T", 1.0)
    g = build_generator(cfg.get("generator", {}))
    if "terminal" not in cfg:
        raise ConfigError("config needs a 'terminal' section")
    phi = build_terminal(cfg["terminal"])
    drv = build_driver(cfg.get("driver"))
    grid = build_grid(cfg.get("grid"), g, T)
    n, safety, store = _steps(cfg, T)
    surf = solve_markovian_gbsde(g, drv, phi, grid, n, T, cfl_safety=safety, store_every=store)
    return g, drv, surf, T


def cmd_gheat(cfg, args) -> int:
    _, _, surf, _ = _surface(cfg)
    if args.out:
        surf.to_csv(args.out)
    print(f"u0={fmt(surf.u0(_get(cfg.get('grid', {}) or {}, 'center', 0.0)))}")
    return EXIT_OK


def _functional(conf: dict, T: float):
    """xi = phi(sum_i w_i omega(t_i)); returns (xi, phi, w)."""
    times = tuple(float(t) for t in conf.get("times", [T]))
    w = np.asarray(conf.get("weights", [0.0] * (len(times) - 1) + [1.0]), dtype=float)
    if len(w) != len(times):
        raise ConfigError("functional weights must match its times")
    phi = build_terminal(conf.get("terminal", {"family": "polynomial", "coefficients": [0, 0, 1]}))
    xi = CylinderFunctional(times, lambda *v: phi(sum(wi * vi for wi, vi in zip(w, v))), T=T)
    return xi, phi, w


def cmd_expect(cfg, args) -> int:
    T = _get(cfg, "T", 1.0)
    g = build_generator(cfg.get("generator", {}))
    xi, phi, w = _functional(cfg.get("functional", {}), T)
    num = NumericsConfig(**{k: v for k, v in (cfg.get("numerics") or {}).items()})
    cond = cfg.get("conditional")
    rows = []
    if cond:
        obs = {float(k): float(v) for k, v in cond.get("observed", {}).items()}
        value = conditional_g_expectation(xi, _get(cond, "t"), obs, g, num)
        rows.append(("conditional", value, 0.0, None, None))
    else:
        lower, value = g_mean_bounds(xi, g, num)
        rows += [("upper_pde", value, 0.0, None, None), ("lower_pde", lower, 0.0, None, None)]
    if cfg.get("mc") and not cond:
        seed = _require_seed(args)
        mc = _mc(cfg, seed, args.workers)
        family = [build_scenario(s, g, T) for s in cfg.get("family", [{"kind": "constant"}])]
        cols = [int(round(t / mc.dt)) for t in xi.times]
        est = estimate_expectation_lower(lambda b: phi(b.b[:, cols] @ w), family, T, mc)
        rows.append(est.row("mc_lower"))
    if args.out:
        write_rows(args.out, ("name", "estimate", "stderr", "n_paths", "seed"), rows)
    print(f"value={fmt(value)}")
    return EXIT_OK


def cmd_bsde(cfg, args) -> int:
    seed = _require_seed(args)
    g, drv, surf, T = _surface(cfg)
    batch = simulate(build_scenario(cfg.get("scenario", {}), g, T), T, _mc(cfg, seed, args.workers))
    sol = extract_bsde_processes(surf, batch, g, drv)
    if args.out:
        sol.to_csv(args.out)
    print(f"u0={fmt(surf.u0())} max_k_increase={fmt(sol.max_k_increase())}")
    return EXIT_OK


def cmd_simulate(cfg, args) -> int:
    seed = _require_seed(args)
    T = _get(cfg, "T", 1.0)
    g = build_generator(cfg.get("generator", {}))
    batch = simulate(build_scenario(cfg.get("scenario", {}), g, T), T, _mc(cfg, seed, args.workers))
    if args.out:
        batch.to_csv(args.out)
    print(f"paths={batch.n_paths} steps={len(batch.times) - 1}")
    return EXIT_OK


def cmd_verify(cfg, args) -> int:
    from .verify import VerifyContext, run_checks, write_report

    seed = _require_seed(args)
    ctx = VerifyContext(seed, args.workers, args.tol if args.tol is not None else _get(cfg, "tol", 1e-8))

    def show(r):
        print(f"{'PASS' if r.passed else 'FAIL'} {r.check}", flush=True)

    results = run_checks(ctx, cfg.get("only"), progress=show)
    if args.out:
        write_report(results, args.out)
    n_fail = sum(not r.passed for r in results)
    print(f"checks={len(results)} failed={n_fail}")
    return EXIT_VERIFY if n_fail else EXIT_OK


COMMANDS = {"gheat": cmd_gheat, "expect": cmd_expect, "bsde": cmd_bsde,
            "simulate": cmd_simulate, "verify": cmd_verify}
CONFIG_OPTIONAL = {"verify"}


def _require_seed(args) -> int:
    if args.seed is None:
        raise ConfigError("--seed (or GCALC_SEED) is required for stochastic commands")
    return args.seed


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcalc", description="G-expectation numerics")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _apply_env(args) -> None:
    env = os.environ
    for name, conv in (("config", str), ("out", str), ("seed", int), ("workers", int), ("tol", float)):
        key = "GCALC_" + name.upper()
        if getattr(args, name) is None and env.get(key):
            setattr(args, name, conv(env[key]))
    if args.workers is None:
        args.workers = 1


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_env(args)
        if args.config is None and args.command not in CONFIG_OPTIONAL:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except CFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"admissible_dt={fmt(exc.admissible_dt)}")
        return EXIT_CFL
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ConfigurationError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
