"""Command-line front end: ``hotscatter {simulate,analyze,cgf,profile,verify}``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import subprocess
import sys
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import __version__
from . import acceptance
from .analytic import confined_stationary, wandering_stationary
from .cgf import cgf_sweep, on_plateau
from .config import ExperimentConfig, load_config
from .exceptions import ConfigError, SolverError
from .model import BasicModel, ConfinedModel, WanderingModel
from .sampling import RngStream, interarrival_mean
from .selfconsistent import confined_profile, continuum_profile, wandering_profile
from .simulate import run_basic, run_replicas, summarize_replicas

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3
THREADS_ENV = "HOTSCATTER_THREADS"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable]) -> Path:
    """RFC-4180 CSV with a leading ``schema_version`` column."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version"] + header)
        for row in rows:
            w.writerow([SCHEMA_VERSION] + [fmt(v) for v in row])
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def build_info() -> dict:
    info = {"package": "hotscatter", "version": __version__, "numpy": np.__version__}
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        info["git"] = out.stdout.strip() if out.returncode == 0 else "unknown"
    except (OSError, subprocess.SubprocessError):
        info["git"] = "unknown"
    return info


def _workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def _summary(cfg: ExperimentConfig, command: str, **extra) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "seed": cfg.seed, "model": cfg.model,
            "config": cfg.source, "build": build_info(), **extra}


# -- simulate -----------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig) -> list[Path]:
    out = Path(cfg.out_dir)
    rng = RngStream(cfg.seed)
    model = cfg.build_model()
    rows = []
    if isinstance(model, BasicModel):
        q0, p0 = cfg.initial or (0.0, 1.0)
        rates = []
        for r in range(cfg.n_replicas):
            run = run_basic(model.beta, q0, p0, cfg.t_end, rng.substream(r))
            rates.append(run.n_collisions / cfg.t_end)
            rows.append((r, "collision_frequency", 0, rates[-1]))
        means = {"collision_frequency": [float(np.mean(rates))],
                 "expected_collision_frequency": [1.0 / float(interarrival_mean(model.beta))]}
    else:
        leds = run_replicas(model, cfg.t_end, cfg.n_replicas, rng, t_burn=cfg.t_burn, workers=_workers())
        for r, led in enumerate(leds):
            for key, val in led.rates().items():
                for i, v in enumerate(np.atleast_1d(val)):
                    rows.append((r, key, i, v))
        s = summarize_replicas(leds)
        for label, table in (("mean", s.mean), ("stderr", s.stderr)):
            for key, val in table.items():
                for i, v in enumerate(np.atleast_1d(val)):
                    rows.append((label, key, i, v))
        means = {k: np.atleast_1d(v).tolist() for k, v in s.mean.items()}
    csv_path = write_csv(out / f"{cfg.prefix}_simulate.csv", ["replica", "quantity", "index", "per_unit_time"], rows)
    js = write_json(out / f"{cfg.prefix}_simulate.json",
                    _summary(cfg, "simulate", t_end=cfg.t_end, t_burn=cfg.t_burn, n_replicas=cfg.n_replicas,
                             threads=_workers(), means=means))
    return [csv_path, js]


# -- analytic tables ----------------------------------------------------------

def _stationary_rows(model):
    if isinstance(model, WanderingModel):
        rep = wandering_stationary(model.profile, model.n_tracers)
        norm = [("Z_N", 0, rep.Z_N)]
    elif isinstance(model, ConfinedModel):
        rep = confined_stationary(model.profile)
        norm = [("Z_n", i, z) for i, z in enumerate(rep.Z_n)]
    else:
        raise ConfigError("stationary tables exist for the wandering and confined models")
    rows = [("temperature", i, t, "profile") for i, t in enumerate(rep.temperatures)]
    rows += [("current", i, j, "mean-current") for i, j in enumerate(rep.currents)]
    rows += [("energy_flow", i, e, "energy-balance") for i, e in enumerate(rep.energy_flows)]
    rows += [("collision_frequency", i, f, "collision-frequency") for i, f in enumerate(rep.frequencies)]
    rows += [("conductivity", i, k, "conductivity") for i, k in enumerate(rep.conductivities)]
    rows += [("entropy_rate", 0, rep.entropy_rate, "entropy-production")]
    rows += [(name, i, v, "normalization") for name, i, v in norm]
    return rows


def _profile_rows(cfg: ExperimentConfig):
    prof = cfg.build_profile()
    T = prof.temperatures
    N = prof.n_links
    h = continuum_profile(float(T[0]), float(T[-1]))
    if cfg.model == "confined":
        kappa = 1.0 / confined_stationary(prof).Z_n
    else:
        kappa = wandering_stationary(prof).conductivities
    kappa = np.append(kappa, math.nan)
    return [(n, T[n], h(n / N), kappa[n]) for n in range(N + 1)]


def _cgf_rows(cfg: ExperimentConfig):
    prof = cfg.build_profile()
    model = "confined" if cfg.model == "confined" else "wandering"
    n = cfg.cgf_link
    b = prof.betas
    d = float(b[n + 1] - b[n])
    lams = [float(l) for l in cfg.lambda_grid]
    res = cgf_sweep(prof, n, lams, model)
    mirror = cgf_sweep(prof, n, [d - l for l in lams], model)
    rows = []
    for lam, r, m in zip(lams, res, mirror):
        plateau = on_plateau(lam, float(b[n]), float(b[n + 1]))
        rows.append((lam, r.value, str(r.branch), r.root_residual, r.quadrature_error_bound,
                     abs(r.value - m.value), "cgf-plateau" if plateau else "cgf-root"))
    return rows


_CGF_HEADER = ["lambda", "f", "branch", "residual", "quadrature_error", "gc_gap", "formula"]
_PROFILE_HEADER = ["n", "T_n", "h_n_over_N", "kappa_n"]


def cmd_analyze(cfg: ExperimentConfig) -> list[Path]:
    out = Path(cfg.out_dir)
    model = cfg.build_model()
    paths = [write_csv(out / f"{cfg.prefix}_stationary.csv", ["quantity", "index", "value", "formula"],
                       _stationary_rows(model))]
    paths.append(write_csv(out / f"{cfg.prefix}_profile.csv", _PROFILE_HEADER, _profile_rows(cfg)))
    if cfg.lambda_grid:
        paths.append(write_csv(out / f"{cfg.prefix}_cgf.csv", _CGF_HEADER, _cgf_rows(cfg)))
    paths.append(write_json(out / f"{cfg.prefix}_analyze.json", _summary(cfg, "analyze", files=[p.name for p in paths])))
    return paths


def cmd_cgf(cfg: ExperimentConfig) -> list[Path]:
    if cfg.model not in ("wandering", "confined"):
        raise ConfigError("cgf sweeps need the wandering or confined model")
    if not cfg.lambda_grid:
        raise ConfigError("cgf needs cgf.lambda_grid or cgf.lambda_grid_file")
    return [write_csv(Path(cfg.out_dir) / f"{cfg.prefix}_cgf.csv", _CGF_HEADER, _cgf_rows(cfg))]


def cmd_profile(cfg: ExperimentConfig) -> list[Path]:
    if cfg.profile is None or cfg.profile.kind == "explicit":
        raise ConfigError("profile needs a linear or selfconsistent profile block")
    p = cfg.profile.params
    if cfg.profile.kind == "selfconsistent" and cfg.model == "confined":
        sol = confined_profile(p["T_L"], p["T_R"], p["N"])
    else:
        sol = wandering_profile(p["T_L"], p["T_R"], p["N"])
    path = write_csv(Path(cfg.out_dir) / f"{cfg.prefix}_profile.csv", _PROFILE_HEADER, _profile_rows(cfg))
    js = write_json(Path(cfg.out_dir) / f"{cfg.prefix}_profile.json",
                    _summary(cfg, "profile", flux=sol.flux, residual=sol.residual))
    return [path, js]


# -- verify -------------------------------------------------------------------

def _parse_overrides(items: Optional[list[str]]) -> dict:
    out: dict = {}
    for item in items or []:
        try:
            target, value = item.split("=", 1)
            key, param = target.split(".", 1)
        except ValueError:
            raise ConfigError(f"override must look like KEY.PARAM=VALUE, got {item!r}")
        if key not in acceptance.CRITERIA:
            raise ConfigError(f"unknown criterion {key!r}")
        if param not in acceptance.CRITERIA[key].defaults:
            raise ConfigError(f"criterion {key} has no parameter {param!r}")
        out.setdefault(key, {})[param] = json.loads(value)
    return out


def cmd_verify(fast: bool, seed: Optional[int], only: Optional[str], overrides, out_dir: Optional[str]) -> int:
    keys = only.split(",") if only else None
    if keys:
        bad = [k for k in keys if k not in acceptance.CRITERIA]
        if bad:
            raise ConfigError(f"unknown criteria: {', '.join(bad)}")
    results = acceptance.run_suite(keys, fast=fast, seed=acceptance.DEFAULT_SEED if seed is None else seed,
                                   overrides=overrides, echo=print)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    if out_dir:
        write_json(Path(out_dir) / "verify.json",
                   {"schema_version": SCHEMA_VERSION, "build": build_info(),
                    "results": [dict(key=r.key, title=r.title, passed=r.passed, detail=r.detail,
                                     measured=r.measured, seconds=round(r.elapsed, 3)) for r in results]})
    return EXIT_ACCEPTANCE if n_fail else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out-dir", help="override the configured output directory")
    common.add_argument("--fast", action="store_true", help="verify: run the quick subset only")
    p = argparse.ArgumentParser(prog="hotscatter", description="Tracers and hot scatterers: simulation and analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "run replicas and write ledger rates"),
                       ("analyze", "write closed-form stationary, profile and cgf tables"),
                       ("cgf", "sweep the cumulant generating function over a lambda grid"),
                       ("profile", "write a self-consistent temperature profile")):
        sub.add_parser(name, parents=[common], help=text)
    v = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    v.add_argument("--only", help="comma-separated criterion keys, e.g. 1,6,8")
    v.add_argument("--override", action="append", metavar="KEY.PARAM=VALUE",
                   help="replace a criterion parameter (JSON value), e.g. 6.residual_tol=0")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.fast, args.seed, args.only, _parse_overrides(args.override), args.out_dir)
        if not args.config:
            raise ConfigError(f"{args.command} needs --config")
        cfg = load_config(args.config).with_overrides(seed=args.seed, out_dir=args.out_dir)
        handler = {"simulate": cmd_simulate, "analyze": cmd_analyze, "cgf": cmd_cgf, "profile": cmd_profile}
        for path in handler[args.command](cfg):
            print(path)
        return EXIT_OK
    except (SolverError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
