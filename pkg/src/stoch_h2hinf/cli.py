"""Command-line front end: solve / vi / qlearn / simulate / bench-f16.

Configuration comes from defaults, then a flat key=value config file, then
CLI flags, in increasing precedence.  Every run writes a manifest echoing
the effective configuration so it can be reproduced exactly; CSV artifacts
are deterministic given the seed.  Exit codes: 0 success, 1 configuration
error, 2 non-convergence or failed run, 3 attenuation infeasibility.
"""

import argparse
import os
import time
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import __version__
from .f16 import X0, f16_initial_gains, f16_reference, f16_system
from .gare import solve_coupled_gare
from .model import (
    AlgoConfig,
    AttenuationInfeasibleError,
    ConvergenceError,
    CostSpec,
    DivergenceError,
    ExcitationError,
    GainExtractionError,
    GainPair,
    SdltiSystem,
    validate_system,
)
from .qlearn import (
    QLearnReport,
    SystemOracle,
    run_q_learning,
    run_value_iteration,
    write_matrix_txt,
)
from .sim import NoiseSource, simulate_closed_loop

SEED_ENV = "STOCH_H2HINF_SEED"

_COMMANDS = ("solve", "vi", "qlearn", "simulate", "bench-f16")


class ConfigError(ValueError):
    """Bad or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Effective run settings; tol and max_iters default per command
    (solve: 1e-9 / 5000, everything else: 1e-3 / 500)."""

    command: str = "solve"
    system: str = "f16"
    a1: str = ""
    a2: str = ""
    b1: str = ""
    c1: str = ""
    c2: str = ""
    q: str = ""
    gamma: float = 1.0
    case: int = 1
    seed: int = 0
    tol: Optional[float] = None
    max_iters: Optional[int] = None
    tuples: int = 20
    branches: int = 100
    mode: str = "mc"
    steps: int = 100
    out: str = "."
    reference: bool = True


_FIELD_TYPES = {
    "case": int,
    "seed": int,
    "max_iters": int,
    "tuples": int,
    "branches": int,
    "steps": int,
    "gamma": float,
    "tol": float,
    "reference": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def parse_config_file(path):
    """Flat key = value lines; '#' starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in ExperimentConfig.__dataclass_fields__:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        conv = _FIELD_TYPES.get(key, str)
        try:
            values[key] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return values


def _load_matrix(path, name):
    if not path:
        raise ConfigError(f"system=custom requires a file for {name}")
    if not os.path.exists(path):
        raise ConfigError(f"matrix file for {name} not found: {path}")
    try:
        return np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"cannot parse matrix file {path}: {exc}") from exc


def build_system(cfg):
    """Materialize (system, cost) from the config."""
    if cfg.system == "f16":
        return f16_system()
    if cfg.system != "custom":
        raise ConfigError(f"system must be f16 or custom, got {cfg.system!r}")
    mats = {name: _load_matrix(getattr(cfg, name), name.upper())
            for name in ("a1", "a2", "b1", "c1", "c2")}
    try:
        sys_ = SdltiSystem(mats["a1"], mats["a2"], mats["b1"], mats["c1"], mats["c2"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    Q = _load_matrix(cfg.q, "Q") if cfg.q else np.eye(sys_.n)
    try:
        cost = CostSpec(cfg.gamma, Q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = validate_system(sys_, cost)
    if not report.ok:
        raise ConfigError("; ".join(report.violations))
    return sys_, cost


def emit_convergence_report(report, reference, path):
    """Write the per-iteration CSV; err columns only when a reference is given.

    A reference passed here overrides whatever the run itself was given.
    """
    if reference is None:
        stripped = QLearnReport(
            report.q, report.gains, report.values,
            tuple((r[0], r[1], None, None, None, None, r[6]) for r in report.history),
            report.termination, report.iterations, report.seed,
            report.svmin_history, report.values_history, report.gains_history,
            report.final_trajectory,
        )
        stripped.to_csv(path)
        return
    rvals, rgains = reference
    rows = []
    for row, vals, gains in zip(report.history, report.values_history,
                                report.gains_history):
        rows.append((
            row[0], row[1],
            float(np.linalg.norm(gains.K1 - rgains.K1)),
            float(np.linalg.norm(gains.K2 - rgains.K2)),
            float(np.linalg.norm(vals.P1 - rvals.P1)),
            float(np.linalg.norm(vals.P2 - rvals.P2)),
            row[6],
        ))
    rebuilt = QLearnReport(
        report.q, report.gains, report.values, tuple(rows), report.termination,
        report.iterations, report.seed, report.svmin_history,
        report.values_history, report.gains_history, report.final_trajectory,
    )
    rebuilt.to_csv(path)


def _write_manifest(cfg, outdir, wall, reason):
    lines = [f"version = {__version__}"]
    for key, val in asdict(cfg).items():
        lines.append(f"{key} = {val}")
    lines.append(f"wall_time_s = {wall:.3f}")
    lines.append(f"exit_reason = {reason}")
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_gains_values(outdir, gains, vals):
    write_matrix_txt(np.vstack([gains.K1, gains.K2]), os.path.join(outdir, "gains.txt"))
    write_matrix_txt(vals.P1, os.path.join(outdir, "p1.txt"))
    write_matrix_txt(vals.P2, os.path.join(outdir, "p2.txt"))


def _algo_config(cfg):
    return AlgoConfig(
        tol=cfg.tol if cfg.tol is not None else 1e-3,
        max_iters=cfg.max_iters if cfg.max_iters is not None else 500,
        tuples_per_iter=cfg.tuples,
        branches=cfg.branches,
        seed=cfg.seed,
        noise_case=f"case{cfg.case}",
        expectation_mode=cfg.mode,
    )


def _reference_for(cfg):
    if cfg.reference and cfg.system == "f16":
        return f16_reference()
    return None


def _x0_for(sys_, cfg):
    return X0.copy() if cfg.system == "f16" else np.ones(sys_.n)


def _cmd_solve(cfg, outdir):
    sys_, cost = build_system(cfg)
    tol = cfg.tol if cfg.tol is not None else 1e-9
    max_iters = cfg.max_iters if cfg.max_iters is not None else 5000
    report = solve_coupled_gare(sys_, cost, tol=tol, max_iters=max_iters)
    report.to_csv(os.path.join(outdir, "solve.csv"))
    _write_gains_values(outdir, report.gains, report.values)
    print(
        f"solved in {report.iterations} iterations; residuals "
        f"({report.residual_norms[0]:.3e}, {report.residual_norms[1]:.3e}); "
        f"ms-stable: {report.stable}"
    )
    return 0, f"converged in {report.iterations} iterations"


def _cmd_vi(cfg, outdir):
    sys_, cost = build_system(cfg)
    report = run_value_iteration(sys_, cost, _algo_config(cfg), reference=None)
    emit_convergence_report(report, _reference_for(cfg), os.path.join(outdir, "convergence.csv"))
    _write_gains_values(outdir, report.gains, report.values)
    print(report.termination)
    return 0, report.termination


def _cmd_qlearn(cfg, outdir):
    sys_, cost = build_system(cfg)
    algo = _algo_config(cfg)
    x0 = _x0_for(sys_, cfg)
    if cfg.system == "f16":
        gains0 = f16_initial_gains()
    else:
        gains0 = GainPair.zeros(sys_.n, sys_.m1, sys_.m2)
    oracle = SystemOracle(sys_, NoiseSource(cfg.seed), x0)
    report = run_q_learning(oracle, cost, algo, gains0, x0)
    emit_convergence_report(report, _reference_for(cfg), os.path.join(outdir, "convergence.csv"))
    _write_gains_values(outdir, report.gains, report.values)
    reason = report.termination
    # trajectory under the learned controller, probe off, from the benchmark x0
    try:
        traj = simulate_closed_loop(
            sys_, cost, report.gains, x0, cfg.steps, NoiseSource(cfg.seed + 1)
        )
        traj.to_csv(os.path.join(outdir, "trajectory.csv"))
    except DivergenceError as exc:
        reason += f"; learned-gain trajectory diverged at step {exc.step}"
    print(reason)
    return 0, reason


def _cmd_simulate(cfg, outdir):
    sys_, cost = build_system(cfg)
    solved = solve_coupled_gare(sys_, cost, tol=1e-9, max_iters=5000)
    traj = simulate_closed_loop(
        sys_, cost, solved.gains, _x0_for(sys_, cfg), cfg.steps, NoiseSource(cfg.seed)
    )
    traj.to_csv(os.path.join(outdir, "trajectory.csv"))
    _write_gains_values(outdir, solved.gains, solved.values)
    reason = f"simulated {cfg.steps} steps under the solved gains"
    print(reason)
    return 0, reason


def _cmd_bench(cfg, outdir):
    codes = []
    summary = os.path.join(outdir, "bench_summary.txt")
    open(summary, "w").close()
    for case in (1, 2, 3):
        sub = os.path.join(outdir, f"case{case}")
        os.makedirs(sub, exist_ok=True)
        case_cfg = ExperimentConfig(**{**asdict(cfg), "case": case, "command": "qlearn"})
        code, reason = _run_in(case_cfg, sub)
        codes.append(code)
        with open(summary, "a") as fh:
            fh.write(f"case{case}: exit {code}; {reason}\n")
    return max(codes), f"three probing cases finished with exit codes {codes}"


def _run_in(cfg, outdir):
    """Dispatch a command into outdir; returns (code, reason)."""
    start = time.perf_counter()
    handler = {
        "solve": _cmd_solve,
        "vi": _cmd_vi,
        "qlearn": _cmd_qlearn,
        "simulate": _cmd_simulate,
        "bench-f16": _cmd_bench,
    }[cfg.command]
    try:
        code, reason = handler(cfg, outdir)
    except ConfigError as exc:
        code, reason = 1, f"config error: {exc}"
        print(reason)
    except AttenuationInfeasibleError as exc:
        code, reason = 3, f"attenuation infeasible: {exc}"
        print(reason)
    except (ConvergenceError, ExcitationError, DivergenceError, GainExtractionError) as exc:
        code, reason = 2, f"run failed: {exc}"
        print(reason)
    _write_manifest(cfg, outdir, time.perf_counter() - start, reason)
    return code, reason


def run_experiment(cfg):
    """Execute one experiment; returns the process exit code."""
    if cfg.command not in _COMMANDS:
        print(f"unknown command {cfg.command!r}")
        return 1
    try:
        outdir = cfg.out or "."
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        print(f"config error: cannot create output directory {cfg.out!r}: {exc}")
        return 1
    code, _ = _run_in(cfg, outdir)
    return code


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stoch-h2hinf",
        description="Mixed H2/Hinf control with multiplicative noise: "
                    "model-based solver and model-free Q-learning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--system", default=None, help="f16 or custom")
        p.add_argument("--case", type=int, choices=(1, 2, 3), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--tuples", type=int, default=None)
        p.add_argument("--branches", type=int, default=None)
        p.add_argument("--mode", choices=("analytic", "mc"), default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--no-reference", action="store_true",
                       help="omit reference-error columns from the CSV")
        for mat in ("a1", "a2", "b1", "c1", "c2", "q"):
            p.add_argument(f"--{mat}", default=None, help=f"{mat.upper()} matrix file")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    values = {"command": args.command}
    if args.config:
        try:
            values.update(parse_config_file(args.config))
        except ConfigError as exc:
            print(f"config error: {exc}")
            return 1
    for key in ("system", "case", "seed", "tol", "tuples", "branches",
                "mode", "steps", "gamma", "out", "a1", "a2", "b1", "c1", "c2", "q"):
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    if args.max_iters is not None:
        values["max_iters"] = args.max_iters
    if args.no_reference:
        values["reference"] = False
    if "seed" not in values:
        env_seed = os.environ.get(SEED_ENV)
        if env_seed is not None:
            try:
                values["seed"] = int(env_seed)
            except ValueError:
                print(f"config error: {SEED_ENV}={env_seed!r} is not an integer")
                return 1
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        print(f"config error: {exc}")
        return 1
    return run_experiment(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
