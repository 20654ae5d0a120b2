"""Configuration loading, result files and the command-line interface.

Configs are JSON with the blocks ``scenario``, ``environment``,
``quadrature``, ``penalty``, ``validation`` and ``ac`` plus the top-level
keys ``scheme`` and ``output_dir``. Environment powers and gains are given
in dB/dBm as they appear in parameter tables; everything else is SI.
Missing fields take the bundled defaults, unknown fields are rejected.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .baselines import SCHEMES, BaselineResult, MarginCapError, McConfig, run_scheme
from .core_model import (
    DesignVars,
    DomainError,
    EnvParams,
    Scenario,
    db_to_linear,
    dbm_to_watts,
    elevation_matrix,
    los_probability,
)
from .expected_se import se_lower_bound
from .optimizer import AlgorithmError, InfeasibleScenarioError, PenaltyConfig
from .stats import QuadratureGrid, build_grids
from .validation import (
    SWEEP_PARAMETERS,
    McReport,
    monte_carlo_validate,
    overestimation_report,
    run_sweep,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
PROFILES = ("full", "ci")
# Plans read back from 9-digit CSVs are checked with this relative tolerance.
READ_BACK_TOL = 1e-6


class ConfigError(DomainError):
    """The configuration file is malformed or violates an invariant."""


def _default_config() -> dict:
    text = resources.files("uavrate").joinpath("data/default_config.json").read_text()
    return json.loads(text)


DEFAULTS = _default_config()


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    env: EnvParams
    grid_sizes: tuple
    penalty: PenaltyConfig
    mc: McConfig
    margin_step: float
    margin_cap: float
    scheme: str
    output_dir: Path
    raw: dict

    def grid(self, env: EnvParams | None = None) -> QuadratureGrid:
        return build_grids(*self.grid_sizes, env or self.env)


def _merge(defaults: dict, given: dict, where: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown field(s) in {where or 'config'}: {', '.join(unknown)}")
    out = {}
    for key, default in defaults.items():
        path = f"{where}.{key}" if where else key
        if isinstance(default, dict):
            out[key] = _merge(default, given.get(key, {}), path)
        else:
            out[key] = copy.deepcopy(given.get(key, default))
    return out


def apply_profile(raw: dict, profile: str) -> dict:
    """``ci``: 40 slots (N * delta_max kept), U = 20 grids, 5000 realizations."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {PROFILES}")
    raw = copy.deepcopy(raw)
    if profile == "ci":
        sc = raw["scenario"]
        horizon = sc["n_slots"] * sc["delta_max"]
        sc["n_slots"] = 40
        sc["delta_max"] = horizon / 40
        raw["quadrature"].update(u_l=20, u_n=20, u_nu=20)
        raw["validation"]["n_realizations"] = 5000
    return raw


def _build(raw: dict) -> RunConfig:
    s, e, q, p, v, a = (raw[b] for b in
                        ("scenario", "environment", "quadrature", "penalty", "validation", "ac"))
    try:
        scenario = Scenario(
            gns=np.array(s["gns"], dtype=float), q_start=np.array(s["q_start"], dtype=float),
            q_end=np.array(s["q_end"], dtype=float), h_min=s["h_min"], h_max=s["h_max"],
            v_max=s["v_max"], v_z=s["v_z"], n_slots=s["n_slots"], delta_max=s["delta_max"],
            delta_min=s["delta_min"])
    except (DomainError, ValueError, TypeError) as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    try:
        env = EnvParams(
            a1=e["a1"], a2=e["a2"], alpha_los=e["alpha_los"], alpha_nlos=e["alpha_nlos"],
            beta_los=float(db_to_linear(e["beta_los_db"])),
            beta_nlos=float(db_to_linear(e["beta_nlos_db"])),
            p_tx=float(dbm_to_watts(e["p_tx_dbm"])), noise=float(dbm_to_watts(e["noise_dbm"])),
            k_rician=float(db_to_linear(e["k_rician_db"])), sigma_db=e["sigma_db"],
            r_min=e["r_min"])
    except (DomainError, ValueError, TypeError) as exc:
        raise ConfigError(f"environment: {exc}") from exc
    try:
        penalty = PenaltyConfig(**p)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"penalty: {exc}") from exc
    sizes = (q["u_l"], q["u_n"], q["u_nu"])
    if not all(isinstance(u, int) and u >= 1 for u in sizes):
        raise ConfigError("quadrature: u_l, u_n and u_nu must be positive integers")
    if not (isinstance(v["n_realizations"], int) and v["n_realizations"] >= 2):
        raise ConfigError("validation: n_realizations must be an integer >= 2")
    if not isinstance(v["seed"], int) or v["seed"] < 0:
        raise ConfigError("validation: seed must be a non-negative integer")
    if not (a["margin_step"] > 0 and a["margin_cap"] >= 0):
        raise ConfigError("ac: margin_step must be positive and margin_cap non-negative")
    if raw["scheme"] not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {raw['scheme']!r}")
    return RunConfig(scenario, env, sizes, penalty,
                     McConfig(v["n_realizations"], v["seed"], v["workers"]),
                     float(a["margin_step"]), float(a["margin_cap"]), raw["scheme"],
                     Path(raw["output_dir"]), raw)


def load_config(path=None, profile: str = "full", seed: int | None = None) -> RunConfig:
    """Read, default-fill and validate a config; ``path=None`` gives the defaults.

    ``seed`` overrides ``validation.seed``. The merged dict (after profile and
    seed) is kept in ``RunConfig.raw``; loading it again yields the same config.
    """
    given = {}
    if path is not None:
        try:
            given = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                              f"{exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = apply_profile(_merge(DEFAULTS, given, ""), profile)
    if seed is not None:
        raw["validation"]["seed"] = int(seed)
    return _build(raw)


# ------------------------------------------------------------------ output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.9g}"


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    path.write_text(buf.getvalue())


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def scheduled_gn(plan: DesignVars) -> np.ndarray:
    """(N,) index of the GN served in each slot, -1 when the slot is idle."""
    served = plan.schedule.max(axis=0) > 0.5
    return np.where(served, np.argmax(plan.schedule, axis=0), -1)


def write_results(out_dir, plan: DesignVars, scenario: Scenario, env: EnvParams,
                  grid: QuadratureGrid, trace=None, report: McReport | None = None,
                  summary: dict | None = None) -> list[Path]:
    """Write the plan files; returns the paths written.

    trajectory.csv has N+1 rows (waypoint 0 is the start, with no slot
    length and no GN). Per-GN columns give the elevation angle, the LoS
    probability and the lower-bound SE at each waypoint. Everything except
    ``summary["timestamp"]`` is a deterministic function of the inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K, N = scenario.n_gns, scenario.n_slots
    q = plan.trajectory
    theta = elevation_matrix(q, scenario.gns)                 # (K, N+1)
    p_los = los_probability(theta, env)
    se = se_lower_bound(q[None], scenario.gns[:, None], grid, env).se_total
    gn = scheduled_gn(plan)
    header = ["slot", "x", "y", "z", "delta_s", "scheduled_gn"]
    header += [f"elevation_deg_{k}" for k in range(K)]
    header += [f"p_los_{k}" for k in range(K)]
    header += [f"se_lb_{k}" for k in range(K)]
    rows = []
    for n in range(N + 1):
        delta = plan.slots[n - 1] if n else None
        served = int(gn[n - 1]) if n else -1
        rows.append([n, *q[n], delta, served, *theta[:, n], *p_los[:, n], *se[:, n]])
    paths = [out / "trajectory.csv", out / "schedule.csv"]
    _write_csv(paths[0], header, rows)
    _write_csv(paths[1], ["slot", *[f"gn_{k}" for k in range(K)]],
               [[n + 1, *plan.schedule[:, n]] for n in range(N)])
    if trace is not None:
        paths.append(out / "convergence.csv")
        _write_csv(paths[-1], ["iteration", "T", "objective", "slack", "eta"],
                   [[r.iteration, r.completion_time, r.objective, r.slack, r.eta]
                    for r in trace.records])
    if report is not None:
        paths.append(out / "mc_report.json")
        _write_json(paths[-1], report.to_dict())
    if summary is not None:
        paths.append(out / "summary.json")
        _write_json(paths[-1], summary)
    return paths


def read_plan(plan_dir, scenario: Scenario) -> DesignVars:
    """Rebuild a plan from trajectory.csv and schedule.csv."""
    plan_dir = Path(plan_dir)
    try:
        with open(plan_dir / "trajectory.csv", newline="") as fh:
            traj_rows = list(csv.DictReader(fh))
        with open(plan_dir / "schedule.csv", newline="") as fh:
            sched_rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read plan from {plan_dir}: {exc}") from exc
    K, N = scenario.n_gns, scenario.n_slots
    if len(traj_rows) != N + 1 or len(sched_rows) != N:
        raise ConfigError(f"plan in {plan_dir} does not have {N} slots")
    try:
        traj = np.array([[float(r[c]) for c in "xyz"] for r in traj_rows])
        slots = np.array([float(r["delta_s"]) for r in traj_rows[1:]])
        schedule = np.array([[float(r[f"gn_{k}"]) for r in sched_rows] for k in range(K)])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed plan files in {plan_dir}: {exc}") from exc
    return DesignVars(schedule, traj, slots)


def result_summary(result: BaselineResult, cfg: RunConfig, runtime: float) -> dict:
    trace = result.trace
    return {
        "scheme": result.scheme,
        "completion_time": float(result.completion_time),
        "converged": bool(trace.converged),
        "residual_infeasible": bool(trace.residual_infeasible),
        "feasible_under_mc": result.feasible_under_mc,
        "feasible": _feasible(result),
        "iterations": len(trace),
        "margin_used": float(result.margin_used),
        "re_optimization_count": int(result.re_optimization_count),
        "seed": cfg.mc.seed,
        "config": cfg.raw,
        "timestamp": {
            "finished_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "runtime_s": runtime,
        },
    }


def _feasible(result: BaselineResult) -> bool:
    ok = not result.trace.residual_infeasible
    return bool(ok and result.feasible_under_mc is not False)


def _run(scheme: str, cfg: RunConfig) -> tuple[BaselineResult, float]:
    start = time.perf_counter()
    options = {}
    if scheme == "ac":
        options = {"margin_step": cfg.margin_step, "margin_cap": cfg.margin_cap}
    result = run_scheme(scheme, cfg.scenario, cfg.env, cfg.grid(), cfg.penalty, cfg.mc,
                        **options)
    return result, time.perf_counter() - start


def _save(result: BaselineResult, cfg: RunConfig, runtime: float, out_dir: Path) -> dict:
    summary = result_summary(result, cfg, runtime)
    write_results(out_dir, result.plan, result.scenario, cfg.env, result.grid, result.trace,
                  result.mc_report, summary)
    return summary


# ------------------------------------------------------------------ commands


def _cmd_solve(args, cfg: RunConfig) -> int:
    scheme = args.scheme or cfg.scheme
    out = Path(args.out) if args.out else cfg.output_dir
    result, runtime = _run(scheme, cfg)
    summary = _save(result, cfg, runtime, out)
    print(f"{scheme}: T = {summary['completion_time']:.6f} s, feasible = {summary['feasible']}, "
          f"results in {out}")
    return EXIT_OK if summary["feasible"] else EXIT_INFEASIBLE


def _cmd_validate(args, cfg: RunConfig) -> int:
    plan = read_plan(args.plan, cfg.scenario)
    report = monte_carlo_validate(plan, cfg.scenario, cfg.env, cfg.mc.n_realizations,
                                  cfg.mc.seed, grid=cfg.grid(), workers=cfg.mc.workers,
                                  tol=READ_BACK_TOL)
    out = Path(args.out) if args.out else Path(args.plan)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "mc_report.json", report.to_dict())
    for k, (m, s, ok) in enumerate(zip(report.mean, report.stderr, report.feasible)):
        print(f"GN {k}: MC rate {m:.4f} +- {s:.4f} bps/Hz ({'ok' if ok else 'below R_min'})")
    return EXIT_OK if report.all_feasible else EXIT_INFEASIBLE


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values must be comma-separated numbers: {exc}") from exc


def _cmd_sweep(args, cfg: RunConfig) -> int:
    out = Path(args.out) if args.out else cfg.output_dir
    schemes = tuple(args.schemes.split(",")) if args.schemes else ("proposed",)
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
    result = run_sweep(cfg.scenario, cfg.env, args.param, _parse_values(args.values), schemes,
                       cfg.penalty, cfg.grid_sizes, cfg.mc)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv",
               ["scheme", args.param, "T", "converged", "feasible", "error"],
               [[r.scheme, r.value, r.completion_time, r.converged, r.feasible, r.error or ""]
                for r in result.records])
    _write_json(out / "sweep.json", {
        "parameter": args.param,
        "values": result.values,
        "non_increasing": {s: result.non_increasing(s) for s in schemes},
        "config": cfg.raw,
    })
    for r in result.records:
        print(f"{r.scheme} {args.param}={r.value:g}: T = {r.completion_time:.4f} s, "
              f"feasible = {r.feasible}")
    return EXIT_OK if all(r.feasible for r in result.records) else EXIT_INFEASIBLE


def _cmd_compare(args, cfg: RunConfig) -> int:
    out = Path(args.out) if args.out else cfg.output_dir
    rows, plans = [], {}
    status = EXIT_OK
    for scheme in SCHEMES:
        try:
            result, runtime = _run(scheme, cfg)
        except (AlgorithmError, InfeasibleScenarioError, MarginCapError) as exc:
            logger.warning("%s failed: %s", scheme, exc)
            rows.append([scheme, math.nan, False, math.nan, str(exc)])
            status = EXIT_INFEASIBLE if scheme == "proposed" else status
            continue
        summary = _save(result, cfg, runtime, out / scheme)
        rows.append([scheme, summary["completion_time"], summary["feasible"],
                     summary["margin_used"], ""])
        plans[scheme] = (result.plan, result.grid, result.scenario)
        if scheme == "proposed" and not summary["feasible"]:
            status = EXIT_INFEASIBLE
    _write_csv(out / "comparison.csv", ["scheme", "T", "feasible", "margin_used", "error"], rows)
    points = []
    for scheme, (plan, grid, scenario) in plans.items():
        points += overestimation_report({scheme: (plan, grid)}, scenario, cfg.env,
                                        cfg.mc.n_realizations, cfg.mc.seed, cfg.mc.workers)
    _write_csv(out / "overestimation.csv",
               ["scheme", "gn", "estimated", "actual", "stderr", "overestimated"],
               [[p.scheme, p.gn, p.estimated, p.actual, p.stderr, p.overestimated]
                for p in points])
    for row in rows:
        print(f"{row[0]:>10}: T = {row[1]:.4f} s, feasible = {row[2]}")
    return status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config (default: the bundled desk scenario)")
    common.add_argument("--profile", choices=PROFILES, default="full")
    common.add_argument("--seed", type=int, help="Monte Carlo seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="uavrate", description="UAV trajectory, scheduling and slot-length "
                     "design under expected-SE constraints.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("solve", parents=[common], help="optimize one scheme")
    p.add_argument("--scheme", choices=SCHEMES)
    p = sub.add_parser("validate", parents=[common], help="Monte Carlo check of a saved plan")
    p.add_argument("--plan", required=True, help="directory holding trajectory/schedule.csv")
    p = sub.add_parser("sweep", parents=[common], help="completion time over a parameter")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    p.add_argument("--values", required=True, help="comma-separated, ascending")
    p.add_argument("--schemes", help="comma-separated scheme tags (default: proposed)")
    sub.add_parser("compare", parents=[common], help="all five schemes and the scatter data")
    return parser


COMMANDS = {"solve": _cmd_solve, "validate": _cmd_validate, "sweep": _cmd_sweep,
            "compare": _cmd_compare}


def cli_main(argv=None) -> int:
    """Entry point; returns 0 on success, 2 on infeasibility, 1 on errors."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.profile, args.seed)
        return COMMANDS[args.command](args, cfg)
    except (InfeasibleScenarioError, MarginCapError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DomainError, AlgorithmError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(cli_main())
