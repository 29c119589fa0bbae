"""Config-driven experiment front end.

    trielab <mode> --env FILE [--j J | --alpha A] [--m-grid START:FACTOR:COUNT]
            [--reps R] [--seed S] [--theta-grid LO:HI:STEPS] [--depth N]
            [--cap C] [--workers W] --out PATH [--format csv|json]

Modes
-----
spectral   tabulate shape values and constants over a theta grid
simulate   per-replicate height/saturation observations over the m grid
converge   Monte Carlo slope fit of height (or saturation) against ln m,
           compared with the predicted constant
profile    exact box statistics of one generation
coupon     throw counts until every generation-`depth` box holds >= j balls

Exit codes: 0 success; 2 configuration error; 3 invalid environment;
4 regime without a prediction (the report is still written); 5 runtime cap
exceeded.  Every failure prints one line: ``error: <Code>: <detail>``.

Replicate (m_index, replicate_index) owns the random stream derived from the
master seed, so reports are byte-identical across runs and across worker
counts, and extending the replicate count leaves earlier replicates unchanged.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import sim, spectral
from .envs import EnvironmentModel, load_env
from .errors import (
    BadAlpha,
    BadRows,
    BadSupport,
    CapExceeded,
    ConditionsNotMet,
    ConfigError,
    DegenerateX,
    DepthCapExceeded,
    EnvParseError,
    IoError,
    NoConvergence,
    NotRegular,
    NotStrictlyConvex,
    OutsideRegime,
    PredictionUnavailable,
    ThetaOutOfDomain,
    TrielabError,
)

MODES = ("spectral", "simulate", "converge", "profile", "coupon")
_ENV_SEED_VAR = "TRIELAB_SEED"


@dataclass
class ExperimentConfig:
    env_path: str
    mode: str
    j: Optional[int] = None
    alpha: Optional[float] = None
    m_grid: list = field(default_factory=list)
    replicates: int = 200
    master_seed: int = 0
    theta_grid: list = field(default_factory=list)
    depth: int = 8
    cap: int = 1_048_576
    workers: int = 1
    out_path: str = ""
    out_format: str = "csv"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.j is not None and self.alpha is not None:
            raise ConfigError("pass only one of --j and --alpha")
        if self.j is not None and self.j < 1:
            raise ConfigError(f"--j must be >= 1, got {self.j}")
        if self.alpha is not None and not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"--alpha must lie in (0,1), got {self.alpha!r}")
        if self.replicates < 1:
            raise ConfigError(f"--reps must be >= 1, got {self.replicates}")
        if self.m_grid:
            if any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
                raise ConfigError("m grid must be strictly increasing (factor > 1)")
        if self.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {self.workers}")
        if self.out_format not in ("csv", "json"):
            raise ConfigError(f"--format must be csv or json, got {self.out_format!r}")


@dataclass
class RowStat:
    m: int
    stat: str
    mean: float
    median: float
    stderr: float
    count: int


@dataclass
class ConvergenceReport:
    rows: list
    fitted_slope: float
    fit_r2: float
    predicted: float
    relative_gap: float
    prediction_note: str = ""


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------

def fit_slope(points):
    """Ordinary least squares (slope, intercept, r2); exact on affine input."""
    pts = list(points)
    if len(pts) < 3:
        raise DegenerateX(f"need at least 3 points, got {len(pts)}")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    sxx = ((x - x.mean()) ** 2).sum()
    if sxx == 0.0:
        raise DegenerateX("abscissae carry no variance")
    slope = ((x - x.mean()) * (y - y.mean())).sum() / sxx
    intercept = y.mean() - slope * x.mean()
    ss_res = ((y - slope * x - intercept) ** 2).sum()
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


# --------------------------------------------------------------------------
# experiment runners
# --------------------------------------------------------------------------

def _stream(master_seed: int, m_idx: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(m_idx, rep)))


def _one_run(env, mode_j, mode_alpha, master_seed, m_idx, m, rep):
    rng = _stream(master_seed, m_idx, rep)
    if mode_alpha is not None:
        obs = sim.simulate_power_regime(env, m, mode_alpha, rng)
    elif mode_j is not None and mode_j >= 2:
        obs = sim.simulate_occupancy(env, m, mode_j, rng)
    else:
        obs = sim.simulate_saturation(env, m, mode_j if mode_j else 1, rng)
    return m_idx, rep, obs.j, obs.height, obs.saturation, obs.expanded_nodes, obs.max_depth_reached


def _collect_runs(config: ExperimentConfig, env: EnvironmentModel):
    tasks = [
        (env, config.j, config.alpha, config.master_seed, m_idx, m, rep)
        for m_idx, m in enumerate(config.m_grid)
        for rep in range(config.replicates)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_one_run_star, tasks, chunksize=16))
    else:
        results = [_one_run(*t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))      # deterministic fold order
    return results


def _one_run_star(args):
    return _one_run(*args)


def run_converge(config: ExperimentConfig, env: EnvironmentModel) -> ConvergenceReport:
    """Slope of the chosen statistic against ln m over the geometric grid.

    Heights are concentrated, so the fit uses per-m means; saturation levels
    (j = 1) have heavy upper tails, so the fit uses per-m medians.
    """
    results = _collect_runs(config, env)
    height_mode = config.alpha is not None or (config.j is not None and config.j >= 2)
    rows = []
    fit_points = []
    for m_idx, m in enumerate(config.m_grid):
        cell = [r for r in results if r[0] == m_idx]
        heights = np.array([r[3] for r in cell], dtype=float) if height_mode else None
        sats = np.array([r[4] for r in cell], dtype=float)
        for stat, data in (("height", heights), ("saturation", sats)):
            if data is None:
                continue
            stderr = float(data.std(ddof=1) / math.sqrt(len(data))) if len(data) > 1 else 0.0
            rows.append(RowStat(m=m, stat=stat, mean=float(data.mean()),
                                median=float(np.median(data)), stderr=stderr,
                                count=len(data)))
        chosen = heights if height_mode else sats
        fit_points.append(
            (math.log(m), float(chosen.mean()) if height_mode else float(np.median(chosen)))
        )
    slope, _, r2 = fit_slope(fit_points)
    note = ""
    try:
        if config.alpha is not None:
            predicted = spectral.predicted_height_constant(env, power_alpha=config.alpha)
        elif height_mode:
            predicted = spectral.predicted_height_constant(env, j=config.j)
        else:
            predicted = spectral.predicted_saturation_constant(env)
    except (OutsideRegime, ConditionsNotMet) as exc:
        predicted = math.nan
        note = f"{type(exc).__name__}: {exc}"
    gap = abs(slope - predicted) / predicted if (math.isfinite(predicted) and predicted) else math.nan
    report = ConvergenceReport(rows=rows, fitted_slope=slope, fit_r2=r2,
                               predicted=predicted, relative_gap=gap,
                               prediction_note=note)
    if note:
        raise _PredictionMissing(report, note)
    return report


class _PredictionMissing(TrielabError):
    """Internal: carries a finished report whose regime has no prediction."""

    def __init__(self, report, note):
        super().__init__(note)
        self.report = report


def run_simulate(config: ExperimentConfig, env: EnvironmentModel) -> list:
    return _collect_runs(config, env)


def run_spectral(config: ExperimentConfig, env: EnvironmentModel):
    if not config.theta_grid:
        raise ConfigError("spectral mode needs --theta-grid")
    return spectral.spectral_profile(env, config.theta_grid)


def run_profile(config: ExperimentConfig, env: EnvironmentModel):
    rng = _stream(config.master_seed, 0, 0)
    return sim.enumerate_level(env, config.depth, theta_list=config.theta_grid,
                               cap=config.cap, rng=rng)


def run_coupon(config: ExperimentConfig, env: EnvironmentModel) -> list:
    j = config.j if config.j is not None else 1
    outcomes = []
    for rep in range(config.replicates):
        rng = _stream(config.master_seed, 0, rep)
        outcomes.append(sim.coupon_time(env, config.depth, j, rng))
    return outcomes


# --------------------------------------------------------------------------
# report emission
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write report to {path!r}: {exc}") from exc


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return _json_safe(float(x))
    if isinstance(x, np.ndarray):
        return [_json_safe(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def emit_report(payload, path, fmt: str = "csv") -> None:
    """Write a report; CSV schemas are fixed per mode, JSON mirrors field names."""
    if fmt == "json":
        _write(path, json.dumps(_json_safe(_payload_dict(payload)),
                                sort_keys=True, separators=(",", ":")) + "\n")
        return
    lines = []
    if isinstance(payload, ConvergenceReport):
        lines.append("m,stat,mean,median,stderr,count")
        for r in payload.rows:
            lines.append(
                f"{r.m},{r.stat},{_fmt(r.mean)},{_fmt(r.median)},{_fmt(r.stderr)},{r.count}"
            )
        lines.append(f"slope,{_fmt(payload.fitted_slope)}")
        lines.append(f"r2,{_fmt(payload.fit_r2)}")
        lines.append(f"predicted,{_fmt(payload.predicted)}")
        lines.append(f"relative_gap,{_fmt(payload.relative_gap)}")
    elif isinstance(payload, spectral.SpectralProfile):
        lines.append("theta,rho,log_rho,drift,psi,phi,f")
        for sv in payload.shapes:
            lines.append(",".join(_fmt(v) for v in (
                sv.theta, math.exp(sv.log_rho), sv.log_rho, sv.drift, sv.psi, sv.phi, sv.f)))
        c = payload.constants
        lines.append(f"c_star_lower,{_fmt(c.c_star_lower)}")
        lines.append(f"c_star_upper,{_fmt(c.c_star_upper)}")
        lines.append(f"theta_star_lower,{_fmt(c.theta_star_lower)}")
        lines.append(f"theta_star_upper,{_fmt(c.theta_star_upper)}")
        lines.append(f"condition_saturation_ok,{_fmt(c.condition_saturation_ok)}")
    elif isinstance(payload, sim.LevelProfile):
        K = len(payload.per_type_boxes)
        lines.append("theta,martingale," + ",".join(f"laplace_{i + 1}" for i in range(K)))
        for theta in sorted(payload.laplace):
            vals = [theta, payload.martingale.get(theta)] + list(payload.laplace[theta])
            lines.append(",".join(_fmt(v) for v in vals))
        lines.append(f"n,{payload.n}")
        lines.append(f"truncated,{_fmt(payload.truncated)}")
        lines.append(f"min_log_size,{_fmt(payload.min_log_size)}")
        lines.append(f"max_log_size,{_fmt(payload.max_log_size)}")
    elif payload and isinstance(payload[0], sim.CouponOutcome):
        lines.append("rep,throws")
        throws = [o.throws for o in payload]
        for rep, t in enumerate(throws):
            lines.append(f"{rep},{t}")
        lines.append(f"n,{payload[0].n}")
        lines.append(f"j,{payload[0].j}")
        lines.append(f"mean,{_fmt(float(np.mean(throws)))}")
        lines.append(f"median,{_fmt(float(np.median(throws)))}")
    else:  # simulate rows
        lines.append("m_index,rep,j,height,saturation,expanded_nodes,max_depth_reached")
        for m_idx, rep, j, h, g, ex, md in payload:
            lines.append(f"{m_idx},{rep},{j},{'' if h is None else h},{g},{ex},{md}")
    _write(path, "\n".join(lines) + "\n")


def _payload_dict(payload):
    if isinstance(payload, ConvergenceReport):
        return {
            "rows": [vars(r) for r in payload.rows],
            "fitted_slope": payload.fitted_slope,
            "fit_r2": payload.fit_r2,
            "predicted": payload.predicted,
            "relative_gap": payload.relative_gap,
            "prediction_note": payload.prediction_note,
        }
    if isinstance(payload, spectral.SpectralProfile):
        return {
            "rows": [
                {"theta": sv.theta, "rho": math.exp(sv.log_rho), "log_rho": sv.log_rho,
                 "drift": sv.drift, "psi": sv.psi, "phi": sv.phi, "f": sv.f}
                for sv in payload.shapes
            ],
            "constants": {
                "c_star_lower": payload.constants.c_star_lower,
                "c_star_upper": payload.constants.c_star_upper,
                "theta_star_lower": payload.constants.theta_star_lower,
                "theta_star_upper": payload.constants.theta_star_upper,
                "condition_saturation_ok": payload.constants.condition_saturation_ok,
                "notes": payload.constants.notes,
            },
        }
    if isinstance(payload, sim.LevelProfile):
        return {
            "n": payload.n,
            "truncated": payload.truncated,
            "min_log_size": payload.min_log_size,
            "max_log_size": payload.max_log_size,
            "laplace": {str(k): _json_safe(v) for k, v in payload.laplace.items()},
            "martingale": {str(k): v for k, v in payload.martingale.items()},
        }
    if payload and isinstance(payload[0], sim.CouponOutcome):
        return {
            "n": payload[0].n,
            "j": payload[0].j,
            "throws": [o.throws for o in payload],
        }
    return {
        "runs": [
            {"m_index": m_idx, "rep": rep, "j": j, "height": h, "saturation": g,
             "expanded_nodes": ex, "max_depth_reached": md}
            for m_idx, rep, j, h, g, ex, md in payload
        ]
    }


def parse_report(path, fmt: str = "csv") -> ConvergenceReport:
    """Read back a converge report (round-trip partner of emit_report)."""
    if fmt == "json":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        rows = [RowStat(**r) for r in doc["rows"]]
        nanify = lambda v: math.nan if v is None else v
        return ConvergenceReport(rows=rows, fitted_slope=nanify(doc["fitted_slope"]),
                                 fit_r2=nanify(doc["fit_r2"]), predicted=nanify(doc["predicted"]),
                                 relative_gap=nanify(doc["relative_gap"]),
                                 prediction_note=doc.get("prediction_note", ""))
    rows = []
    footer = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) == 6:
            rows.append(RowStat(m=int(parts[0]), stat=parts[1], mean=float(parts[2]),
                                median=float(parts[3]), stderr=float(parts[4]),
                                count=int(parts[5])))
        elif len(parts) == 2:
            footer[parts[0]] = float(parts[1])
    return ConvergenceReport(rows=rows, fitted_slope=footer["slope"], fit_r2=footer["r2"],
                             predicted=footer["predicted"], relative_gap=footer["relative_gap"])


# --------------------------------------------------------------------------
# argument parsing / entry point
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: ConfigError: {message}", file=sys.stderr)
        raise SystemExit(2)


def _parse_m_grid(text: str) -> list:
    try:
        start_s, factor_s, count_s = text.split(":")
        start, factor, count = int(start_s), float(factor_s), int(count_s)
    except ValueError:
        raise ConfigError(f"--m-grid must be START:FACTOR:COUNT, got {text!r}") from None
    if start < 1 or count < 1 or factor <= 1.0:
        raise ConfigError(f"--m-grid needs start >= 1, count >= 1, factor > 1, got {text!r}")
    return [int(round(start * factor ** i)) for i in range(count)]


def _parse_theta_grid(text: str) -> list:
    try:
        lo_s, hi_s, steps_s = text.split(":")
        lo, hi, steps = float(lo_s), float(hi_s), int(steps_s)
    except ValueError:
        raise ConfigError(f"--theta-grid must be LO:HI:STEPS, got {text!r}") from None
    if steps < 1:
        raise ConfigError("--theta-grid needs at least one step")
    return [float(t) for t in np.linspace(lo, hi, steps)]


def build_config(argv) -> ExperimentConfig:
    parser = _Parser(prog="trielab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--env", required=True, help="environment file")
    parser.add_argument("--j", type=int, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--m-grid", default="1024:2:11")
    parser.add_argument("--reps", type=int, default=200)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--theta-grid", default=None)
    parser.add_argument("--depth", type=int, default=8)
    parser.add_argument("--cap", type=int, default=1_048_576)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", required=True)
    parser.add_argument("--format", default="csv", choices=("csv", "json"))
    args = parser.parse_args(argv)
    if args.seed is not None:
        seed = args.seed
    else:
        try:
            seed = int(os.environ.get(_ENV_SEED_VAR, "0"))
        except ValueError:
            raise ConfigError(f"{_ENV_SEED_VAR} must be an integer") from None
    config = ExperimentConfig(
        env_path=args.env, mode=args.mode, j=args.j, alpha=args.alpha,
        m_grid=_parse_m_grid(args.m_grid), replicates=args.reps, master_seed=seed,
        theta_grid=_parse_theta_grid(args.theta_grid) if args.theta_grid else [],
        depth=args.depth, cap=args.cap, workers=args.workers,
        out_path=args.out, out_format=args.format,
    )
    config.validate()
    return config


_EXIT_CODES = (
    (( ConfigError, DegenerateX, IoError, ThetaOutOfDomain ), 2),
    (( BadRows, BadSupport, BadAlpha, NotRegular, EnvParseError, NotStrictlyConvex,
       FileNotFoundError ), 3),
    (( OutsideRegime, ConditionsNotMet, PredictionUnavailable ), 4),
    (( DepthCapExceeded, CapExceeded, NoConvergence ), 5),
)


def _exit_code(exc) -> int:
    for types, code in _EXIT_CODES:
        if isinstance(exc, types):
            return code
    return 1


def main(argv=None) -> int:
    try:
        config = build_config(argv if argv is not None else sys.argv[1:])
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: ConfigError: {exc}", file=sys.stderr)
        return 2
    try:
        env = load_env(config.env_path)
        runner = {
            "spectral": run_spectral,
            "simulate": run_simulate,
            "converge": run_converge,
            "profile": run_profile,
            "coupon": run_coupon,
        }[config.mode]
        try:
            payload = runner(config, env)
        except _PredictionMissing as exc:
            emit_report(exc.report, config.out_path, config.out_format)
            print(f"error: PredictionUnavailable: {exc}", file=sys.stderr)
            return 4
        emit_report(payload, config.out_path, config.out_format)
        return 0
    except (TrielabError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    raise SystemExit(main())
