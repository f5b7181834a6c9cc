"""Config-driven experiment runner.

Usage::

    gyroverify run --config exp.json [--out DIR] [--threads N]
    gyroverify validate --config exp.json

Exit codes: 0 when every declared check passes, 1 when a check fails or the
experiment aborts, 2 for configuration errors.

The config is a JSON object::

    {
      "experiment": "sweep",                 # full | gy | compare | sweep | gauge | distribution
      "field": {"name": "gradb", "params": {"beta": 0.1}, "domain": [[-5,-5,-5],[5,5,5]]},
      "regime": {"ordering": 1, "eps_ladder": [0.1, 0.05, 0.025]},   # or "eps": 0.1
      "N": 1,
      "initial": {"gyro": {"r": [0.1,0.2,0], "q_par": 0.5, "mu_hat": 0.5, "alpha": 0}},
                 # or {"particle": {"x": [...], "v": [...]}}
      "t_span": [0, 1],
      "dt": {"per_eps": 0.01, "gy": 0.001},  # or "full": absolute step
      "scheme": "rk4",
      "output": "out",
      "seed": 0,
      "checks": {"min_slope": 0.7}
    }
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, GyroError, ParseError, ValidationError
from .fields import BUILTINS, FieldModel, ScalingRegime, builtin
from .frame import ParticleState
from .fullorbit import SCHEMES, integrate
from .gydynamics import integrate_gy
from .gymap import HatGyroState, tau_gy, tau_gy_inverse
from .verify import (
    GAUGES,
    compare,
    convergence_fit,
    distribution_error,
    gauge_check,
    query_points,
    run_ladder,
)

EXPERIMENTS = ("full", "gy", "compare", "sweep", "gauge", "distribution")
TOP_KEYS = {"experiment", "field", "regime", "N", "initial", "t_span", "dt", "scheme", "output", "seed", "checks", "gauges", "queries"}
FIELD_KEYS = {"name", "params", "domain"}
REGIME_KEYS = {"ordering", "eps", "eps_ladder"}
DT_KEYS = {"full", "per_eps", "gy"}
CHECK_KEYS = {"max_error", "min_slope", "max_energy_drift", "max_mu_drift", "max_gauge_deviation"}
PARTICLE_KEYS = {"x", "v"}
GYRO_KEYS = {"r", "q_par", "mu_hat", "alpha"}
DEFAULT_DT_PER_EPS = 0.01
DEFAULT_GY_DT = 1e-3


@dataclass
class ExperimentConfig:
    experiment: str
    field_name: str
    field_params: Dict[str, float]
    domain: Optional[List[List[float]]]
    ordering: int
    eps: Optional[float]
    eps_ladder: Optional[List[float]]
    N: int
    initial_kind: str
    initial: Dict[str, object]
    t_span: List[float]
    dt: Optional[float]
    dt_per_eps: float
    gy_dt: float
    scheme: str
    output: str
    seed: int
    checks: Dict[str, float] = field(default_factory=dict)
    gauges: List[str] = field(default_factory=lambda: ["x1t", "sincos"])
    queries: int = 50

    @property
    def eps_values(self) -> List[float]:
        return list(self.eps_ladder) if self.eps_ladder is not None else [self.eps]

    def full_dt(self, eps: float) -> float:
        if self.dt is not None and self.eps_ladder is None:
            return self.dt
        return eps * self.dt_per_eps

    def model(self) -> FieldModel:
        domain = None if self.domain is None else (np.asarray(self.domain[0], float), np.asarray(self.domain[1], float))
        return builtin(self.field_name, self.field_params, domain=domain)

    def regime(self, eps: float) -> ScalingRegime:
        return ScalingRegime(eps, self.ordering)

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _reject_unknown(obj: dict, allowed: set, where: str):
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ValidationError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _obj(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(f"{where} must be an object")
    return value


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where} must be a number")
    return float(value)


def _numeric_array(value, where: str):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where} must be numeric") from None
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{where} must be finite")
    return arr.tolist()


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a decoded config object and fill in defaults."""
    raw = _obj(raw, "config")
    _reject_unknown(raw, TOP_KEYS, "config")

    kind = raw.get("experiment")
    if kind not in EXPERIMENTS:
        raise ValidationError(f"experiment must be one of {', '.join(EXPERIMENTS)}")

    if "field" not in raw:
        raise ValidationError("missing field spec")
    fld = _obj(raw["field"], "field")
    _reject_unknown(fld, FIELD_KEYS, "field")
    if "name" not in fld:
        raise ValidationError("field.name is required")
    name = fld["name"]
    if name not in BUILTINS:
        raise ValidationError(f"unknown field model {name!r}; choose from {', '.join(sorted(BUILTINS))}")
    params = _obj(fld.get("params", {}), "field.params")
    params = {k: _num(v, f"field.params.{k}") for k, v in params.items()}
    domain = fld.get("domain")
    if domain is not None:
        d = np.asarray(_numeric_array(domain, "field.domain"))
        if d.shape != (2, 3) or np.any(d[0] >= d[1]):
            raise ValidationError("field.domain must be [[lo1,lo2,lo3],[hi1,hi2,hi3]] with lo < hi")
        domain = d.tolist()

    reg = _obj(raw.get("regime", {}), "regime")
    _reject_unknown(reg, REGIME_KEYS, "regime")
    ordering = reg.get("ordering", 2)
    if ordering not in (1, 2):
        raise ValidationError("ordering must be 1 or 2")
    eps = reg.get("eps")
    ladder = reg.get("eps_ladder")
    if (eps is None) == (ladder is None):
        raise ValidationError("regime needs exactly one of eps or eps_ladder")
    if ladder is not None:
        if not isinstance(ladder, list) or len(ladder) < 2:
            raise ValidationError("eps_ladder must list at least two values")
        ladder = [_num(e, "regime.eps_ladder") for e in ladder]
        if any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ValidationError("ladder must decrease")
        for e in ladder:
            if not 0.0 < e <= 0.5:
                raise ValidationError("eps values must lie in (0, 0.5]")
    else:
        eps = _num(eps, "regime.eps")
        if not 0.0 < eps <= 0.5:
            raise ValidationError("eps must lie in (0, 0.5]")
    if kind == "sweep" and ladder is None:
        raise ValidationError("sweep needs regime.eps_ladder")
    if kind != "sweep" and kind != "distribution" and ladder is not None:
        raise ValidationError(f"{kind} takes a single regime.eps")

    N = raw.get("N", 1)
    if N not in (1, 2) or isinstance(N, bool):
        raise ValidationError("N must be 1 or 2")

    init = _obj(raw.get("initial"), "initial") if "initial" in raw else None
    if kind in ("gauge", "distribution") and init is None:
        init = {"gyro": {"r": [0.1, 0.2, 0.0], "q_par": 0.5, "mu_hat": 0.5, "alpha": 0.0}}
    if init is None or len(init) != 1 or next(iter(init)) not in ("particle", "gyro"):
        raise ValidationError("initial must give exactly one of particle or gyro")
    init_kind = next(iter(init))
    body = _obj(init[init_kind], f"initial.{init_kind}")
    keys = PARTICLE_KEYS if init_kind == "particle" else GYRO_KEYS
    _reject_unknown(body, keys, f"initial.{init_kind}")
    required = keys - ({"alpha"} if init_kind == "gyro" else set())
    missing = sorted(required - set(body))
    if missing:
        raise ValidationError(f"initial.{init_kind} is missing {', '.join(missing)}")
    body = {k: _numeric_array(v, f"initial.{init_kind}.{k}") for k, v in body.items()}

    t_span = raw.get("t_span", [0.0, 1.0])
    if not isinstance(t_span, list) or len(t_span) != 2:
        raise ValidationError("t_span must be [t0, t1]")
    t_span = [_num(t, "t_span") for t in t_span]
    if t_span[1] == t_span[0]:
        raise ValidationError("t_span must have nonzero length")

    dt = _obj(raw.get("dt", {}), "dt")
    _reject_unknown(dt, DT_KEYS, "dt")
    per_eps = _num(dt.get("per_eps", DEFAULT_DT_PER_EPS), "dt.per_eps")
    gy_dt = _num(dt.get("gy", DEFAULT_GY_DT), "dt.gy")
    full_dt = dt.get("full")
    if full_dt is not None:
        full_dt = _num(full_dt, "dt.full")
        if ladder is not None:
            raise ValidationError("dt.full is ambiguous with an eps ladder; use dt.per_eps")
    elif ladder is None:
        full_dt = eps * per_eps
    if min(per_eps, gy_dt, full_dt if full_dt is not None else 1.0) <= 0:
        raise ValidationError("step sizes must be positive")

    scheme = raw.get("scheme", "boris" if kind == "full" else "rk4")
    if scheme not in SCHEMES:
        raise ValidationError(f"scheme must be one of {', '.join(SCHEMES)}")

    checks = _obj(raw.get("checks", {}), "checks")
    _reject_unknown(checks, CHECK_KEYS, "checks")
    checks = {k: _num(v, f"checks.{k}") for k, v in checks.items()}

    gauges = raw.get("gauges", ["x1t", "sincos"])
    if not isinstance(gauges, list) or not gauges or any(g not in GAUGES for g in gauges):
        raise ValidationError(f"gauges must be a non-empty list drawn from {', '.join(sorted(GAUGES))}")
    queries = raw.get("queries", 50)
    if not isinstance(queries, int) or isinstance(queries, bool) or queries < 1:
        raise ValidationError("queries must be a positive integer")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValidationError("seed must be an integer")
    output = raw.get("output", "out")
    if not isinstance(output, str):
        raise ValidationError("output must be a path string")

    cfg = ExperimentConfig(
        experiment=kind,
        field_name=name,
        field_params=params,
        domain=domain,
        ordering=int(ordering),
        eps=eps,
        eps_ladder=ladder,
        N=int(N),
        initial_kind=init_kind,
        initial=body,
        t_span=t_span,
        dt=full_dt,
        dt_per_eps=per_eps,
        gy_dt=gy_dt,
        scheme=scheme,
        output=output,
        seed=seed,
        checks=checks,
        gauges=list(gauges),
        queries=queries,
    )
    try:
        cfg.model()
    except (GyroError, TypeError) as exc:
        raise ValidationError(f"field {name!r}: {exc}") from None
    return cfg


def parse_config(path) -> ExperimentConfig:
    """Read and validate a JSON experiment config.

    Raises
    ------
    ParseError
        If the file cannot be read or is not valid JSON (with line/column).
    ValidationError
        If a value violates a config invariant.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


class Report:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.results: Dict[str, object] = {}
        self.checks: List[dict] = []
        self.artifacts: List[str] = []

    def check(self, name: str, value: float, threshold: float, kind: str):
        ok = bool(value <= threshold) if kind == "max" else bool(value >= threshold)
        self.checks.append({"name": name, "value": _clean(value), "threshold": threshold, "kind": kind, "passed": ok})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "version": __version__,
            "experiment": self.cfg.experiment,
            "config": self.cfg.as_dict(),
            "results": self.results,
            "checks": self.checks,
            "failures": [c["name"] for c in self.checks if not c["passed"]],
            "artifacts": sorted(self.artifacts),
            "passed": self.passed,
        }


def _clean(x):
    """JSON-safe plain floats (``nan``/``inf`` become strings)."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _hat_state(cfg: ExperimentConfig, model, regime) -> HatGyroState:
    t0 = cfg.t_span[0]
    if cfg.initial_kind == "gyro":
        b = cfg.initial
        return HatGyroState.make(b["r"], b["q_par"], b["mu_hat"], b.get("alpha", 0.0), t0)
    s = ParticleState.make(cfg.initial["x"], cfg.initial["v"], t0)
    hs = tau_gy_inverse(model, regime, cfg.N, ParticleState(s.x, s.v, np.full(s.x.shape[:-1], t0)))
    return hs


def _particle_state(cfg: ExperimentConfig, model, regime) -> ParticleState:
    t0 = cfg.t_span[0]
    if cfg.initial_kind == "particle":
        s = ParticleState.make(cfg.initial["x"], cfg.initial["v"], t0)
        return ParticleState(s.x, s.v, np.full(s.x.shape[:-1], t0))
    hs = _hat_state(cfg, model, regime)
    return tau_gy(model, regime, cfg.N, hs)


def _write(out: Path, name: str, text: str, report: Report):
    (out / name).write_text(text)
    report.artifacts.append(name)


def _batch_size(arr) -> int:
    return int(np.prod(np.asarray(arr).shape[1:-1], dtype=int)) if np.ndim(arr) > 2 else 1


def _write_trajectories(out, prefix, traj, array, report):
    n = _batch_size(array)
    if n == 1:
        _write(out, f"{prefix}.csv", traj.to_csv(0), report)
    else:
        for p in range(n):
            _write(out, f"{prefix}_{p}.csv", traj.to_csv(p), report)


def _exp_full(cfg, model, out, report, threads):
    eps = cfg.eps
    regime = cfg.regime(eps)
    s0 = _particle_state(cfg, model, regime)
    tr = integrate(model, regime, s0, cfg.t_span[1], dt=cfg.full_dt(eps), scheme=cfg.scheme)
    _write_trajectories(out, "trajectory", tr, tr.x, report)
    drift = tr.energy_drift()
    report.results.update(energy_drift=drift, steps=len(tr) - 1, dt_used=tr.dt_used)
    if model.static:
        report.check("energy_drift", drift, cfg.checks.get("max_energy_drift", 1e-8), "max")


def _exp_gy(cfg, model, out, report, threads):
    regime = cfg.regime(cfg.eps)
    hs0 = _hat_state(cfg, model, regime)
    tr = integrate_gy(model, regime, cfg.N, hs0, cfg.t_span[1], dt=cfg.gy_dt)
    _write_trajectories(out, "gy_trajectory", tr, tr.r, report)
    H = tr.H_gy.reshape(len(tr), -1)
    drift = float(np.max(np.abs(H - H[0]) / np.maximum(np.abs(H[0]), 1e-300)))
    report.results.update(H_gy_drift=drift, steps=len(tr) - 1)
    if model.static:
        report.check("H_gy_drift", drift, cfg.checks.get("max_energy_drift", 1e-8), "max")


def _compare_csv(run) -> str:
    lines = ["t,error,mu_drift"]
    for t, e, m in zip(run.t, run.error, run.mu_drift):
        lines.append(f"{float(t)!r},{float(e)!r},{float(m)!r}")
    return "\n".join(lines) + "\n"


def _exp_compare(cfg, model, out, report, threads):
    eps = cfg.eps
    regime = cfg.regime(eps)
    hs0 = _hat_state(cfg, model, regime)
    run = compare(model, regime, cfg.N, hs0, cfg.t_span[1], fo_dt=cfg.full_dt(eps), gy_dt=cfg.gy_dt, scheme=cfg.scheme)
    _write(out, "compare.csv", _compare_csv(run), report)
    err, drift = run.sup_error(), run.max_mu_drift()
    report.results.update(max_error=err, max_mu_drift=drift, failed_pullbacks=run.failed_times)
    report.check("max_error", err, cfg.checks.get("max_error", 10.0 * eps**cfg.N), "max")
    if "max_mu_drift" in cfg.checks:
        report.check("max_mu_drift", drift, cfg.checks["max_mu_drift"], "max")


def _exp_sweep(cfg, model, out, report, threads):
    hs_by_eps = {e: _hat_state(cfg, model, cfg.regime(e)) for e in cfg.eps_ladder}

    def job(e):
        return compare(
            model, cfg.regime(e), cfg.N, hs_by_eps[e], cfg.t_span[1],
            fo_dt=cfg.full_dt(e), gy_dt=cfg.gy_dt, scheme=cfg.scheme,
        )

    runs = run_ladder(job, cfg.eps_ladder, threads)
    min_slope = cfg.checks.get("min_slope", cfg.N - 0.3)
    for label, key in (("slow_error", "sup_error"), ("mu_drift", "max_mu_drift")):
        pairs = [(e, getattr(r, key)()) for e, r in runs.items()]
        try:
            fit = convergence_fit(pairs)
        except GyroError as exc:
            report.results[label] = {"eps": [p[0] for p in pairs], "error": [p[1] for p in pairs], "fit_error": str(exc)}
            if label == "slow_error":
                report.check("slope", float("nan"), min_slope, "min")
            continue
        name = "convergence.csv" if label == "slow_error" else "mu_drift_convergence.csv"
        _write(out, name, fit.to_csv(), report)
        report.results[label] = fit.as_dict()
        if label == "slow_error":
            report.results["slope"] = fit.fitted_slope
            report.check("slope", fit.fitted_slope, min_slope, "min")


def _exp_gauge(cfg, model, out, report, threads):
    regime = cfg.regime(cfg.eps)
    hs0 = _hat_state(cfg, model, regime)
    tol = cfg.checks.get("max_gauge_deviation", 1e-10)
    rows = ["gauge,generator_deviation,bitwise,gy_deviation,fo_deviation,fd_backend_gy_deviation"]
    for g in cfg.gauges:
        rep = gauge_check(model, g, regime, cfg.N, hs0, cfg.t_span[1], fo_dt=cfg.full_dt(cfg.eps), gy_dt=cfg.gy_dt)
        report.results[g] = asdict(rep)
        rows.append(
            f"{g},{rep.generator_deviation!r},{int(rep.generators_bitwise_equal)},{rep.gy_deviation!r},"
            f"{rep.fo_deviation!r},{rep.fd_backend_gy_deviation!r}"
        )
        report.check(f"{g}.generators_bitwise", 0.0 if rep.generators_bitwise_equal else 1.0, 0.0, "max")
        report.check(f"{g}.gy_deviation", rep.gy_deviation, tol, "max")
    _write(out, "gauge.csv", "\n".join(rows) + "\n", report)


def _exp_distribution(cfg, model, out, report, threads):
    q = query_points(cfg.queries, seed=cfg.seed)
    q = HatGyroState(q.r, q.q_par, q.mu_hat, q.alpha, np.full(cfg.queries, cfg.t_span[1]))

    def job(e):
        return distribution_error(
            model, cfg.regime(e), cfg.N, query_set=q, t1=cfg.t_span[1], t0=cfg.t_span[0],
            fo_dt=cfg.full_dt(e), gy_dt=cfg.gy_dt, scheme=cfg.scheme,
        )

    runs = run_ladder(job, cfg.eps_values, threads) if cfg.eps_ladder else {cfg.eps: job(cfg.eps)}
    rows = ["eps,query,F_avg,f_gy,error"]
    for e, d in runs.items():
        for i in range(cfg.queries):
            rows.append(f"{e!r},{i},{float(d.F_avg[i])!r},{float(d.f_gy[i])!r},{float(d.errors[i])!r}")
    _write(out, "distribution.csv", "\n".join(rows) + "\n", report)
    report.results["max_error"] = {repr(e): d.max_error for e, d in runs.items()}
    if cfg.eps_ladder:
        fit = convergence_fit([(e, d.max_error) for e, d in runs.items()])
        _write(out, "convergence.csv", fit.to_csv(), report)
        report.results["fit"] = fit.as_dict()
        report.results["slope"] = fit.fitted_slope
        report.check("slope", fit.fitted_slope, cfg.checks.get("min_slope", cfg.N - 0.3), "min")
    elif "max_error" in cfg.checks:
        report.check("max_error", runs[cfg.eps].max_error, cfg.checks["max_error"], "max")


_RUNNERS = {
    "full": _exp_full,
    "gy": _exp_gy,
    "compare": _exp_compare,
    "sweep": _exp_sweep,
    "gauge": _exp_gauge,
    "distribution": _exp_distribution,
}


def run(cfg: ExperimentConfig, out: Optional[str] = None, threads: Optional[int] = None) -> int:
    """Execute an experiment, write artifacts and ``report.json``; return the exit code."""
    out_dir = Path(out if out is not None else cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = threads if threads is not None else (os.cpu_count() or 1)
    report = Report(cfg)
    model = cfg.model()
    try:
        _RUNNERS[cfg.experiment](cfg, model, out_dir, report, threads)
    except GyroError as exc:
        report.results["error"] = {"type": type(exc).__name__, "message": str(exc)}
        report.checks.append({"name": "completed", "value": 0, "threshold": 1, "kind": "min", "passed": False})
    report.artifacts.append("report.json")
    text = json.dumps(_clean(report.to_dict()), indent=2, sort_keys=True) + "\n"
    (out_dir / "report.json").write_text(text)
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gyroverify", description="Gyro-center reduction verification runner.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment and write artifacts")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides config.output)")
    r.add_argument("--threads", type=int, default=None, help="worker threads for sweeps")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(json.dumps(_clean(cfg.as_dict()), indent=2, sort_keys=True))
        return 0
    if args.threads is not None and args.threads < 1:
        print("ValidationError: --threads must be >= 1", file=sys.stderr)
        return 2
    code = run(cfg, args.out, args.threads)
    print(f"{cfg.experiment}: {'pass' if code == 0 else 'fail'} (report in {args.out or cfg.output}/report.json)")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
