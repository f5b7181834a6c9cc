"""Numerical verification of the gyro-reduction error claims.

Every measurement compares the decoupled gyro-center system with the exact
full orbit pulled back to gyro coordinates through the inverse gyro map.
Errors are measured in the max norm over the slow variables ``(r, q_par,
mu_hat)``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import BadParams, DegenerateFit, NoConvergence
from .fields import FieldModel, GaugeShifted, ScalingRegime, potentials_only
from .frame import ParticleState
from .fullorbit import Trajectory, default_dt, integrate, step_rk4
from .gydynamics import DEFAULT_GY_DT, GyroTrajectory, evaluate_F, integrate_gy, rhs_decoupled
from .gymap import HatGyroState, generators, hat_to_gyro, tau_gy, tau_gy_inverse

NOISE_FLOOR = 1e-13
CONVERGENCE_COLUMNS = ("eps", "error", "slope_running")


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


@dataclass
class ErrorSeries:
    eps_values: np.ndarray
    errors: np.ndarray
    fitted_slope: float
    r_squared: float
    dropped: List[float] = field(default_factory=list)

    def running_slopes(self) -> np.ndarray:
        """Slope between each point and its predecessor (``nan`` for the first)."""
        e, err = np.log(self.eps_values), np.log(self.errors)
        out = np.full(e.shape, np.nan)
        out[1:] = np.diff(err) / np.diff(e)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CONVERGENCE_COLUMNS)
        for eps, err, s in zip(self.eps_values, self.errors, self.running_slopes()):
            w.writerow([repr(float(eps)), repr(float(err)), "" if np.isnan(s) else repr(float(s))])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "eps": [float(x) for x in self.eps_values],
            "error": [float(x) for x in self.errors],
            "slope": float(self.fitted_slope),
            "r_squared": float(self.r_squared),
            "dropped_eps": [float(x) for x in self.dropped],
        }


def convergence_fit(series, noise_floor: float = NOISE_FLOOR) -> ErrorSeries:
    """Least-squares slope of ``log(error)`` against ``log(eps)``.

    Parameters
    ----------
    series : iterable of ``(eps, error)`` pairs
        ``eps`` must be strictly decreasing.
    noise_floor : float
        Points with ``error <= noise_floor`` are dropped and reported.

    Raises
    ------
    DegenerateFit
        If fewer than two points survive the noise-floor filter.

    Examples
    --------
    >>> round(convergence_fit([(0.1, 1e-2), (0.05, 2.5e-3)]).fitted_slope, 12)
    2.0
    """
    pairs = [(float(e), float(err)) for e, err in series]
    eps = np.array([p[0] for p in pairs])
    err = np.array([p[1] for p in pairs])
    if eps.size >= 2 and np.any(np.diff(eps) >= 0):
        raise BadParams("eps values must be strictly decreasing")
    if np.any(err < 0) or np.any(~np.isfinite(err)):
        raise BadParams("errors must be finite and non-negative")
    keep = err > noise_floor
    dropped = [float(x) for x in eps[~keep]]
    eps_k, err_k = eps[keep], err[keep]
    if eps_k.size < 2:
        raise DegenerateFit(f"only {eps_k.size} point(s) above the noise floor {noise_floor:g}")
    x, y = np.log(eps_k), np.log(err_k)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return ErrorSeries(eps_k, err_k, float(slope), float(r2), dropped)


# ---------------------------------------------------------------------------
# full orbit versus decoupled system
# ---------------------------------------------------------------------------


@dataclass
class CompareRun:
    """Decoupled and pulled-back exact slow variables on a common time grid."""

    t: np.ndarray
    z_gy: np.ndarray
    z_fo: np.ndarray
    error: np.ndarray
    mu_drift: np.ndarray
    failed_times: List[float]
    fo: Trajectory
    gy: GyroTrajectory
    regime: ScalingRegime
    N: int

    def sup_error(self) -> float:
        return float(np.nanmax(self.error))

    def max_mu_drift(self) -> float:
        return float(np.nanmax(self.mu_drift))


def _time_grid(span: float, n_out: int, dt: float) -> int:
    """Number of internal steps per output interval for a target ``dt``."""
    return max(1, int(math.ceil(abs(span) / n_out / dt - 1e-9)))


def pull_back(model, regime, N, x, v, t, tol=1e-12, max_iter=50):
    """Inverse gyro map of a stack of particle states.

    Returns the hat-gyro state and the list of row indices (along the first
    axis) where the fixed-point iteration failed; failed rows are ``nan``.
    """
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    try:
        hs = tau_gy_inverse(model, regime, N, ParticleState(x, v, t), tol=tol, max_iter=max_iter)
        return hs, []
    except NoConvergence:
        pass
    rows, failed = [], []
    for k in range(x.shape[0]):
        try:
            rows.append(tau_gy_inverse(model, regime, N, ParticleState(x[k], v[k], t[k]), tol=tol, max_iter=max_iter))
        except NoConvergence:
            failed.append(k)
            nan = np.full(x.shape[1:-1], np.nan)
            rows.append(HatGyroState(np.full(x.shape[1:], np.nan), nan, nan, nan, t[k]))
    stack = lambda name: np.stack([getattr(h, name) for h in rows])  # noqa: E731
    return HatGyroState(stack("r"), stack("q_par"), stack("mu_hat"), stack("alpha"), t), failed


def compare(
    model: FieldModel,
    regime: ScalingRegime,
    N: int,
    hs0: HatGyroState,
    t1: float = 1.0,
    *,
    n_out: int = 100,
    fo_dt: Optional[float] = None,
    gy_dt: float = DEFAULT_GY_DT,
    scheme: str = "rk4",
    check_horizon: bool = False,
) -> CompareRun:
    """Integrate both systems from the same hat-gyro initial state.

    The full orbit starts at ``tau_gy(hs0)``; it is pulled back at ``n_out + 1``
    common output times.
    """
    t0 = float(np.asarray(hs0.t).reshape(-1)[0])
    span = float(t1) - t0
    if span <= 0:
        raise BadParams("t1 must exceed the initial time")
    fo_dt = default_dt(regime, scheme) if fo_dt is None else fo_dt
    m_fo = _time_grid(span, n_out, fo_dt)
    m_gy = _time_grid(span, n_out, gy_dt)
    s0 = tau_gy(model, regime, N, hs0)
    fo = integrate(
        model, regime, s0, t1, dt=span / (n_out * m_fo), scheme=scheme, stride=m_fo, check_horizon=check_horizon
    )
    gy = integrate_gy(model, regime, N, hs0, t1, dt=span / (n_out * m_gy), stride=m_gy)
    if len(fo) != len(gy):
        raise RuntimeError("output grids of the two integrations differ")
    tt = np.broadcast_to(fo.t.reshape((-1,) + (1,) * (fo.x.ndim - 2)), fo.x.shape[:-1])
    hs_fo, failed = pull_back(model, regime, N, fo.x, fo.v, tt)
    z_fo = hs_fo.slow()
    z_gy = gy.slow()
    diff = np.abs(z_gy - z_fo).reshape(len(fo), -1)
    err = np.max(diff, axis=1)
    mu0 = np.asarray(hs0.mu_hat, dtype=float)
    drift = np.abs(hs_fo.mu_hat - mu0).reshape(len(fo), -1).max(axis=1)
    return CompareRun(
        t=fo.t,
        z_gy=z_gy,
        z_fo=z_fo,
        error=err,
        mu_drift=drift,
        failed_times=[float(fo.t[k]) for k in failed],
        fo=fo,
        gy=gy,
        regime=regime,
        N=N,
    )


@dataclass
class TimeSeries:
    t: np.ndarray
    values: np.ndarray
    failed_times: List[float] = field(default_factory=list)

    def sup(self) -> float:
        return float(np.nanmax(self.values))

    def __call__(self, t):
        return np.interp(t, self.t, self.values)


def slow_error(model, regime, N, hs0, t1=1.0, dts=None, **kw) -> TimeSeries:
    """``||zbar(t) - z(t)||_max`` on the output grid.

    ``dts`` is an optional ``(full_orbit_dt, gyro_dt)`` pair.
    """
    if dts is not None:
        kw.setdefault("fo_dt", dts[0])
        kw.setdefault("gy_dt", dts[1])
    run = compare(model, regime, N, hs0, t1, **kw)
    return TimeSeries(run.t, run.error, run.failed_times)


def moment_drift(model, regime, N, hs0, t1=1.0, **kw) -> float:
    """``max_t |mu_hat(t) - mu_hat(t0)|`` of the pulled-back exact orbit."""
    return compare(model, regime, N, hs0, t1, **kw).max_mu_drift()


# ---------------------------------------------------------------------------
# eps sweeps
# ---------------------------------------------------------------------------


def check_ladder(eps_values: Sequence[float]):
    eps = [float(e) for e in eps_values]
    if len(eps) < 2 or any(b >= a for a, b in zip(eps, eps[1:])):
        raise BadParams("ladder must decrease")
    return eps


def run_ladder(job: Callable[[float], object], eps_values: Sequence[float], threads: int = 1) -> Dict[float, object]:
    """Evaluate ``job(eps)`` for each ladder member; results keyed by ``eps``.

    Jobs share no mutable state, so they may run on a thread pool; the
    returned mapping is ordered by decreasing ``eps`` regardless of finishing
    order.
    """
    eps = check_ladder(eps_values)
    if threads <= 1:
        results = [job(e) for e in eps]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, eps))
    return dict(zip(eps, results))


@dataclass
class SweepResult:
    runs: Dict[float, CompareRun]
    error_fit: Optional[ErrorSeries]
    drift_fit: Optional[ErrorSeries]
    error_fit_issue: Optional[str] = None
    drift_fit_issue: Optional[str] = None


def _safe_fit(pairs):
    try:
        return convergence_fit(pairs), None
    except DegenerateFit as exc:
        return None, str(exc)


def sweep(model, regime, N, hs0, eps_values, t1=1.0, threads=1, **kw) -> SweepResult:
    """Slow-error and moment-drift ladders with fitted slopes."""

    def job(e):
        return compare(model, regime.with_eps(e), N, hs0, t1, **kw)

    runs = run_ladder(job, eps_values, threads)
    ef, ei = _safe_fit([(e, r.sup_error()) for e, r in runs.items()])
    df, di = _safe_fit([(e, r.max_mu_drift()) for e, r in runs.items()])
    return SweepResult(runs, ef, df, ei, di)


# ---------------------------------------------------------------------------
# Gronwall bound
# ---------------------------------------------------------------------------


@dataclass
class GronwallBound:
    ell_Lambda: float
    S_inf: float
    eps: float
    N: int
    c: float = 0.0
    t0: float = 0.0

    def __call__(self, t):
        a = self.ell_Lambda
        b = self.eps**self.N * self.S_inf
        return gronwall_envelope(a, b, self.c, np.asarray(t, dtype=float) - self.t0)


def gronwall_envelope(a: float, b: float, c: float, dt):
    """``(b/a)(exp(a dt) - 1) + c exp(a dt)``, with the ``a -> 0`` limit ``b dt + c``."""
    dt = np.asarray(dt, dtype=float)
    if a == 0.0:
        return b * dt + c
    g = np.expm1(a * dt)
    return (b / a) * g + c * (g + 1.0)


def _lambda(model, regime, N, z, t):
    hs = HatGyroState(z[..., :3], z[..., 3], z[..., 4], 0.0, t)
    f = rhs_decoupled(model, regime, N, hs)
    return np.concatenate([f.dr, f.dq_par[..., None], f.dmu[..., None]], axis=-1)


def _jacobian_inf_norm(model, regime, N, z, t, h=1e-6):
    cols = []
    for j in range(5):
        e = np.zeros(5)
        e[j] = h
        cols.append((_lambda(model, regime, N, z + e, t) - _lambda(model, regime, N, z - e, t)) / (2 * h))
    J = np.stack(cols, axis=-1)  # (..., 5 outputs, 5 inputs)
    return np.max(np.sum(np.abs(J), axis=-1), axis=-1)


def gronwall_bound(model, regime, N, hs0, t1=1.0, n_probe=100, run: Optional[CompareRun] = None, **kw):
    """Probe-estimated Gronwall envelope of the slow error.

    ``ell_Lambda`` is the largest induced max-norm of the finite-difference
    Jacobian of the slow right-hand side over probe points on both paths.
    ``S_inf`` is ``eps**-N`` times the largest max-norm difference between the
    pulled-back exact slow velocity (central difference over one short
    full-orbit step) and the decoupled right-hand side at the same point.

    Returns the bound together with the comparison run it was built from.
    """
    if n_probe < 100:
        raise BadParams("n_probe must be >= 100")
    run = run if run is not None else compare(model, regime, N, hs0, t1, n_out=n_probe, **kw)
    eps = regime.eps
    idx = np.unique(np.linspace(0, len(run.t) - 1, n_probe).round().astype(int))
    fo = run.fo
    x, v = fo.x[idx], fo.v[idx]
    t = np.broadcast_to(fo.t[idx].reshape((-1,) + (1,) * (x.ndim - 2)), x.shape[:-1])
    delta = default_dt(regime, "rk4")
    plus = step_rk4(model, regime, ParticleState(x, v, t), delta)
    minus = step_rk4(model, regime, ParticleState(x, v, t), -delta)
    zp = pull_back(model, regime, N, plus.x, plus.v, t + delta)[0].slow()
    zm = pull_back(model, regime, N, minus.x, minus.v, t - delta)[0].slow()
    z = run.z_fo[idx]
    zdot = (zp - zm) / (2 * delta)
    resid = np.abs(zdot - _lambda(model, regime, N, z, t)).max(axis=-1)
    S_inf = float(np.nanmax(resid)) / eps**N
    ell = max(
        float(np.nanmax(_jacobian_inf_norm(model, regime, N, z, t))),
        float(np.nanmax(_jacobian_inf_norm(model, regime, N, run.z_gy[idx], t))),
    )
    c = float(np.max(np.abs(run.z_gy[0] - run.z_fo[0])))
    t0 = float(run.t[0])
    return GronwallBound(ell, S_inf, eps, N, c=c, t0=t0), run


# ---------------------------------------------------------------------------
# distribution error
# ---------------------------------------------------------------------------


def query_points(n: int, seed: int = 0, r_box: float = 0.5, q_max: float = 1.0, mu_range=(0.2, 0.8)):
    """Deterministic random query set ``(z, alpha)``."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(-r_box, r_box, (n, 3))
    q = rng.uniform(-q_max, q_max, n)
    mu = rng.uniform(*mu_range, n)
    al = rng.uniform(0.0, 2 * np.pi, n)
    return HatGyroState(r, q, mu, al, np.zeros(n))


def default_F0(hs: HatGyroState):
    """Smooth positive gyro-averaged initial density."""
    r = np.asarray(hs.r)
    return np.exp(-0.5 * np.asarray(hs.q_par) ** 2 - 0.5 * np.sum(r**2, axis=-1) - np.asarray(hs.mu_hat))


def default_f0_tilde(hs: HatGyroState):
    """Zero-average fluctuation ``cos(alpha) exp(-|r|**2/2)``."""
    r = np.asarray(hs.r)
    return np.cos(np.asarray(hs.alpha)) * np.exp(-0.5 * np.sum(r**2, axis=-1))


@dataclass
class DistributionError:
    max_error: float
    errors: np.ndarray
    F_avg: np.ndarray
    f_gy: np.ndarray


def distribution_error(
    model,
    regime,
    N,
    F0_avg=default_F0,
    f0_tilde=default_f0_tilde,
    query_set: Optional[HatGyroState] = None,
    t1: float = 1.0,
    t0: float = 0.0,
    *,
    fo_dt: Optional[float] = None,
    gy_dt: float = DEFAULT_GY_DT,
    scheme: str = "rk4",
) -> DistributionError:
    """Largest ``|<F>(z, t1) - f_gy(z, alpha, t1)|`` over the query set.

    The initial gyro density is ``F0_avg + eps**N f0_tilde``.  ``f_gy`` is
    transported along backward full-orbit characteristics (mapped through the
    gyro map and its inverse); ``<F>`` along backward decoupled
    characteristics.  At ``t1 == t0`` nothing is transported and the result
    is ``eps**N max |f0_tilde|`` by construction.
    """
    if query_set is None:
        query_set = query_points(50)
    eps = regime.eps
    q = HatGyroState(
        np.asarray(query_set.r, float),
        np.asarray(query_set.q_par, float),
        np.asarray(query_set.mu_hat, float),
        np.asarray(query_set.alpha, float),
        np.full(np.shape(query_set.q_par), float(t1)),
    )
    if float(t1) == float(t0):
        F = np.asarray(F0_avg(q), float)
        f = F + eps**N * np.asarray(f0_tilde(q), float)
        err = np.abs(F - f)
        return DistributionError(float(err.max()), err, F, f)
    F = np.asarray(evaluate_F(model, regime, N, F0_avg, q, t1, t0=t0, dt=gy_dt), float)
    s1 = tau_gy(model, regime, N, q)
    fo = integrate(model, regime, s1, t0, dt=fo_dt, scheme=scheme, stride=10**9, check_horizon=False)
    foot, failed = pull_back(model, regime, N, fo.x[-1:], fo.v[-1:], np.full((1,) + fo.x.shape[1:-1], t0))
    foot = HatGyroState(foot.r[0], foot.q_par[0], foot.mu_hat[0], foot.alpha[0], foot.t[0])
    f = np.asarray(F0_avg(foot), float) + eps**N * np.asarray(f0_tilde(foot), float)
    err = np.abs(F - f)
    return DistributionError(float(np.nanmax(err)), err, F, f)


# ---------------------------------------------------------------------------
# gauge invariance
# ---------------------------------------------------------------------------

GAUGES = {
    "zero": (lambda x, t: 0.0 * x[..., 0] + 0.0 * t, lambda x, t: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(t) + (3,))), lambda x, t: 0.0 * x[..., 0] + 0.0 * t),
    "x1t": (
        lambda x, t: x[..., 0] * t,
        lambda x, t: np.stack(np.broadcast_arrays(t + 0.0 * x[..., 0], 0.0 * x[..., 0], 0.0 * x[..., 0]), axis=-1),
        lambda x, t: x[..., 0] + 0.0 * t,
    ),
    "sincos": (
        lambda x, t: np.sin(x[..., 0]) * np.cos(t),
        lambda x, t: np.stack(
            np.broadcast_arrays(np.cos(x[..., 0]) * np.cos(t), 0.0 * x[..., 0], 0.0 * x[..., 0]), axis=-1
        ),
        lambda x, t: -np.sin(x[..., 0]) * np.sin(t),
    ),
}


def gauge(name: str):
    try:
        return GAUGES[name]
    except KeyError:
        raise BadParams(f"unknown gauge {name!r}; choose from {sorted(GAUGES)}") from None


@dataclass
class GaugeReport:
    generator_deviation: float
    generators_bitwise_equal: bool
    gy_deviation: float
    fo_deviation: float
    potential_consistency: float
    fd_backend_gy_deviation: Optional[float]


def _max_dev(a, b):
    return float(max(np.max(np.abs(np.asarray(x) - np.asarray(y)), initial=0.0) for x, y in zip(a, b)))


def gauge_check(
    model: FieldModel,
    chi,
    regime: ScalingRegime,
    N: int,
    hs0: HatGyroState,
    t1: float = 0.2,
    *,
    fd_backend: bool = True,
    fo_dt: Optional[float] = None,
    gy_dt: float = DEFAULT_GY_DT,
) -> GaugeReport:
    """Repeat an experiment in a shifted gauge and report deviations.

    ``chi`` is either a gauge name from :data:`GAUGES` or a triple
    ``(chi, grad_chi, dchi_dt)`` (the last two may be ``None``).  Besides the
    generator, decoupled-trajectory and full-orbit deviations, the report
    carries the finite-difference consistency of the shifted potentials and,
    with ``fd_backend``, the decoupled-trajectory deviation when both gauges
    derive ``B1`` and ``E`` from their potentials numerically.
    """
    triple = gauge(chi) if isinstance(chi, str) else chi
    shifted = GaugeShifted(model, *triple)
    gs = hat_to_gyro(model, regime, N, hs0)
    g_base = generators(model, regime, N, gs).arrays()
    g_shift = generators(shifted, regime, N, gs).arrays()
    bitwise = all(np.array_equal(a, b) for a, b in zip(g_base, g_shift))
    gen_dev = _max_dev(g_base, g_shift)
    gy_a = integrate_gy(model, regime, N, hs0, t1, dt=gy_dt).slow()
    gy_b = integrate_gy(shifted, regime, N, hs0, t1, dt=gy_dt).slow()
    s0 = tau_gy(model, regime, N, hs0)
    fo_a = integrate(model, regime, s0, t1, dt=fo_dt, scheme="rk4", check_horizon=False)
    fo_b = integrate(shifted, regime, s0, t1, dt=fo_dt, scheme="rk4", check_horizon=False)
    fo_dev = max(_max_dev([fo_a.x], [fo_b.x]), _max_dev([fo_a.v], [fo_b.v]))
    from .fields import check_consistency, random_points

    pts = random_points(model, 20, rng=0, shrink=0.3)
    cons = check_consistency(shifted, pts, t=0.3 + 0.0 * pts[..., 0]).max_residual
    fd_dev = None
    if fd_backend:
        fa = potentials_only(model)
        fb = potentials_only(shifted)
        fd_dev = _max_dev([integrate_gy(fa, regime, N, hs0, t1, dt=gy_dt).slow()], [integrate_gy(fb, regime, N, hs0, t1, dt=gy_dt).slow()])
    return GaugeReport(gen_dev, bitwise, _max_dev([gy_a], [gy_b]), fo_dev, float(cons), fd_dev)


__all__ = [
    "CONVERGENCE_COLUMNS",
    "CompareRun",
    "DistributionError",
    "ErrorSeries",
    "GAUGES",
    "GaugeReport",
    "GronwallBound",
    "SweepResult",
    "TimeSeries",
    "check_ladder",
    "compare",
    "convergence_fit",
    "default_F0",
    "default_f0_tilde",
    "distribution_error",
    "gauge",
    "gauge_check",
    "gronwall_bound",
    "gronwall_envelope",
    "moment_drift",
    "pull_back",
    "query_points",
    "run_ladder",
    "slow_error",
    "sweep",
]
