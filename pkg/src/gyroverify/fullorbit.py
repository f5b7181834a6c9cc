"""Reference integrators for the stiff full-orbit equations.

In dimensionless form the particle obeys::

    dx/dt = v
    dv/dt = v x B0(eps_B x) / eps + v x B1(x, t) + E(x, t)

The gyro-period is ``O(eps)``, so the step size must resolve ``eps``.  Two
fixed-step schemes are provided: the Boris rotation-kick pusher and classical
RK4.  Both work on a batch of particles at once (leading axes of ``x`` and
``v``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._vec import as_vec, cross, dot, norm
from .errors import BadParams, DomainEscape, HorizonExceeded
from .fields import FieldModel, ScalingRegime
from .frame import ParticleState

SCHEMES = ("boris", "rk4")
TRAJECTORY_COLUMNS = ("t", "x1", "x2", "x3", "v1", "v2", "v3", "energy")


def default_dt(regime: ScalingRegime, scheme: str) -> float:
    """``eps/100`` for Boris, ``eps/200`` for RK4."""
    return regime.eps / (100.0 if scheme == "boris" else 200.0)


def lorentz_fields(model: FieldModel, regime: ScalingRegime, x, t):
    """Total magnetic field ``B0(eps_B x)/eps + B1`` and ``E`` at ``(x, t)``."""
    Btot = model.B0(regime.eps_B * x) / regime.eps + model.B1(x, t)
    return Btot, model.E(x, t)


def rhs(model: FieldModel, regime: ScalingRegime, x, v, t):
    Btot, E = lorentz_fields(model, regime, x, t)
    return v, cross(v, Btot) + E


def _check(model, x, t):
    if not np.all(model.contains(x)):
        raise DomainEscape(f"particle left the domain at t={float(np.max(t)):.6g}", time=float(np.max(t)))


def step_boris(model: FieldModel, regime: ScalingRegime, s: ParticleState, dt: float) -> ParticleState:
    """One Boris step (drift-kick-rotate-kick-drift).

    Fields are evaluated at the half-step position and time ``t + dt/2``.
    With ``E = 0`` the speed is preserved up to round-off.
    """
    x, v = as_vec(s.x), as_vec(s.v)
    t = np.asarray(s.t, dtype=float)
    xh = x + 0.5 * dt * v
    th = t + 0.5 * dt
    _check(model, xh, th)
    Btot, E = lorentz_fields(model, regime, xh, th)
    vm = v + 0.5 * dt * E
    tv = 0.5 * dt * Btot
    sv = 2.0 * tv / (1.0 + dot(tv, tv))[..., None]
    vp = vm + cross(vm + cross(vm, tv), sv)
    vn = vp + 0.5 * dt * E
    xn = xh + 0.5 * dt * vn
    _check(model, xn, t + dt)
    return ParticleState(xn, vn, t + dt)


def step_rk4(model: FieldModel, regime: ScalingRegime, s: ParticleState, dt: float) -> ParticleState:
    """One classical fourth-order Runge-Kutta step."""
    x, v = as_vec(s.x), as_vec(s.v)
    t = np.asarray(s.t, dtype=float)
    _check(model, x, t)
    k1x, k1v = rhs(model, regime, x, v, t)
    k2x, k2v = rhs(model, regime, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, t + 0.5 * dt)
    k3x, k3v = rhs(model, regime, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, t + 0.5 * dt)
    k4x, k4v = rhs(model, regime, x + dt * k3x, v + dt * k3v, t + dt)
    xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    _check(model, xn, t + dt)
    return ParticleState(xn, vn, t + dt)


_STEPPERS = {"boris": step_boris, "rk4": step_rk4}


@dataclass
class Trajectory:
    """Sampled full-orbit solution.

    ``t`` has shape ``(n,)``; ``x`` and ``v`` have shape ``(n, ..., 3)`` with the
    particle batch in the middle axes.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray
    dt_used: float
    scheme: str

    def __len__(self):
        return self.t.shape[0]

    def state(self, k: int) -> ParticleState:
        return ParticleState(self.x[k], self.v[k], self.t[k])

    @property
    def states(self):
        return [self.state(k) for k in range(len(self))]

    def energy_drift(self) -> float:
        """Largest relative deviation of the energy from its initial value."""
        e0 = self.energy[0]
        scale = np.maximum(np.abs(e0), 1e-300)
        return float(np.max(np.abs(self.energy - e0) / scale))

    def to_csv(self, particle: Optional[int] = None) -> str:
        """CSV text with columns ``t,x1,x2,x3,v1,v2,v3,energy``.

        For a batch, ``particle`` selects the row of the batch (flattened).
        """
        x = self.x.reshape(len(self), -1, 3)
        v = self.v.reshape(len(self), -1, 3)
        e = self.energy.reshape(len(self), -1)
        if x.shape[1] > 1 and particle is None:
            raise BadParams("batch trajectory: choose a particle index")
        p = 0 if particle is None else particle
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for k in range(len(self)):
            w.writerow([repr(float(self.t[k]))] + [repr(float(c)) for c in (*x[k, p], *v[k, p], e[k, p])])
        return buf.getvalue()


def energy(model: FieldModel, x, v, t):
    """``|v|**2 / 2 + phi(x, t)``."""
    return 0.5 * dot(v, v) + model.phi(x, t)


def _box_radius(model: FieldModel, x0):
    lo, hi = model.domain
    x0 = np.asarray(x0, dtype=float)
    return float(np.min(np.minimum(x0 - lo, hi - x0)))


def max_electric_field(model: FieldModel, t0=0.0, t1=1.0, n: int = 9, n_t: int = 5):
    """Grid estimate of ``max |E|`` over the domain box and ``[t0, t1]``."""
    lo, hi = model.domain
    axes = [np.linspace(lo[i], hi[i], n) for i in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    best = 0.0
    for t in np.linspace(min(t0, t1), max(t0, t1), n_t):
        best = max(best, float(np.max(norm(model.E(pts, t)))))
    return best


def existence_time(model: FieldModel, x0, v0, v_max: float, t0=0.0, t_probe=1.0, e_max=None):
    """Guaranteed existence time ``min(rho / v_max, rho_kin / (E_max v_max))``.

    ``rho`` is the distance from ``x0`` to the domain boundary and
    ``rho_kin = (v_max**2 - |v0|**2) / 2``.  ``E_max`` is estimated on a grid
    unless given.
    """
    x0, v0 = as_vec(x0), as_vec(v0)
    speed = float(np.max(norm(v0)))
    if v_max <= speed:
        raise BadParams(f"v_max={v_max} must exceed the initial speed {speed}")
    rho = min(_box_radius(model, p) for p in x0.reshape(-1, 3))
    rho_kin = 0.5 * (v_max**2 - speed**2)
    if e_max is None:
        e_max = max_electric_field(model, t0, t0 + t_probe)
    t_space = rho / v_max
    t_kin = math.inf if e_max == 0.0 else rho_kin / (e_max * v_max)
    return min(t_space, t_kin)


def integrate(
    model: FieldModel,
    regime: ScalingRegime,
    s0: ParticleState,
    t1: float,
    dt: Optional[float] = None,
    scheme: str = "boris",
    stride: int = 1,
    *,
    v_max: Optional[float] = None,
    check_horizon: bool = True,
) -> Trajectory:
    """Fixed-step integration from ``s0.t`` to ``t1`` (forward or backward).

    Parameters
    ----------
    dt : float, optional
        Step size magnitude; defaults to :func:`default_dt`.  It is adjusted
        down so that an integer number of steps lands on ``t1``.
    stride : int
        Output every ``stride`` internal steps (the final state is always
        included).
    v_max : float, optional
        Speed bound for the existence-time check; defaults to twice the
        initial speed.

    Raises
    ------
    HorizonExceeded
        If ``|t1 - t0|`` exceeds the guaranteed existence time.
    DomainEscape
        If a particle leaves the domain; ``.time`` holds the escape time.
    """
    if scheme not in _STEPPERS:
        raise BadParams(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if stride < 1:
        raise BadParams("stride must be >= 1")
    x0, v0 = as_vec(s0.x), as_vec(s0.v)
    t0 = float(np.asarray(s0.t).reshape(-1)[0])
    span = float(t1) - t0
    if check_horizon and span != 0.0:
        vm = v_max if v_max is not None else 2.0 * max(float(np.max(norm(v0))), 1e-12)
        horizon = existence_time(model, x0, v0, vm, t0=min(t0, t1), t_probe=abs(span))
        if abs(span) > horizon * (1 + 1e-12):
            raise HorizonExceeded(f"|t1 - t0| = {abs(span):.6g} exceeds existence time {horizon:.6g}")
    if dt is None:
        dt = default_dt(regime, scheme)
    if dt <= 0:
        raise BadParams("dt must be positive")
    n_steps = max(1, int(math.ceil(abs(span) / dt - 1e-9))) if span != 0.0 else 0
    h = span / n_steps if n_steps else 0.0
    step = _STEPPERS[scheme]
    batch = x0.shape[:-1]
    s = ParticleState(x0.copy(), v0.copy(), np.full(batch, t0))
    ts, xs, vs = [t0], [s.x], [s.v]
    for k in range(1, n_steps + 1):
        s = step(model, regime, s, h)
        if k % stride == 0 or k == n_steps:
            tk = t0 + k * h
            s = ParticleState(s.x, s.v, np.full(batch, tk))
            ts.append(tk)
            xs.append(s.x)
            vs.append(s.v)
    t_arr = np.asarray(ts)
    x_arr, v_arr = np.stack(xs), np.stack(vs)
    t_b = t_arr.reshape((-1,) + (1,) * len(batch))
    en = energy(model, x_arr, v_arr, t_b)
    return Trajectory(t_arr, x_arr, v_arr, np.broadcast_to(en, x_arr.shape[:-1]).copy(), abs(h), scheme)


def gyro_period(model: FieldModel, regime: ScalingRegime, x) -> float:
    """``2 pi eps / |B0(eps_B x)|``."""
    return float(2 * np.pi * regime.eps / norm(model.B0(regime.eps_B * as_vec(x))))


__all__ = [
    "SCHEMES",
    "TRAJECTORY_COLUMNS",
    "ParticleState",
    "Trajectory",
    "default_dt",
    "energy",
    "existence_time",
    "gyro_period",
    "integrate",
    "lorentz_fields",
    "max_electric_field",
    "rhs",
    "step_boris",
    "step_rk4",
]
