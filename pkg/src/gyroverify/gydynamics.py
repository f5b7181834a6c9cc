"""Decoupled gyro-center dynamics.

With the auxiliary potential ``A* = A0 + eps A1 + eps q_par b0`` the slow
variables obey::

    dr/dt     = [(q_par + eps dH/dq_par) B* + eps E* x b0] / B*_par
    dq_par/dt = B* . E* / B*_par
    dmu_hat/dt = 0
    dalpha/dt = |B0| / eps + dH/dmu_hat

where ``B* = curl A*``, ``B*_par = B* . b0``, ``E* = E - mu_hat grad|B0| -
eps grad(dH)`` and ``dH`` is the Hamiltonian correction of order ``N``.  All
spatial derivatives here are physical (they include the ``eps_B`` factor of
the guide field).  The right-hand side does not depend on ``alpha``, so the
slow subsystem is integrated with an ``eps``-independent step and ``alpha``
follows by quadrature.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._vec import as_vec, cross, curl_from_grad, dot, norm
from .errors import BadParams, BStarParZero
from .fields import FieldModel, ScalingRegime
from .frame import frame_derivatives
from .gymap import HatGyroState, delta_H

BSTAR_TOL = 1e-10
DEFAULT_GY_DT = 1e-3
GY_COLUMNS = ("t", "r1", "r2", "r3", "q_par", "mu_hat", "alpha", "H_gy")


@dataclass
class EffectiveFields:
    A_star: np.ndarray
    B_star: np.ndarray
    E_star: np.ndarray
    B_star_par: np.ndarray
    b0: np.ndarray
    absB: np.ndarray
    dH_dqpar: np.ndarray
    dH_dmu: np.ndarray


def _guide(model, regime, r):
    """Guide-field quantities with physical derivatives."""
    eb = regime.eps_B
    d = frame_derivatives(model, eb * r)
    grad_b = eb * d.grad_b0
    return d.absB, d.b0, eb * d.grad_absB, curl_from_grad(grad_b)


def _unpack(hs: HatGyroState):
    r = as_vec(hs.r)
    batch = np.broadcast_shapes(r.shape[:-1], np.shape(hs.q_par), np.shape(hs.mu_hat), np.shape(hs.t))
    r = np.broadcast_to(r, batch + (3,))
    qp = np.broadcast_to(np.asarray(hs.q_par, dtype=float), batch)
    mu = np.broadcast_to(np.asarray(hs.mu_hat, dtype=float), batch)
    t = np.broadcast_to(np.asarray(hs.t, dtype=float), batch)
    return r, qp, mu, t


def effective_fields(
    model: FieldModel, regime: ScalingRegime, N: int, hs: HatGyroState, *, check: bool = True
) -> EffectiveFields:
    """``A*``, ``B*``, ``E*`` and ``B*_par`` at ``(r, q_par, mu_hat, t)``.

    Raises
    ------
    BStarParZero
        If ``|B*_par| < 1e-10`` anywhere in the batch (when ``check``).
    """
    r, qp, mu, t = _unpack(hs)
    eps, eb = regime.eps, regime.eps_B
    absB, b0, grad_abs, curl_b = _guide(model, regime, r)
    dH = delta_H(model, regime, N, HatGyroState(r, qp, mu, 0.0, t), partials=True)
    A0_phys = model.A0(eb * r) / eb if eb != 0.0 else np.zeros_like(r)
    A_star = A0_phys + eps * model.A1(r, t) + eps * qp[..., None] * b0
    B_star = model.B0(eb * r) + eps * model.B1(r, t) + eps * qp[..., None] * curl_b
    E_star = model.E(r, t) - mu[..., None] * grad_abs - eps * dH.grad_r
    B_par = dot(B_star, b0)
    if check and np.any(np.abs(B_par) < BSTAR_TOL):
        raise BStarParZero(f"|B*_par| < {BSTAR_TOL}")
    return EffectiveFields(A_star, B_star, E_star, B_par, b0, absB, dH.d_qpar, dH.d_mu)


@dataclass
class SlowRHS:
    dr: np.ndarray
    dq_par: np.ndarray
    dmu: np.ndarray
    dalpha: np.ndarray


def rhs_decoupled(model: FieldModel, regime: ScalingRegime, N: int, hs: HatGyroState) -> SlowRHS:
    """Right-hand side of the decoupled system at ``hs`` (``alpha`` is ignored)."""
    eps = regime.eps
    if eps == 0.0:
        raise BadParams("the decoupled system needs eps > 0 (gyro-frequency 1/eps)")
    ef = effective_fields(model, regime, N, hs)
    r, qp, mu, t = _unpack(hs)
    inv = 1.0 / ef.B_star_par
    dr = ((qp + eps * ef.dH_dqpar) * inv)[..., None] * ef.B_star + eps * inv[..., None] * cross(ef.E_star, ef.b0)
    dq = dot(ef.B_star, ef.E_star) * inv
    dalpha = ef.absB / eps + ef.dH_dmu
    return SlowRHS(dr, dq, np.zeros_like(dq), dalpha)


def gy_energy(model: FieldModel, regime: ScalingRegime, N: int, hs: HatGyroState):
    """``H_gy = q_par**2/2 + mu_hat |B0| + phi + eps dH``."""
    r, qp, mu, t = _unpack(hs)
    absB = norm(model.B0(regime.eps_B * r))
    dH = delta_H(model, regime, N, HatGyroState(r, qp, mu, 0.0, t)).value
    return 0.5 * qp**2 + mu * absB + model.phi(r, t) + regime.eps * dH


@dataclass
class GyroTrajectory:
    """Sampled solution of the decoupled system.

    Arrays are time-major: ``r`` has shape ``(n, ..., 3)``, the scalars
    ``(n, ...)``.
    """

    t: np.ndarray
    r: np.ndarray
    q_par: np.ndarray
    mu_hat: np.ndarray
    alpha: np.ndarray
    H_gy: np.ndarray
    regime: ScalingRegime
    N: int
    dt_used: float

    def __len__(self):
        return self.t.shape[0]

    def state(self, k: int) -> HatGyroState:
        tk = np.broadcast_to(self.t[k], self.q_par[k].shape)
        return HatGyroState(self.r[k], self.q_par[k], self.mu_hat[k], self.alpha[k], tk)

    @property
    def states(self):
        return [self.state(k) for k in range(len(self))]

    def slow(self) -> np.ndarray:
        """``(n, ..., 5)`` array of ``(r, q_par, mu_hat)``."""
        return np.concatenate([self.r, self.q_par[..., None], self.mu_hat[..., None]], axis=-1)

    def to_csv(self, particle: Optional[int] = None) -> str:
        n = len(self)
        r = self.r.reshape(n, -1, 3)
        cols = [a.reshape(n, -1) for a in (self.q_par, self.mu_hat, self.alpha, self.H_gy)]
        if r.shape[1] > 1 and particle is None:
            raise BadParams("batch trajectory: choose a particle index")
        p = 0 if particle is None else particle
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(GY_COLUMNS)
        for k in range(n):
            row = [self.t[k], *r[k, p], *(c[k, p] for c in cols)]
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _stage(model, regime, N, r, qp, mu, t):
    f = rhs_decoupled(model, regime, N, HatGyroState(r, qp, mu, 0.0, t))
    return f.dr, f.dq_par, f.dalpha


def integrate_gy(
    model: FieldModel,
    regime: ScalingRegime,
    N: int,
    hs0: HatGyroState,
    t1: float,
    dt: float = DEFAULT_GY_DT,
    stride: int = 1,
) -> GyroTrajectory:
    """RK4 integration of the slow subsystem from ``hs0.t`` to ``t1``.

    ``mu_hat`` is never updated.  ``alpha`` is accumulated with the RK4
    weights of its (slow-state dependent) rate, so it does not feed back.
    Backward integration (``t1 < t0``) is allowed.
    """
    if dt <= 0:
        raise BadParams("dt must be positive")
    if stride < 1:
        raise BadParams("stride must be >= 1")
    r, qp, mu, tb = _unpack(hs0)
    r, qp = r.copy(), qp.copy()
    mu = mu.copy()
    alpha = np.broadcast_to(np.asarray(hs0.alpha, dtype=float), qp.shape).copy()
    t0 = float(np.asarray(hs0.t).reshape(-1)[0])
    span = float(t1) - t0
    n_steps = max(1, int(math.ceil(abs(span) / dt - 1e-9))) if span != 0.0 else 0
    h = span / n_steps if n_steps else 0.0
    batch = qp.shape
    ts, rs, qs, als = [t0], [r.copy()], [qp.copy()], [alpha.copy()]
    for k in range(1, n_steps + 1):
        t = np.full(batch, t0 + (k - 1) * h)
        k1 = _stage(model, regime, N, r, qp, mu, t)
        k2 = _stage(model, regime, N, r + 0.5 * h * k1[0], qp + 0.5 * h * k1[1], mu, t + 0.5 * h)
        k3 = _stage(model, regime, N, r + 0.5 * h * k2[0], qp + 0.5 * h * k2[1], mu, t + 0.5 * h)
        k4 = _stage(model, regime, N, r + h * k3[0], qp + h * k3[1], mu, t + h)
        r = r + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        qp = qp + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        alpha = alpha + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        model.require_inside(r, time=t0 + k * h)
        if k % stride == 0 or k == n_steps:
            ts.append(t0 + k * h)
            rs.append(r.copy())
            qs.append(qp.copy())
            als.append(alpha.copy())
    t_arr = np.asarray(ts)
    r_arr, q_arr, a_arr = np.stack(rs), np.stack(qs), np.stack(als)
    mu_arr = np.broadcast_to(mu, q_arr.shape).copy()
    tt = np.broadcast_to(t_arr.reshape((-1,) + (1,) * len(batch)), q_arr.shape)
    H = gy_energy(model, regime, N, HatGyroState(r_arr, q_arr, mu_arr, 0.0, tt))
    return GyroTrajectory(t_arr, r_arr, q_arr, mu_arr, np.mod(a_arr, 2 * np.pi), H, regime, N, abs(h))


def evaluate_F(
    model: FieldModel,
    regime: ScalingRegime,
    N: int,
    F0: Callable[[HatGyroState], np.ndarray],
    query: HatGyroState,
    t1: float,
    t0: float = 0.0,
    dt: float = DEFAULT_GY_DT,
):
    """Gyro-averaged distribution at time ``t1`` by backward characteristics.

    ``<F>(z, t1) = <F0>(Zbar_{t0, t1}(z))`` where ``Zbar`` is the decoupled
    flow; ``F0`` receives the foot point as a :class:`HatGyroState` at ``t0``.
    ``query.t`` is ignored and taken as ``t1``.
    """
    r, qp, mu, _ = _unpack(query)
    alpha = np.broadcast_to(np.asarray(query.alpha, dtype=float), qp.shape)
    start = HatGyroState(r, qp, mu, alpha, np.full(qp.shape, float(t1)))
    if float(t1) == float(t0):
        return np.asarray(F0(start), dtype=float)
    traj = integrate_gy(model, regime, N, start, t0, dt=dt, stride=10**9)
    return np.asarray(F0(traj.state(-1)), dtype=float)


__all__ = [
    "EffectiveFields",
    "GY_COLUMNS",
    "GyroTrajectory",
    "SlowRHS",
    "effective_fields",
    "evaluate_F",
    "gy_energy",
    "integrate_gy",
    "rhs_decoupled",
]
