"""Explicit gyro-transformation of order N = 1, 2.

The algebraic map ``tau_eps`` sends gyro coordinates ``(r, q_par, q_perp,
alpha, t)`` to preliminary coordinates ``(x, v_par, v_perp, theta, t)``::

    x      = r     + sum_{n=1}^{N+1} eps**n rho_n
    v_par  = q_par + sum_{n=1}^{N}   eps**n G_n^par
    v_perp = q_perp+ sum_{n=1}^{N}   eps**n G_n^perp
    theta  = alpha + sum_{n=1}^{N}   eps**n G_n^theta

with closed-form generators that depend on the regime (``ORDERING1``:
``eps_B = 1``; ``ORDERING2``: ``eps_B = eps``) and on ``N``.  Generators depend
on the potentials only through ``B0``, ``B1`` and ``E``, which makes them
gauge invariant by construction.

Derivatives of ``B0`` and of the frame inside generator formulas are taken
with respect to the intrinsic argument ``y = eps_B r``; derivatives of ``B1``
and ``E`` are ordinary derivatives in ``r``.

The map ``tau_hat`` exchanges ``q_perp`` and the generalised magnetic moment
``mu_hat = q_perp**2 / (2 |B0|) * (1 + eps sigma)``.  The free generator
components (``rho_2 . b0`` and ``G_1^theta`` at N = 1, ``rho_3 . b0`` and
``G_2^theta`` at N = 2) are set to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from ._vec import as_vec, cross, curl_from_grad, dot, norm, vecmat
from .errors import BadParams, NegativeMoment, NoConvergence, SigmaSingular
from .fields import FieldModel, Ordering, ScalingRegime
from .frame import (
    LocalGeometry,
    ParticleState,
    PrelimCoords,
    from_prelim,
    local_geometry,
    to_prelim,
    wrap_angle,
)

S_R_STEP = 1e-5
DELTA_H_STEP = 1e-6

#: Coefficient choice for the ``grad|B0|`` term of the second-order
#: vector in the strong-variation regime; see :func:`_q2_o1`.
GRADB_TERM = "rho2_c"
#: Whether the ``dS/dr`` total-derivative term enters the second-order
#: vector in the maximal ordering.
ORDERING2_DSDR = False
#: Include the quadratic kinetic-energy term ``-(G1_par**2 + G1_perp**2) / (2 q_perp)``
#: in ``G2_perp``.  Without it the second-order map leaves an ``O(eps)``
#: gyro-phase dependent drift in ``mu_hat`` even for uniform E x B fields.
KINETIC_QUADRATIC = True


@dataclass(frozen=True)
class GyroState:
    r: np.ndarray
    q_par: np.ndarray
    q_perp: np.ndarray
    alpha: np.ndarray
    t: np.ndarray

    @classmethod
    def make(cls, r, q_par, q_perp, alpha=0.0, t=0.0):
        return cls(
            as_vec(r),
            np.asarray(q_par, dtype=float),
            np.asarray(q_perp, dtype=float),
            np.asarray(alpha, dtype=float),
            np.asarray(t, dtype=float),
        )


@dataclass(frozen=True)
class HatGyroState:
    r: np.ndarray
    q_par: np.ndarray
    mu_hat: np.ndarray
    alpha: np.ndarray
    t: np.ndarray

    @classmethod
    def make(cls, r, q_par, mu_hat, alpha=0.0, t=0.0):
        return cls(
            as_vec(r),
            np.asarray(q_par, dtype=float),
            np.asarray(mu_hat, dtype=float),
            np.asarray(alpha, dtype=float),
            np.asarray(t, dtype=float),
        )

    def slow(self) -> np.ndarray:
        """Slow variables ``(r1, r2, r3, q_par, mu_hat)`` stacked on the last axis."""
        return np.concatenate([self.r, self.q_par[..., None], self.mu_hat[..., None]], axis=-1)


@dataclass
class GeneratorSet:
    """Generators at one (batch of) gyro point(s).

    ``rho`` runs over orders ``1..N+1``; the scalar lists also have ``N+1``
    entries, the last being the zero level-``N+1`` generators.
    """

    rho: Tuple[np.ndarray, ...]
    g_par: Tuple[np.ndarray, ...]
    g_perp: Tuple[np.ndarray, ...]
    g_theta: Tuple[np.ndarray, ...]
    N: int
    regime: ScalingRegime
    extras: dict = field(default_factory=dict, repr=False)

    def arrays(self):
        """All generator arrays in a fixed order (for bitwise comparisons)."""
        return [*self.rho, *self.g_par, *self.g_perp, *self.g_theta]


def _check_N(N):
    if N not in (1, 2):
        raise BadParams("N must be 1 or 2")


# ---------------------------------------------------------------------------
# dynamical fields at the gyro-center
# ---------------------------------------------------------------------------


@dataclass
class _Dyn:
    B1: np.ndarray
    E: np.ndarray
    gradB1: Optional[np.ndarray] = None
    gradE: Optional[np.ndarray] = None
    dB1_dt: Optional[np.ndarray] = None
    dE_dt: Optional[np.ndarray] = None


def _dyn(model, r, t, full):
    d = _Dyn(model.B1(r, t), model.E(r, t))
    shape = r.shape
    d.B1 = np.broadcast_to(d.B1, shape)
    d.E = np.broadcast_to(d.E, shape)
    if full:
        mshape = shape[:-1] + (3, 3)
        d.gradB1 = np.broadcast_to(model.gradB1(r, t), mshape)
        d.gradE = np.broadcast_to(model.gradE(r, t), mshape)
        d.dB1_dt = np.broadcast_to(model.dB1_dt(r, t), shape)
        d.dE_dt = np.broadcast_to(model.dE_dt(r, t), shape)
    return d


# ---------------------------------------------------------------------------
# first-order generators
# ---------------------------------------------------------------------------


def _first_order_o2(geo: LocalGeometry, dyn: _Dyn, qp, qq):
    B = geo.absB
    B1c = dot(dyn.B1, geo.c0)
    Ea = dot(dyn.E, geo.a0)
    g_par = -qq / B * B1c
    g_perp = qp / B * B1c + Ea / B
    rho2_a = qp / B**2 * B1c - qq / B**2 * dot(dyn.B1, geo.b0) + Ea / B**2
    return g_par, g_perp, rho2_a


def _first_order_o1(geo: LocalGeometry, dyn: _Dyn, qp, qq):
    B = geo.absB
    a0, b0, c0 = geo.a0, geo.b0, geo.c0
    a_gb_c = dot(vecmat(a0, geo.grad_b0), c0)
    g_par = (
        -qq / B * dot(dyn.B1, c0)
        + qq**2 / (2 * B) * a_gb_c
        - qp * qq / B * dot(geo.curl_b0, c0)
        - qq**2 / (2 * B) * dot(geo.R, b0)
    )
    # g_par carries an overall factor q_perp, so the quotient is regular
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(qq != 0.0, g_par / np.where(qq != 0.0, qq, 1.0), 0.0)
    g_perp = -qp * ratio + dot(a0, dyn.E) / B
    rho2_a = (
        g_perp / B
        - qq / B**2 * dot(dyn.B1, b0)
        - qq**2 / (2 * B**3) * dot(a0, geo.grad_absB)
        - qp * qq / B**2 * dot(geo.curl_b0, b0)
        + qq**2 / (2 * B**2) * dot(geo.R, c0)
    )
    rho2_c_extra = qq**2 / (2 * B**2) * dot(geo.R, a0)
    return g_par, g_perp, rho2_a, rho2_c_extra


# ---------------------------------------------------------------------------
# second-order scalar functions S
# ---------------------------------------------------------------------------


def _s2_o2(geo, dyn, qp, qq):
    """``S`` and its partials ``(S, dS/dq_par, dS/dq_perp, dS/dt)`` (maximal ordering)."""
    B2 = geo.absB**2
    B1a = dot(dyn.B1, geo.a0)
    Ec = dot(dyn.E, geo.c0)
    S = -qp * qq / B2 * B1a + qq / B2 * Ec
    dS_dqp = -qq / B2 * B1a
    dS_dqq = -qp / B2 * B1a + Ec / B2
    dS_dt = None
    if dyn.dB1_dt is not None:
        dS_dt = -qp * qq / B2 * dot(dyn.dB1_dt, geo.a0) + qq / B2 * dot(dyn.dE_dt, geo.c0)
    return S, dS_dqp, dS_dqq, dS_dt


def _s2_o1(geo, dyn, qp, qq):
    """``S`` and its partials (strong-variation regime)."""
    B = geo.absB
    a0, b0, c0 = geo.a0, geo.b0, geo.c0
    s_a = -dot(dyn.B1, a0) / B**2
    s_E = dot(dyn.E, c0) / B**2
    s_b = dot(vecmat(a0, geo.grad_b0), a0) / (4 * B**2)
    s_c = -dot(geo.curl_b0, a0) / B**2
    s_3 = -dot(c0, geo.grad_absB) / (3 * B**3) + dot(geo.curl_a0, b0) / (2 * B**2)
    S = qp * qq * s_a + qq * s_E + qp * qq**2 * s_b + qp**2 * qq * s_c + qq**3 * s_3
    dS_dqp = qq * s_a + qq**2 * s_b + 2 * qp * qq * s_c
    dS_dqq = qp * s_a + s_E + 2 * qp * qq * s_b + qp**2 * s_c + 3 * qq**2 * s_3
    dS_dt = None
    if dyn.dB1_dt is not None:
        dS_dt = -qp * qq * dot(dyn.dB1_dt, a0) / B**2 + qq * dot(dyn.dE_dt, c0) / B**2
    return S, dS_dqp, dS_dqq, dS_dt


def _dS_dr(model, regime, r, qp, qq, alpha, t, h=S_R_STEP):
    """Central-difference gradient of ``S`` in ``r`` at fixed ``(q, alpha, t)``."""
    s_fn = _s2_o1 if regime.ordering is Ordering.ORDERING1 else _s2_o2
    eb = regime.eps_B
    parts = []
    for i in range(3):
        vals = []
        for sgn in (1.0, -1.0):
            rs = r.copy()
            rs[..., i] += sgn * h
            geo = local_geometry(model, eb * rs, alpha)
            dyn = _dyn(model, rs, t, full=False)
            vals.append(s_fn(geo, dyn, qp, qq)[0])
        parts.append((vals[0] - vals[1]) / (2 * h))
    return np.stack(parts, axis=-1)


# ---------------------------------------------------------------------------
# second-order vectors Q
# ---------------------------------------------------------------------------


def _q2_o2(geo, dyn, qp, qq, g1_perp, g1_theta, dS_dr):
    B = geo.absB
    a0, c0 = geo.a0, geo.c0
    qq2 = (qq**2 / (2 * B**2))[..., None]
    Q = (
        qq2 * cross(vecmat(a0, geo.gradB0), a0)
        + qq2 * cross(vecmat(a0, dyn.gradB1), a0)
        - (qp * qq / B)[..., None] * cross(a0, geo.curl_b0)
        - (qq**2 / B)[..., None] * cross(a0, geo.curl_c0)
        - (g1_perp * g1_theta)[..., None] * a0
        - (qq / 2 * g1_theta**2)[..., None] * c0
        - (qq**2 / (2 * B))[..., None] * geo.R
    )
    if dS_dr is not None:
        Q = Q + dS_dr
    return Q


def _gradb_coefficient(kind, B, qq, rho2, g1_par, g1_theta, geo):
    if kind == "rho2_a":
        return dot(rho2, geo.a0)
    if kind == "rho2_b":
        return dot(rho2, geo.b0)
    if kind == "rho2_c":
        return dot(rho2, geo.c0)
    if kind == "g1_theta":
        return qq / B * g1_theta
    if kind == "g1_par":
        return g1_par / B
    if kind == "none":
        return np.zeros_like(B)
    raise ValueError(f"unknown grad|B| coefficient {kind!r}")


def _q2_o1(geo, dyn, qp, qq, rho1, rho2, g1_par, g1_perp, g1_theta, dS_dr, gradb_term):
    B = geo.absB
    a0, b0, c0 = geo.a0, geo.b0, geo.c0
    G0 = geo.gradB0
    s = lambda v: v[..., None]  # noqa: E731 - scalar -> broadcastable

    # directional second derivative (a0 . grad)^2 B0
    a_a_hessB = np.einsum("...i,...j,...ijk->...k", a0, a0, geo.hessB0)
    # curl' of (rho1 . grad b0) and (rho1 . grad c0), differentiating the gradients only
    curl_r_gb = curl_from_grad(np.einsum("...i,...lim->...lm", rho1, geo.hess_b0))
    curl_r_gc = curl_from_grad(np.einsum("...i,...lim->...lm", rho1, geo.hess_c0))
    # (grad a0 x a0)[..., i, :] = d_i a0 x a0
    ga_x_a = cross(geo.grad_a0, a0[..., None, :])
    a_gB0 = vecmat(a0, G0)

    coef = _gradb_coefficient(gradb_term, B, qq, rho2, g1_par, g1_theta, geo)

    Q = (
        s(qq / (2 * B)) * cross(vecmat(rho2, G0), a0)
        + s(qq / (2 * B)) * cross(a_gB0, rho2)
        + s(qq**2 / (2 * B**2)) * cross(vecmat(a0, dyn.gradB1), a0)
        - s(g1_par * qq / B) * cross(a0, geo.curl_b0)
        - s(g1_perp * qq / B) * cross(a0, geo.curl_c0)
        - s(g1_perp * g1_theta) * a0
        - s(qp) * cross(rho2, geo.curl_b0)
        - s(qq) * cross(rho2, geo.curl_c0)
        - s(g1_theta * qq**2 / B) * vecmat(a0, geo.grad_a0)
        - s(qq / 2 * g1_theta**2) * c0
        + s(qq**2 / B**2 * g1_theta) * geo.grad_absB
        - s(qq**3 / (6 * B**3)) * cross(a0, a_a_hessB)
        - s(qp / 2) * cross(rho1, curl_r_gb)
        - s(qq / 2) * cross(rho1, curl_r_gc)
        + 0.5 * np.einsum("...ij,...j->...i", G0, cross(rho2, rho1))
        - s(qq / B * coef) * geo.grad_absB
        - s(qq) * np.einsum("...ij,...j->...i", geo.grad_a0, cross(rho2, b0))
        - s(qq**3 / (3 * B**3)) * np.einsum("...ij,...j->...i", ga_x_a, a_gB0)
        - s(qq**2 / (2 * B**2)) * np.einsum("...ij,...j->...i", ga_x_a, dyn.B1)
        - s(qp * qq**2 / (2 * B**2)) * np.einsum("...ij,...j->...i", ga_x_a, geo.curl_b0)
        - s(qq**3 / (2 * B**2)) * np.einsum("...ij,...j->...i", ga_x_a, geo.curl_c0)
        + dS_dr
    )
    return Q


# ---------------------------------------------------------------------------
# generator evaluation
# ---------------------------------------------------------------------------


def _broadcast_state(gs: GyroState):
    r = as_vec(gs.r)
    batch = np.broadcast_shapes(
        r.shape[:-1], np.shape(gs.q_par), np.shape(gs.q_perp), np.shape(gs.alpha), np.shape(gs.t)
    )
    r = np.broadcast_to(r, batch + (3,)).astype(float, copy=True)
    qp = np.broadcast_to(np.asarray(gs.q_par, dtype=float), batch)
    qq = np.broadcast_to(np.asarray(gs.q_perp, dtype=float), batch)
    al = np.broadcast_to(np.asarray(gs.alpha, dtype=float), batch)
    t = np.broadcast_to(np.asarray(gs.t, dtype=float), batch)
    return r, qp, qq, al, t


def generators(model: FieldModel, regime: ScalingRegime, N: int, gs: GyroState) -> GeneratorSet:
    """Closed-form generators of order ``N`` at gyro point ``gs``.

    Parameters
    ----------
    model, regime
        Field configuration and scaling regime; the regime selects the
        generator family.
    N : {1, 2}
        Truncation order.
    gs : GyroState
        Gyro point(s); arrays may carry a common batch axis.

    Returns
    -------
    GeneratorSet
        ``rho_1 .. rho_{N+1}`` and the scalar generators, with
        ``extras`` holding ``S`` partials and ``Q`` for ``N = 2``.
    """
    _check_N(N)
    r, qp, qq, al, t = _broadcast_state(gs)
    model.require_inside(r, time=None)
    o1 = regime.ordering is Ordering.ORDERING1
    eb = regime.eps_B
    geo = local_geometry(model, eb * r, al, second=(o1 and N == 2))
    dyn = _dyn(model, r, t, full=(N == 2))
    B = geo.absB
    a0, b0, c0 = geo.a0, geo.b0, geo.c0
    zero = np.zeros_like(qp)
    rho1 = (qq / B)[..., None] * a0
    extras = {}

    if o1:
        g1_par, g1_perp, rho2_a, rho2_c_extra = _first_order_o1(geo, dyn, qp, qq)
    else:
        g1_par, g1_perp, rho2_a = _first_order_o2(geo, dyn, qp, qq)
        rho2_c_extra = zero

    if N == 1:
        rho2_b, g1_theta = zero, zero
    else:
        S, dS_dqp, dS_dqq, dS_dt = (_s2_o1 if o1 else _s2_o2)(geo, dyn, qp, qq)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_qq = np.where(qq != 0.0, 1.0 / qq, np.inf)
        g1_theta = B * inv_qq * dS_dqq
        rho2_b = dS_dqp
        if o1:
            rho2_b = rho2_b - qq**2 / (2 * B**2) * dot(vecmat(a0, geo.grad_b0), a0)
            g1_theta = g1_theta + qq / (2 * B) * dot(a0, geo.R)
        extras.update(S=S, dS_dq_par=dS_dqp, dS_dq_perp=dS_dqq, dS_dt=dS_dt)

    rho2 = (
        rho2_a[..., None] * a0
        + rho2_b[..., None] * b0
        + (qq * g1_theta / B + rho2_c_extra)[..., None] * c0
    )

    if N == 1:
        return GeneratorSet(
            rho=(rho1, rho2),
            g_par=(g1_par, zero),
            g_perp=(g1_perp, zero),
            g_theta=(g1_theta, zero),
            N=1,
            regime=regime,
            extras=extras,
        )

    if o1:
        dS_dr = _dS_dr(model, regime, r, qp, qq, al, t)
        Q = _q2_o1(geo, dyn, qp, qq, rho1, rho2, g1_par, g1_perp, g1_theta, dS_dr, GRADB_TERM)
    else:
        dS_dr = _dS_dr(model, regime, r, qp, qq, al, t) if ORDERING2_DSDR else None
        Q = _q2_o2(geo, dyn, qp, qq, g1_perp, g1_theta, dS_dr)
    extras.update(Q=Q, dS_dr=dS_dr)

    r2xB1 = cross(rho2, dyn.B1)
    g2_par = dot(r2xB1, b0) - dot(Q, b0)
    g2_perp = (
        -qp * inv_qq * g2_par
        + inv_qq * dot(rho2, dyn.E)
        + qq / (2 * B**2) * dot(vecmat(a0, dyn.gradE), a0)
        + inv_qq * extras["dS_dt"]
    )
    if KINETIC_QUADRATIC:
        g2_perp = g2_perp - 0.5 * inv_qq * (g1_par**2 + g1_perp**2)
    rho3 = ((g2_perp - dot(r2xB1, c0) + dot(Q, c0)) / B)[..., None] * a0 + (
        (dot(r2xB1, a0) - dot(Q, a0)) / B
    )[..., None] * c0
    return GeneratorSet(
        rho=(rho1, rho2, rho3),
        g_par=(g1_par, g2_par, zero),
        g_perp=(g1_perp, g2_perp, zero),
        g_theta=(g1_theta, zero, zero),
        N=2,
        regime=regime,
        extras=extras,
    )


# ---------------------------------------------------------------------------
# algebraic map and its inverse
# ---------------------------------------------------------------------------


def _increments(gen: GeneratorSet, eps: float):
    dx = sum(eps ** (n + 1) * rho for n, rho in enumerate(gen.rho))
    dpar = sum(eps ** (n + 1) * g for n, g in enumerate(gen.g_par))
    dperp = sum(eps ** (n + 1) * g for n, g in enumerate(gen.g_perp))
    dth = sum(eps ** (n + 1) * g for n, g in enumerate(gen.g_theta))
    return dx, dpar, dperp, dth


def apply_tau_eps(model: FieldModel, regime: ScalingRegime, N: int, gs: GyroState) -> PrelimCoords:
    """Map gyro coordinates to preliminary coordinates."""
    r, qp, qq, al, t = _broadcast_state(gs)
    if regime.eps == 0.0:
        return PrelimCoords(r, qp.copy(), qq.copy(), wrap_angle(al), t.copy())
    gen = generators(model, regime, N, GyroState(r, qp, qq, al, t))
    dx, dpar, dperp, dth = _increments(gen, regime.eps)
    return PrelimCoords(r + dx, qp + dpar, qq + dperp, wrap_angle(al + dth), t.copy())


def _angle_diff(a, b):
    return np.angle(np.exp(1j * (a - b)))


def invert_tau_eps(
    model: FieldModel,
    regime: ScalingRegime,
    N: int,
    pc: PrelimCoords,
    tol: float = 1e-12,
    max_iter: int = 50,
    return_info: bool = False,
):
    """Invert :func:`apply_tau_eps` by fixed-point iteration.

    Iterates ``q <- q' - sum eps**n G_n(q)`` from ``q = q'`` until the largest
    update falls below ``tol``.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations without meeting ``tol``, or on a
        non-finite iterate.
    """
    x = as_vec(pc.x)
    batch = np.broadcast_shapes(x.shape[:-1], np.shape(pc.v_par), np.shape(pc.theta))
    x = np.broadcast_to(x, batch + (3,)).astype(float)
    vp = np.broadcast_to(np.asarray(pc.v_par, dtype=float), batch)
    vq = np.broadcast_to(np.asarray(pc.v_perp, dtype=float), batch)
    th = np.broadcast_to(np.asarray(pc.theta, dtype=float), batch)
    t = np.broadcast_to(np.asarray(pc.t, dtype=float), batch)
    eps = regime.eps
    r, qp, qq, al = x.copy(), vp.copy(), vq.copy(), th.copy()
    if eps == 0.0:
        gs = GyroState(r, qp, qq, wrap_angle(al), t.copy())
        return (gs, {"iterations": 1, "step": 0.0}) if return_info else gs
    step = np.inf
    for it in range(1, max_iter + 1):
        gen = generators(model, regime, N, GyroState(r, qp, qq, al, t))
        dx, dpar, dperp, dth = _increments(gen, eps)
        r_new, qp_new, qq_new, al_new = x - dx, vp - dpar, vq - dperp, th - dth
        step = max(
            float(np.max(np.abs(r_new - r), initial=0.0)),
            float(np.max(np.abs(qp_new - qp), initial=0.0)),
            float(np.max(np.abs(qq_new - qq), initial=0.0)),
            float(np.max(np.abs(al_new - al), initial=0.0)),
        )
        r, qp, qq, al = r_new, qp_new, qq_new, al_new
        if not np.isfinite(step):
            raise NoConvergence(f"non-finite iterate after {it} iterations")
        if step < tol:
            gs = GyroState(r, qp, qq, wrap_angle(al), t.copy())
            return (gs, {"iterations": it, "step": step}) if return_info else gs
        model.require_inside(r)
    raise NoConvergence(f"fixed-point inversion did not reach tol={tol} in {max_iter} steps (last step {step:.3e})")


# ---------------------------------------------------------------------------
# magnetic moment and Hamiltonian correction
# ---------------------------------------------------------------------------


def sigma(model: FieldModel, regime: ScalingRegime, N: int, r, q_par, t, return_dqpar=False):
    """Relative moment correction ``sigma`` (zero for ``N = 1``).

    Also returns ``d sigma / d q_par`` when requested (``sigma`` is affine in
    ``q_par``).
    """
    _check_N(N)
    r = as_vec(r)
    q_par = np.asarray(q_par, dtype=float)
    batch = np.broadcast_shapes(r.shape[:-1], q_par.shape, np.shape(t))
    if N == 1:
        z = np.zeros(batch)
        return (z, z.copy()) if return_dqpar else z
    geo = local_geometry(model, regime.eps_B * r, 0.0)
    B1 = model.B1(r, t)
    B = geo.absB
    if regime.ordering is Ordering.ORDERING2:
        s = -dot(B1, geo.b0) / B
        ds = np.zeros(batch)
    else:
        # unit weight on R.b cancels the gauge term that G1_perp feeds into
        # mu at first order, so mu_hat does not depend on the choice of e1
        ds = -0.5 * dot(geo.curl_b0, geo.b0) / B + dot(geo.R, geo.b0) / B
        s = -dot(B1, geo.b0) / B + q_par * ds
    s = np.broadcast_to(s, batch).copy()
    ds = np.broadcast_to(ds, batch).copy()
    return (s, ds) if return_dqpar else s


def _one_plus(regime, s):
    f = 1.0 + regime.eps * s
    if np.any(f <= 0.0):
        raise SigmaSingular("1 + eps*sigma <= 0")
    return f


def mu_hat_from_qperp(model: FieldModel, regime: ScalingRegime, N: int, gs: GyroState):
    """``mu_hat = q_perp**2 / (2 |B0|) * (1 + eps sigma)``."""
    qq = np.asarray(gs.q_perp, dtype=float)
    if np.any(qq < 0):
        raise NegativeMoment("q_perp must be non-negative")
    r = as_vec(gs.r)
    absB = norm(model.B0(regime.eps_B * r))
    mu = qq**2 / (2.0 * absB)
    if N == 1:
        _check_N(N)
        return mu
    s = sigma(model, regime, N, r, gs.q_par, gs.t)
    return mu * _one_plus(regime, s)


def qperp_from_mu_hat(model: FieldModel, regime: ScalingRegime, N: int, hs: HatGyroState):
    """Inverse of :func:`mu_hat_from_qperp` at fixed ``(r, q_par, t)``."""
    mu_hat = np.asarray(hs.mu_hat, dtype=float)
    if np.any(mu_hat < 0):
        raise NegativeMoment("mu_hat must be non-negative")
    r = as_vec(hs.r)
    absB = norm(model.B0(regime.eps_B * r))
    if N == 1:
        _check_N(N)
        return np.sqrt(2.0 * mu_hat * absB)
    s = sigma(model, regime, N, r, hs.q_par, hs.t)
    return np.sqrt(2.0 * mu_hat * absB / _one_plus(regime, s))


@dataclass
class DeltaH:
    value: np.ndarray
    d_qpar: Optional[np.ndarray] = None
    d_mu: Optional[np.ndarray] = None
    grad_r: Optional[np.ndarray] = None


def _delta_h_value(model, regime, N, r, q_par, mu_hat, t):
    s, ds = sigma(model, regime, N, r, q_par, t, return_dqpar=True)
    absB = norm(model.B0(regime.eps_B * r))
    f = _one_plus(regime, s)
    return -mu_hat * absB * s / f, s, ds, absB, f


def delta_H(
    model: FieldModel,
    regime: ScalingRegime,
    N: int,
    hs: HatGyroState,
    partials: bool = False,
    h: float = DELTA_H_STEP,
) -> DeltaH:
    """Hamiltonian correction ``-mu_hat |B0| sigma / (1 + eps sigma)``.

    With ``partials`` the derivatives in ``q_par`` and ``mu_hat`` are closed
    form and the spatial gradient (physical ``r``) is a central difference
    with step ``h``.
    """
    _check_N(N)
    r = as_vec(hs.r)
    qp = np.asarray(hs.q_par, dtype=float)
    mu = np.asarray(hs.mu_hat, dtype=float)
    batch = np.broadcast_shapes(r.shape[:-1], qp.shape, mu.shape, np.shape(hs.t))
    if N == 1:
        z = np.zeros(batch)
        if not partials:
            return DeltaH(z)
        return DeltaH(z, z.copy(), z.copy(), np.zeros(batch + (3,)))
    val, s, ds, absB, f = _delta_h_value(model, regime, N, r, qp, mu, hs.t)
    val = np.broadcast_to(val, batch).copy()
    if not partials:
        return DeltaH(val)
    d_sigma = -mu * absB / f**2
    d_qpar = np.broadcast_to(d_sigma * ds, batch).copy()
    d_mu = np.broadcast_to(-absB * s / f, batch).copy()
    rb = np.broadcast_to(r, batch + (3,))
    parts = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        vp = _delta_h_value(model, regime, N, rb + e, qp, mu, hs.t)[0]
        vm = _delta_h_value(model, regime, N, rb - e, qp, mu, hs.t)[0]
        parts.append((vp - vm) / (2 * h))
    grad = np.broadcast_to(np.stack(parts, axis=-1), batch + (3,)).copy()
    return DeltaH(val, d_qpar, d_mu, grad)


# ---------------------------------------------------------------------------
# full gyro map
# ---------------------------------------------------------------------------


def hat_to_gyro(model, regime, N, hs: HatGyroState) -> GyroState:
    qq = qperp_from_mu_hat(model, regime, N, hs)
    return GyroState(as_vec(hs.r), np.asarray(hs.q_par, float), qq, np.asarray(hs.alpha, float), np.asarray(hs.t, float))


def gyro_to_hat(model, regime, N, gs: GyroState) -> HatGyroState:
    mu = mu_hat_from_qperp(model, regime, N, gs)
    return HatGyroState(gs.r, gs.q_par, mu, gs.alpha, gs.t)


def tau_gy(model: FieldModel, regime: ScalingRegime, N: int, hs: HatGyroState) -> ParticleState:
    """Particle state of the hat-gyro point ``hs``."""
    gs = hat_to_gyro(model, regime, N, hs)
    return from_prelim(model, regime, apply_tau_eps(model, regime, N, gs))


def tau_gy_inverse(
    model: FieldModel,
    regime: ScalingRegime,
    N: int,
    state: ParticleState,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> HatGyroState:
    """Hat-gyro coordinates of a particle state."""
    pc = to_prelim(model, regime, state)
    gs = invert_tau_eps(model, regime, N, pc, tol=tol, max_iter=max_iter)
    return gyro_to_hat(model, regime, N, gs)


def with_field(hs, **changes):
    return replace(hs, **changes)


__all__ = [
    "DeltaH",
    "GeneratorSet",
    "GyroState",
    "HatGyroState",
    "apply_tau_eps",
    "delta_H",
    "generators",
    "gyro_to_hat",
    "hat_to_gyro",
    "invert_tau_eps",
    "mu_hat_from_qperp",
    "qperp_from_mu_hat",
    "sigma",
    "tau_gy",
    "tau_gy_inverse",
]
