"""Local field-aligned frame, gyro-phase basis and the preliminary velocity map.

At each position the unit vector ``b0 = B0/|B0|`` is completed to a
right-handed orthonormal triad ``(e1, e2, b0)``.  A gyro-phase ``theta`` then
defines the rotating pair::

    a0 = e1 sin(theta) + e2 cos(theta)
    c0 = e1 cos(theta) - e2 sin(theta)

so that ``v = v_par b0 + v_perp c0``.

Derivatives of the frame are available in two flavours.  *Intrinsic*
derivatives differentiate with respect to the guide-field argument
``y = eps_B x``; *physical* derivatives carry the extra ``eps_B`` chain-rule
factor.  The generator formulas of :mod:`gyroverify.gymap` consume intrinsic
quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._vec import as_vec, cross, curl_from_grad, dot, fd_grad, norm, vecmat
from .errors import ZeroGuideField
from .fields import FieldModel, ScalingRegime

TWO_PI = 2.0 * np.pi
ZERO_FIELD_TOL = 1e-14
VPERP_TOL = 1e-12
FRAME_FD_STEP = 1e-5


@dataclass(frozen=True)
class Frame:
    e1: np.ndarray
    e2: np.ndarray
    b0: np.ndarray


@dataclass(frozen=True)
class GyroBasis:
    a0: np.ndarray
    c0: np.ndarray
    b0: np.ndarray


@dataclass(frozen=True)
class PrelimCoords:
    """Preliminary coordinates ``(x, v_par, v_perp, theta, t)``."""

    x: np.ndarray
    v_par: np.ndarray
    v_perp: np.ndarray
    theta: np.ndarray
    t: np.ndarray


@dataclass(frozen=True)
class ParticleState:
    """Full-orbit phase point ``(x, v, t)``; arrays may carry a batch axis."""

    x: np.ndarray
    v: np.ndarray
    t: np.ndarray

    @classmethod
    def make(cls, x, v, t=0.0):
        x, v = as_vec(x), as_vec(v)
        return cls(x, v, np.asarray(t, dtype=float))


def wrap_angle(theta):
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def rotating_basis(e1, e2, theta):
    s, c = np.sin(theta)[..., None], np.cos(theta)[..., None]
    return e1 * s + e2 * c, e1 * c - e2 * s


# ---------------------------------------------------------------------------
# frame construction (intrinsic coordinates)
# ---------------------------------------------------------------------------


def _reference(b):
    use_y = np.abs(b[..., 0]) > 0.9
    ref = np.zeros(b.shape)
    ref[..., 0] = np.where(use_y, 0.0, 1.0)
    ref[..., 1] = np.where(use_y, 1.0, 0.0)
    return ref


def _triad(B):
    absB = norm(B)
    if np.any(absB < ZERO_FIELD_TOL):
        raise ZeroGuideField(f"|B0| < {ZERO_FIELD_TOL} at some point")
    b = B / absB[..., None]
    ref = _reference(b)
    u = ref - dot(ref, b)[..., None] * b
    e1 = u / norm(u)[..., None]
    return absB, b, ref, u, e1, cross(b, e1)


def frame_from_B(B) -> Frame:
    _, b, _, _, e1, e2 = _triad(as_vec(B))
    return Frame(e1, e2, b)


def _triad_with_grad(B, G):
    """Triad plus first derivatives from ``B`` and ``G[i, j] = d_i B_j``."""
    absB, b, ref, u, e1, e2 = _triad(B)
    grad_abs = np.einsum("...ij,...j->...i", G, b)
    grad_b = (G - grad_abs[..., :, None] * b[..., None, :]) / absB[..., None, None]
    rb = dot(ref, b)
    r_db = np.einsum("...ik,...k->...i", grad_b, ref)
    grad_u = -r_db[..., :, None] * b[..., None, :] - rb[..., None, None] * grad_b
    nu = norm(u)
    proj = np.einsum("...ik,...k->...i", grad_u, e1)
    grad_e1 = (grad_u - proj[..., :, None] * e1[..., None, :]) / nu[..., None, None]
    grad_e2 = cross(grad_b, e1[..., None, :]) + cross(b[..., None, :], grad_e1)
    return absB, b, e1, e2, grad_abs, grad_b, grad_e1, grad_e2


@dataclass(frozen=True)
class FrameDerivatives:
    """Triad and its first derivatives (``grad X[..., i, j] = d_i X_j``)."""

    absB: np.ndarray
    b0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    grad_absB: np.ndarray
    grad_b0: np.ndarray
    grad_e1: np.ndarray
    grad_e2: np.ndarray


def frame_derivatives(model: FieldModel, y) -> FrameDerivatives:
    """Intrinsic frame derivatives at guide-field argument ``y``."""
    y = as_vec(y)
    return FrameDerivatives(*_triad_with_grad(model.B0(y), model.gradB0(y)))


def frame_second_derivatives(model: FieldModel, y, h: float = FRAME_FD_STEP):
    """Intrinsic second derivatives ``d_l d_i X_m`` of ``b0``, ``e1`` and ``e2``.

    Central differences of the closed-form first derivatives.
    """
    y = as_vec(y)

    def firsts(z):
        d = frame_derivatives(model, z)
        return np.stack([d.grad_b0, d.grad_e1, d.grad_e2], axis=-3)

    H = fd_grad(firsts, y, h)  # (..., l, 3 kinds, i, m)
    return H[..., :, 0, :, :], H[..., :, 1, :, :], H[..., :, 2, :, :]


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def build_frame(model: FieldModel, regime: ScalingRegime, x) -> Frame:
    """Orthonormal right-handed frame ``(e1, e2, b0)`` at physical position ``x``.

    ``e1`` is the Gram-Schmidt projection of ``(1, 0, 0)`` perpendicular to
    ``b0``, or of ``(0, 1, 0)`` when ``|b0 . (1, 0, 0)| > 0.9``.

    Raises
    ------
    ZeroGuideField
        If ``|B0| < 1e-14``.
    """
    x = as_vec(x)
    return frame_from_B(model.B0(regime.eps_B * x))


def gyro_basis(frame: Frame, theta) -> GyroBasis:
    a0, c0 = rotating_basis(frame.e1, frame.e2, np.asarray(theta, dtype=float))
    return GyroBasis(a0, c0, frame.b0)


def to_prelim(model: FieldModel, regime: ScalingRegime, state: ParticleState) -> PrelimCoords:
    """Split a velocity into ``(v_par, v_perp, theta)`` relative to the local frame.

    ``theta = -arctan2(v.e2, v.e1)`` mapped into ``[0, 2 pi)``; ``theta = 0``
    whenever ``v_perp < 1e-12``.
    """
    x, v = as_vec(state.x), as_vec(state.v)
    fr = build_frame(model, regime, x)
    v_par = dot(v, fr.b0)
    w = v - v_par[..., None] * fr.b0
    v_perp = norm(w)
    theta = wrap_angle(-np.arctan2(dot(v, fr.e2), dot(v, fr.e1)))
    theta = np.where(v_perp < VPERP_TOL, 0.0, theta)
    return PrelimCoords(x, v_par, v_perp, theta, np.asarray(state.t, dtype=float))


def from_prelim(model: FieldModel, regime: ScalingRegime, coords: PrelimCoords) -> ParticleState:
    """``v = v_par b0 + v_perp c0``; position and time are unchanged."""
    x = as_vec(coords.x)
    fr = build_frame(model, regime, x)
    _, c0 = rotating_basis(fr.e1, fr.e2, np.asarray(coords.theta, dtype=float))
    v = np.asarray(coords.v_par)[..., None] * fr.b0 + np.asarray(coords.v_perp)[..., None] * c0
    return ParticleState(x, v, np.asarray(coords.t, dtype=float))


def gyro_average(f: Callable, n_samples: int = 32, phase: float = 0.0):
    """Average of a ``2 pi``-periodic function by the uniform rectangle rule.

    Exact for trigonometric polynomials of degree below ``n_samples``.
    ``f`` is called once with the full array of sample angles and may return
    an array whose leading axis runs over the samples.

    >>> round(float(gyro_average(lambda a: np.sin(a) ** 2)), 15)
    0.5
    """
    if n_samples < 4:
        raise ValueError("n_samples must be >= 4")
    alpha = phase + TWO_PI * np.arange(n_samples) / n_samples
    values = np.asarray(f(alpha), dtype=float)
    if values.ndim == 0:
        return values.copy()
    return values.mean(axis=0)


def gyro_fluctuation(f: Callable, alpha, n_samples: int = 32):
    """``f(alpha) - <f>``."""
    return np.asarray(f(np.asarray(alpha, dtype=float))) - gyro_average(f, n_samples)


def gyro_gauge_R(
    model: FieldModel,
    regime: ScalingRegime,
    x,
    theta=0.0,
    *,
    form: str = "e",
    intrinsic: bool = False,
):
    """Gyro-gauge vector ``R_i = sum_j d_i e2_j e1_j``.

    ``form="a"`` evaluates the equal expression ``sum_j d_i a0_j c0_j`` at
    the given ``theta``.  Physical derivatives unless ``intrinsic`` is set.
    """
    x = as_vec(x)
    d = frame_derivatives(model, regime.eps_B * x)
    if form == "e":
        R = np.einsum("...ij,...j->...i", d.grad_e2, d.e1)
    elif form == "a":
        th = np.asarray(theta, dtype=float)
        grad_a, _ = _rotating_grad(d.grad_e1, d.grad_e2, th)
        _, c0 = rotating_basis(d.e1, d.e2, th)
        R = np.einsum("...ij,...j->...i", grad_a, c0)
    else:
        raise ValueError("form must be 'e' or 'a'")
    return R if intrinsic else regime.eps_B * R


def _rotating_grad(grad_e1, grad_e2, theta):
    s = np.sin(theta)[..., None, None]
    c = np.cos(theta)[..., None, None]
    return grad_e1 * s + grad_e2 * c, grad_e1 * c - grad_e2 * s


# ---------------------------------------------------------------------------
# local geometry consumed by the generators
# ---------------------------------------------------------------------------


@dataclass
class LocalGeometry:
    """Intrinsic frame quantities at guide-field argument ``y`` and phase ``alpha``.

    Attributes are batched arrays.  Vector gradients follow ``grad X[..., i, j]
    = d_i X_j``.  Second-derivative tensors (``hessB0``, ``hess_b0``,
    ``hess_c0``) are filled only when requested.
    """

    absB: np.ndarray
    B0: np.ndarray
    gradB0: np.ndarray
    b0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    a0: np.ndarray
    c0: np.ndarray
    grad_absB: np.ndarray
    grad_b0: np.ndarray
    grad_a0: np.ndarray
    grad_c0: np.ndarray
    curl_b0: np.ndarray
    curl_a0: np.ndarray
    curl_c0: np.ndarray
    R: np.ndarray
    hessB0: Optional[np.ndarray] = None
    hess_b0: Optional[np.ndarray] = None
    hess_c0: Optional[np.ndarray] = None


def local_geometry(model: FieldModel, y, alpha, second: bool = False) -> LocalGeometry:
    y = as_vec(y)
    alpha = np.asarray(alpha, dtype=float)
    B0 = model.B0(y)
    G = model.gradB0(y)
    absB, b, e1, e2, grad_abs, grad_b, grad_e1, grad_e2 = _triad_with_grad(B0, G)
    a0, c0 = rotating_basis(e1, e2, alpha)
    grad_a, grad_c = _rotating_grad(grad_e1, grad_e2, alpha)
    geo = LocalGeometry(
        absB=absB,
        B0=B0,
        gradB0=G,
        b0=b,
        e1=e1,
        e2=e2,
        a0=a0,
        c0=c0,
        grad_absB=grad_abs,
        grad_b0=grad_b,
        grad_a0=grad_a,
        grad_c0=grad_c,
        curl_b0=curl_from_grad(grad_b),
        curl_a0=curl_from_grad(grad_a),
        curl_c0=curl_from_grad(grad_c),
        R=np.einsum("...ij,...j->...i", grad_e2, e1),
    )
    if second:
        geo.hessB0 = model.hessB0(y)
        hb, h1, h2 = frame_second_derivatives(model, y)
        s = np.sin(alpha)[..., None, None, None]
        c = np.cos(alpha)[..., None, None, None]
        geo.hess_b0 = hb
        geo.hess_c0 = h1 * c - h2 * s
    return geo


__all__ = [
    "Frame",
    "FrameDerivatives",
    "GyroBasis",
    "LocalGeometry",
    "ParticleState",
    "PrelimCoords",
    "build_frame",
    "frame_derivatives",
    "frame_from_B",
    "frame_second_derivatives",
    "from_prelim",
    "gyro_average",
    "gyro_basis",
    "gyro_fluctuation",
    "gyro_gauge_R",
    "local_geometry",
    "rotating_basis",
    "to_prelim",
    "vecmat",
    "wrap_angle",
]
