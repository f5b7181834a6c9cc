"""Analytic electromagnetic field models.

The guide field ``B0`` is a function of its *intrinsic* argument ``y``; the
full-orbit equations evaluate it at ``y = eps_B * x``.  The dynamical fields
``A1``, ``phi``, ``B1`` and ``E`` are functions of the physical position ``x``
and time ``t``.  All field callables are vectorised: positions have shape
``(..., 3)`` and ``t`` broadcasts against the leading axes.

Gradients follow the transpose-Jacobian convention ``grad F[..., i, j] =
d F_j / d x_i`` so that ``u . grad F`` is the directional derivative along
``u``.

Builtin fields are already normalised (O(1) amplitudes); no physical units are
attached.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._vec import as_vec, curl_from_grad, fd_grad, norm
from .errors import BadParams, DerivativeUnavailable, DomainEscape, UnknownModel

EPS_MAX = 0.5


class Ordering(enum.Enum):
    """Scaling regime of the guide field.

    ``ORDERING1``: ``eps_delta = eps``, ``eps_B = 1`` (strong background variation).
    ``ORDERING2``: ``eps_delta = eps_B = eps`` (maximal ordering).
    """

    ORDERING1 = 1
    ORDERING2 = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "")
            for member in cls:
                if key in (member.name.lower(), str(member.value)):
                    return member
        if value in (1, 2):
            return cls(value)
        raise BadParams(f"unknown ordering {value!r}; use 1 or 2")


@dataclass(frozen=True)
class ScalingRegime:
    eps: float
    ordering: Ordering = Ordering.ORDERING2
    eps_max: float = EPS_MAX

    def __post_init__(self):
        object.__setattr__(self, "ordering", Ordering.parse(self.ordering))
        if not (0.0 <= self.eps <= self.eps_max):
            raise BadParams(f"eps={self.eps} outside [0, {self.eps_max}]")

    @property
    def eps_B(self) -> float:
        return 1.0 if self.ordering is Ordering.ORDERING1 else self.eps

    @property
    def eps_delta(self) -> float:
        return self.eps

    def with_eps(self, eps: float) -> "ScalingRegime":
        return ScalingRegime(eps, self.ordering, self.eps_max)


@dataclass(frozen=True)
class FieldSample:
    """Fields and physical derivatives at one (batch of) point(s)."""

    B0: np.ndarray
    B1: np.ndarray
    E: np.ndarray
    gradB0: Optional[np.ndarray] = None
    grad_absB0: Optional[np.ndarray] = None
    curl_b0: Optional[np.ndarray] = None
    gradB1: Optional[np.ndarray] = None
    gradE: Optional[np.ndarray] = None
    hessB0: Optional[np.ndarray] = None


class FieldModel:
    """Electromagnetic field configuration built from potentials.

    Parameters
    ----------
    A0 : callable ``y -> (..., 3)``
        Static vector potential of the guide field in intrinsic coordinates.
    A1 : callable ``(x, t) -> (..., 3)``, optional
        Dynamical vector potential.  Defaults to zero.
    phi : callable ``(x, t) -> (...)``, optional
        Electrostatic potential.  Defaults to zero.
    domain : (lo, hi) pair of 3-vectors, optional
        Axis-aligned box of admissible physical positions.
    derivative_order : int
        Highest derivative of ``A0`` that may be requested (``>= 3``).
    fd_step : float
        Base step for central finite differences.  Nested derivatives widen the
        step by a factor of ten per level.

    Every derived quantity for a user-supplied model comes from central
    differences of the potentials; builtin models override the derived
    quantities with closed forms.
    """

    name = "custom"

    def __init__(
        self,
        A0: Callable,
        A1: Optional[Callable] = None,
        phi: Optional[Callable] = None,
        *,
        domain=None,
        derivative_order: int = 3,
        fd_step: float = 1e-5,
        static: Optional[bool] = None,
        params: Optional[dict] = None,
    ):
        if derivative_order < 3:
            raise BadParams("derivative_order must be >= 3")
        self._A0 = A0
        self._A1 = A1
        self._phi = phi
        if domain is None:
            domain = ((-10.0,) * 3, (10.0,) * 3)
        lo, hi = (np.asarray(d, dtype=float) for d in domain)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise BadParams("domain must be (lo, hi) with lo < hi componentwise")
        self.domain = (lo, hi)
        self.derivative_order = int(derivative_order)
        self.fd_step = float(fd_step)
        self.static = (A1 is None and phi is None) if static is None else bool(static)
        self.params = dict(params or {})

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, params={self.params!r})"

    # -- domain ---------------------------------------------------------------
    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        return np.all((x > lo) & (x < hi), axis=-1)

    def require_inside(self, x, time=None):
        if not np.all(self.contains(x)):
            raise DomainEscape(f"position outside domain {self.domain}", time=time)

    # -- static guide field (intrinsic coordinates) ---------------------------
    def A0(self, y):
        return np.asarray(self._A0(as_vec(y)), dtype=float)

    def B0(self, y):
        return curl_from_grad(fd_grad(self.A0, y, self.fd_step))

    def gradB0(self, y):
        return fd_grad(self.B0, y, 10 * self.fd_step)

    def hessB0(self, y):
        """``hess[..., i, j, k] = d_i d_j B0_k``."""
        return fd_grad(self.gradB0, y, 100 * self.fd_step)

    # -- dynamical fields -----------------------------------------------------
    def A1(self, x, t):
        x = as_vec(x)
        if self._A1 is None:
            return np.zeros(np.broadcast_shapes(x.shape, np.shape(t) + (3,)))
        return np.asarray(self._A1(x, t), dtype=float)

    def phi(self, x, t):
        x = as_vec(x)
        if self._phi is None:
            return np.zeros(np.broadcast_shapes(x.shape[:-1], np.shape(t)))
        return np.asarray(self._phi(x, t), dtype=float)

    def B1(self, x, t):
        if self._A1 is None:
            return self.A1(x, t)
        return curl_from_grad(fd_grad(lambda z: self.A1(z, t), x, self.fd_step))

    def E(self, x, t):
        x = as_vec(x)
        h = self.fd_step
        out = -fd_grad(lambda z: self.phi(z, t), x, h)
        if self._A1 is not None:
            out = out - (self.A1(x, t + h) - self.A1(x, t - h)) / (2 * h)
        return np.broadcast_to(out, np.broadcast_shapes(out.shape, x.shape)).copy()

    def gradB1(self, x, t):
        return fd_grad(lambda z: self.B1(z, t), x, 10 * self.fd_step)

    def gradE(self, x, t):
        return fd_grad(lambda z: self.E(z, t), x, 10 * self.fd_step)

    def dB1_dt(self, x, t):
        h = 10 * self.fd_step
        return (self.B1(x, t + h) - self.B1(x, t - h)) / (2 * h)

    def dE_dt(self, x, t):
        h = 10 * self.fd_step
        return (self.E(x, t + h) - self.E(x, t - h)) / (2 * h)

    # -- combinators ----------------------------------------------------------
    def gauge_shifted(self, chi, grad_chi=None, dchi_dt=None) -> "GaugeShifted":
        return GaugeShifted(self, chi, grad_chi, dchi_dt)


class GaugeShifted(FieldModel):
    """``(A1, phi) -> (A1 + grad chi, phi - d chi / dt)`` on top of ``base``.

    Fields ``B1`` and ``E`` are gauge invariant and are delegated to the base
    model unchanged; :func:`check_consistency` confirms that the shifted
    potentials still reproduce them.
    """

    def __init__(self, base: FieldModel, chi, grad_chi=None, dchi_dt=None):
        self.base = base
        self.chi = chi
        h = base.fd_step
        self._grad_chi = grad_chi or (lambda x, t: fd_grad(lambda z: chi(z, t), x, h))
        self._dchi_dt = dchi_dt or (lambda x, t: (chi(x, t + h) - chi(x, t - h)) / (2 * h))
        self.name = base.name
        self.domain = base.domain
        self.derivative_order = base.derivative_order
        self.fd_step = base.fd_step
        self.static = False
        self.params = dict(base.params)

    def A0(self, y):
        return self.base.A0(y)

    def B0(self, y):
        return self.base.B0(y)

    def gradB0(self, y):
        return self.base.gradB0(y)

    def hessB0(self, y):
        return self.base.hessB0(y)

    def A1(self, x, t):
        return self.base.A1(x, t) + self._grad_chi(as_vec(x), t)

    def phi(self, x, t):
        return self.base.phi(x, t) - self._dchi_dt(as_vec(x), t)

    def B1(self, x, t):
        return self.base.B1(x, t)

    def E(self, x, t):
        return self.base.E(x, t)

    def gradB1(self, x, t):
        return self.base.gradB1(x, t)

    def gradE(self, x, t):
        return self.base.gradE(x, t)

    def dB1_dt(self, x, t):
        return self.base.dB1_dt(x, t)

    def dE_dt(self, x, t):
        return self.base.dE_dt(x, t)


def potentials_only(model: FieldModel) -> FieldModel:
    """Rebuild ``model`` from its potentials alone (finite-difference backend)."""
    return FieldModel(
        model.A0,
        model.A1,
        model.phi,
        domain=model.domain,
        derivative_order=model.derivative_order,
        fd_step=model.fd_step,
        static=model.static,
        params=model.params,
    )


# ---------------------------------------------------------------------------
# builtin models
# ---------------------------------------------------------------------------


def _zeros_like_vec(x, t=0.0):
    x = np.asarray(x, dtype=float)
    return np.zeros(np.broadcast_shapes(x.shape, np.shape(t) + (3,)))


def _zeros_like_mat(x, t=0.0):
    return _zeros_like_vec(x, t)[..., None, :] * np.zeros(3)[:, None]


def _const_vec(x, value):
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.asarray(value, dtype=float), x.shape).copy()


class _Builtin(FieldModel):
    """Closed-form model; subclasses override what they need."""

    defaults: dict = {}

    def __init__(self, domain=None, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise BadParams(f"{self.name}: unknown parameters {sorted(unknown)}")
        merged = {**self.defaults, **params}
        for key, value in merged.items():
            try:
                merged[key] = float(value)
            except (TypeError, ValueError):
                raise BadParams(f"{self.name}: parameter {key!r} must be a number") from None
        super().__init__(
            self._A0_closed,
            domain=domain if domain is not None else self.default_domain,
            params=merged,
        )
        self.static = True
        self._validate()

    default_domain = ((-5.0,) * 3, (5.0,) * 3)

    def _validate(self):
        if self.params.get("B", 1.0) == 0.0:
            raise BadParams(f"{self.name}: guide field amplitude must be nonzero")

    def _A0_closed(self, y):  # pragma: no cover - overridden
        raise NotImplementedError

    def A1(self, x, t):
        return _zeros_like_vec(x, t)

    def phi(self, x, t):
        x = np.asarray(x, dtype=float)
        return np.zeros(np.broadcast_shapes(x.shape[:-1], np.shape(t)))

    def B1(self, x, t):
        return _zeros_like_vec(x, t)

    def E(self, x, t):
        return _zeros_like_vec(x, t)

    def gradB1(self, x, t):
        return _zeros_like_mat(x, t)

    def gradE(self, x, t):
        return _zeros_like_mat(x, t)

    def dB1_dt(self, x, t):
        return _zeros_like_vec(x, t)

    def dE_dt(self, x, t):
        return _zeros_like_vec(x, t)

    def hessB0(self, y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape[:-1] + (3, 3, 3))


class Uniform(_Builtin):
    """``B0 = B z``, symmetric gauge ``A0 = B (-y2/2, y1/2, 0)``."""

    name = "uniform"
    defaults = {"B": 1.0}

    def _A0_closed(self, y):
        y = as_vec(y)
        B = self.params["B"]
        return np.stack([-0.5 * B * y[..., 1], 0.5 * B * y[..., 0], 0.0 * y[..., 2]], axis=-1)

    def B0(self, y):
        return _const_vec(y, [0.0, 0.0, self.params["B"]])

    def gradB0(self, y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape[:-1] + (3, 3))


class ExB(Uniform):
    """Uniform ``B0 = B z`` with a uniform electrostatic field ``(Ex, Ey, 0)``."""

    name = "exb"
    defaults = {"B": 1.0, "Ex": 0.5, "Ey": 0.0}

    def phi(self, x, t):
        x = np.asarray(x, dtype=float)
        p = self.params
        out = -p["Ex"] * x[..., 0] - p["Ey"] * x[..., 1]
        return np.broadcast_to(out, np.broadcast_shapes(out.shape, np.shape(t))).copy()

    def E(self, x, t):
        p = self.params
        out = _zeros_like_vec(x, t)
        out[..., 0] = p["Ex"]
        out[..., 1] = p["Ey"]
        return out


class GradB(_Builtin):
    """Straight field lines with ``|B0| = B (1 + beta y1)``.

    ``A0 = (0, B (y1 + beta y1**2 / 2), 0)``.
    """

    name = "gradb"
    defaults = {"B": 1.0, "beta": 0.1}

    def _validate(self):
        super()._validate()
        lo, hi = self.domain
        beta = self.params["beta"]
        smallest = 1.0 + beta * (lo[0] if beta > 0 else hi[0])
        if smallest <= 0.0:
            raise BadParams("gradb: 1 + beta*y1 must stay positive on the domain")

    def _A0_closed(self, y):
        y = as_vec(y)
        B, beta = self.params["B"], self.params["beta"]
        zero = 0.0 * y[..., 0]
        return np.stack([zero, B * (y[..., 0] + 0.5 * beta * y[..., 0] ** 2), zero], axis=-1)

    def B0(self, y):
        y = as_vec(y)
        B, beta = self.params["B"], self.params["beta"]
        out = np.zeros(y.shape)
        out[..., 2] = B * (1.0 + beta * y[..., 0])
        return out

    def gradB0(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (3, 3))
        out[..., 0, 2] = self.params["B"] * self.params["beta"]
        return out


class ScrewPinch(_Builtin):
    """Helical field ``B0 = (-b y2, b y1, Bz)`` (uniform axial current).

    ``A0 = (-Bz y2 / 2, Bz y1 / 2, -b (y1**2 + y2**2) / 2)``.  Field lines have
    curvature and shear, ``|B0| = sqrt(Bz**2 + b**2 rho**2)``.
    """

    name = "screwpinch"
    defaults = {"Bz": 1.0, "b": 0.5}

    def _validate(self):
        if self.params["Bz"] == 0.0:
            raise BadParams("screwpinch: Bz must be nonzero (guide field vanishes on axis)")

    def _A0_closed(self, y):
        y = as_vec(y)
        Bz, b = self.params["Bz"], self.params["b"]
        return np.stack(
            [
                -0.5 * Bz * y[..., 1],
                0.5 * Bz * y[..., 0],
                -0.5 * b * (y[..., 0] ** 2 + y[..., 1] ** 2),
            ],
            axis=-1,
        )

    def B0(self, y):
        y = as_vec(y)
        Bz, b = self.params["Bz"], self.params["b"]
        return np.stack([-b * y[..., 1], b * y[..., 0], Bz + 0.0 * y[..., 2]], axis=-1)

    def gradB0(self, y):
        y = np.asarray(y, dtype=float)
        b = self.params["b"]
        out = np.zeros(y.shape[:-1] + (3, 3))
        out[..., 0, 1] = b
        out[..., 1, 0] = -b
        return out


class Mirror(_Builtin):
    """Axisymmetric mirror-like field with ``|B0|`` growing along ``y3``.

    ``A0 = B (1 + beta y3) (-y2/2, y1/2, 0)`` gives
    ``B0 = B (-beta y1/2, -beta y2/2, 1 + beta y3)``.
    """

    name = "mirror"
    defaults = {"B": 1.0, "beta": 0.1}

    def _validate(self):
        super()._validate()
        lo, hi = self.domain
        beta = self.params["beta"]
        if 1.0 + beta * (lo[2] if beta > 0 else hi[2]) <= 0.0:
            raise BadParams("mirror: 1 + beta*y3 must stay positive on the domain")

    def _A0_closed(self, y):
        y = as_vec(y)
        B, beta = self.params["B"], self.params["beta"]
        s = B * (1.0 + beta * y[..., 2])
        return np.stack([-0.5 * s * y[..., 1], 0.5 * s * y[..., 0], 0.0 * y[..., 2]], axis=-1)

    def B0(self, y):
        y = as_vec(y)
        B, beta = self.params["B"], self.params["beta"]
        return B * np.stack(
            [-0.5 * beta * y[..., 0], -0.5 * beta * y[..., 1], 1.0 + beta * y[..., 2]], axis=-1
        )

    def gradB0(self, y):
        y = np.asarray(y, dtype=float)
        B, beta = self.params["B"], self.params["beta"]
        out = np.zeros(y.shape[:-1] + (3, 3))
        out[..., 0, 0] = -0.5 * B * beta
        out[..., 1, 1] = -0.5 * B * beta
        out[..., 2, 2] = B * beta
        return out


class TimeWave(Uniform):
    """Uniform guide field plus a travelling electromagnetic wave along ``x1``.

    With phase ``psi = k x1 - omega t``::

        A1  = (0, ay sin psi, az sin psi)
        phi = p cos psi
    """

    name = "timewave"
    defaults = {"B": 1.0, "ay": 0.1, "az": 0.1, "p": 0.1, "k": 1.0, "omega": 1.0}

    def __init__(self, domain=None, **params):
        super().__init__(domain=domain, **params)
        self.static = False

    def _psi(self, x, t):
        x = np.asarray(x, dtype=float)
        return self.params["k"] * x[..., 0] - self.params["omega"] * np.asarray(t, dtype=float)

    def _vec(self, x, t, c0, c1, c2):
        shape = np.broadcast_shapes(np.shape(x), np.shape(t) + (3,))
        out = np.zeros(shape)
        out[..., 0], out[..., 1], out[..., 2] = c0, c1, c2
        return out

    def A1(self, x, t):
        p = self.params
        s = np.sin(self._psi(x, t))
        return self._vec(x, t, 0.0, p["ay"] * s, p["az"] * s)

    def phi(self, x, t):
        return self.params["p"] * np.cos(self._psi(x, t))

    def B1(self, x, t):
        p = self.params
        c = np.cos(self._psi(x, t))
        return self._vec(x, t, 0.0, -p["az"] * p["k"] * c, p["ay"] * p["k"] * c)

    def E(self, x, t):
        p = self.params
        psi = self._psi(x, t)
        s, c = np.sin(psi), np.cos(psi)
        return self._vec(x, t, p["p"] * p["k"] * s, p["ay"] * p["omega"] * c, p["az"] * p["omega"] * c)

    def gradB1(self, x, t):
        p = self.params
        s = np.sin(self._psi(x, t))
        row = self._vec(x, t, 0.0, p["az"] * p["k"] ** 2 * s, -p["ay"] * p["k"] ** 2 * s)
        out = np.zeros(row.shape[:-1] + (3, 3))
        out[..., 0, :] = row
        return out

    def gradE(self, x, t):
        p = self.params
        psi = self._psi(x, t)
        s, c = np.sin(psi), np.cos(psi)
        k, w = p["k"], p["omega"]
        row = self._vec(x, t, p["p"] * k**2 * c, -p["ay"] * w * k * s, -p["az"] * w * k * s)
        out = np.zeros(row.shape[:-1] + (3, 3))
        out[..., 0, :] = row
        return out

    def dB1_dt(self, x, t):
        p = self.params
        s = np.sin(self._psi(x, t))
        kw = p["k"] * p["omega"]
        return self._vec(x, t, 0.0, -p["az"] * kw * s, p["ay"] * kw * s)

    def dE_dt(self, x, t):
        p = self.params
        psi = self._psi(x, t)
        s, c = np.sin(psi), np.cos(psi)
        k, w = p["k"], p["omega"]
        return self._vec(x, t, -p["p"] * k * w * c, p["ay"] * w**2 * s, p["az"] * w**2 * s)


BUILTINS = {cls.name: cls for cls in (Uniform, ExB, GradB, ScrewPinch, TimeWave, Mirror)}


def builtin(name: str, params: Optional[dict] = None, domain=None) -> FieldModel:
    """Construct a named analytic field model.

    >>> builtin("gradb", {"B": 1.0, "beta": 0.1}).params["beta"]
    0.1
    """
    try:
        cls = BUILTINS[name]
    except KeyError:
        raise UnknownModel(f"unknown field model {name!r}; choose from {sorted(BUILTINS)}") from None
    return cls(domain=domain, **(params or {}))


# ---------------------------------------------------------------------------
# sampling and consistency checks
# ---------------------------------------------------------------------------


def sample(model: FieldModel, regime: ScalingRegime, x, t=0.0, order: int = 1) -> FieldSample:
    """Evaluate fields at physical position ``x``, time ``t``.

    ``order`` counts derivatives of ``B0`` requested (0, 1 or 2).  Guide-field
    derivatives carry the chain-rule factor ``eps_B**order``.
    """
    x = as_vec(x)
    if order + 1 > model.derivative_order:
        raise DerivativeUnavailable(
            f"order {order} needs derivative order {order + 1} > {model.derivative_order}"
        )
    model.require_inside(x, time=t)
    eb = regime.eps_B
    y = eb * x
    B0 = model.B0(y)
    out = dict(B0=B0, B1=model.B1(x, t), E=model.E(x, t))
    if order >= 1:
        g = eb * model.gradB0(y)
        absB = norm(B0)
        b = B0 / absB[..., None]
        grad_abs = np.einsum("...ij,...j->...i", g, b)
        grad_b = (g - grad_abs[..., :, None] * b[..., None, :]) / absB[..., None, None]
        out.update(
            gradB0=g,
            grad_absB0=grad_abs,
            curl_b0=curl_from_grad(grad_b),
            gradB1=model.gradB1(x, t),
            gradE=model.gradE(x, t),
        )
    if order >= 2:
        out["hessB0"] = eb**2 * model.hessB0(y)
    return FieldSample(**out)


@dataclass
class ConsistencyReport:
    passed: bool
    residual_B0: float
    residual_B1: float
    residual_E: float
    worst_point: Optional[np.ndarray]
    worst_quantity: Optional[str]
    tol: float

    @property
    def max_residual(self) -> float:
        return max(self.residual_B0, self.residual_B1, self.residual_E)


def check_consistency(model: FieldModel, points, h: float = 1e-4, tol: float = 1e-6, t=0.0):
    """Compare the model's fields with central differences of its potentials.

    ``B0`` is checked in intrinsic coordinates; ``B1`` and ``E`` at physical
    ``points`` and time(s) ``t``.
    """
    points = as_vec(points)
    curl_A0 = curl_from_grad(fd_grad(model.A0, points, h))
    r0 = np.max(np.abs(curl_A0 - model.B0(points)), axis=-1)
    curl_A1 = curl_from_grad(fd_grad(lambda z: model.A1(z, t), points, h))
    r1 = np.max(np.abs(curl_A1 - model.B1(points, t)), axis=-1)
    E_fd = -fd_grad(lambda z: model.phi(z, t), points, h) - (
        model.A1(points, t + h) - model.A1(points, t - h)
    ) / (2 * h)
    rE = np.max(np.abs(E_fd - model.E(points, t)), axis=-1)
    res = {"B0": np.atleast_1d(r0), "B1": np.atleast_1d(r1), "E": np.atleast_1d(rE)}
    worst_q = max(res, key=lambda k: res[k].max())
    flat = np.atleast_2d(points).reshape(-1, 3)
    idx = int(np.argmax(res[worst_q].reshape(-1))) if flat.shape[0] == res[worst_q].size else 0
    maxima = {k: float(v.max()) for k, v in res.items()}
    passed = all(v < tol for v in maxima.values())
    return ConsistencyReport(
        passed=passed,
        residual_B0=maxima["B0"],
        residual_B1=maxima["B1"],
        residual_E=maxima["E"],
        worst_point=None if passed else flat[idx].copy(),
        worst_quantity=None if passed else worst_q,
        tol=tol,
    )


def random_points(model: FieldModel, n: int, rng=None, shrink: float = 0.8, scale: float = 1.0):
    """Uniform random positions inside (a shrunken copy of) the model domain."""
    rng = np.random.default_rng(rng)
    lo, hi = model.domain
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * shrink
    return (mid + half * rng.uniform(-1.0, 1.0, size=(n, 3))) * scale


def absB0(model: FieldModel, regime: ScalingRegime, x):
    return norm(model.B0(regime.eps_B * as_vec(x)))


__all__ = [
    "BUILTINS",
    "ConsistencyReport",
    "FieldModel",
    "FieldSample",
    "GaugeShifted",
    "Ordering",
    "ScalingRegime",
    "absB0",
    "builtin",
    "check_consistency",
    "potentials_only",
    "random_points",
    "sample",
]
