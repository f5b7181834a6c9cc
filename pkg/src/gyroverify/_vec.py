"""Small batched vector helpers; the last axis is always the 3-vector axis."""

import numpy as np

_EYE = np.eye(3)


def dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def cross(a, b):
    return np.cross(a, b)


def norm(a):
    return np.sqrt(dot(a, a))


def vecmat(v, m):
    """``v . M`` with ``(v . M)_j = sum_i v_i M_ij`` (directional derivative)."""
    return np.einsum("...i,...ij->...j", v, m)


def matvec(m, v):
    """``M . v`` with ``(M . v)_i = sum_j M_ij v_j``."""
    return np.einsum("...ij,...j->...i", m, v)


def curl_from_grad(g):
    """Curl of a field given its transpose Jacobian ``g[..., i, j] = d_i F_j``."""
    return np.stack(
        [
            g[..., 1, 2] - g[..., 2, 1],
            g[..., 2, 0] - g[..., 0, 2],
            g[..., 0, 1] - g[..., 1, 0],
        ],
        axis=-1,
    )


def fd_grad(f, x, h):
    """Central-difference transpose Jacobian of ``f`` w.r.t. the 3-vector ``x``.

    Returns an array whose axis ``-1 - f.ndim_extra`` indexes the derivative
    direction, i.e. ``out[..., i, ...] = d f[...] / d x_i``.
    """
    x = np.asarray(x, dtype=float)
    parts = []
    for i in range(3):
        step = h * _EYE[i]
        parts.append((np.asarray(f(x + step)) - np.asarray(f(x - step))) / (2.0 * h))
    return np.stack(parts, axis=x.ndim - 1)


def as_vec(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (3,):
        raise ValueError(f"expected trailing dimension 3, got shape {x.shape}")
    return x
