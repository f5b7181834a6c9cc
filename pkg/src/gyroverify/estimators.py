"""scikit-learn style wrapper around the gyro map.

:class:`GyroTransformer` maps particle rows ``(x1, x2, x3, v1, v2, v3)`` to
hat-gyro rows ``(r1, r2, r3, q_par, mu_hat, alpha)`` and back, so the
reduction can sit inside a ``Pipeline`` next to other feature maps.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fields import FieldModel, ScalingRegime, builtin
from .frame import ParticleState
from .gymap import HatGyroState, tau_gy, tau_gy_inverse

PARTICLE_FEATURES = ("x1", "x2", "x3", "v1", "v2", "v3")
GYRO_FEATURES = ("r1", "r2", "r3", "q_par", "mu_hat", "alpha")


class GyroTransformer(TransformerMixin, BaseEstimator):
    """Order-``N`` gyro map as a stateless transformer.

    Parameters
    ----------
    field : str or FieldModel
        Built-in model name or a model instance.
    eps : float
        Small parameter.
    ordering : int
        1 (strong guide-field variation) or 2 (maximal ordering).
    N : int
        Truncation order, 1 or 2.
    t : float
        Time at which the map is evaluated.
    field_params : dict, optional
        Parameters for a built-in model.

    Examples
    --------
    >>> import numpy as np
    >>> tr = GyroTransformer("uniform", eps=0.1).fit(None)
    >>> X = np.array([[0.0, 0.0, 0.0, 0.3, 0.4, 0.5]])
    >>> np.allclose(tr.inverse_transform(tr.transform(X)), X)
    True
    """

    def __init__(self, field="uniform", eps=0.05, ordering=1, N=1, t=0.0, field_params=None):
        self.field = field
        self.eps = eps
        self.ordering = ordering
        self.N = N
        self.t = t
        self.field_params = field_params

    def fit(self, X=None, y=None):
        if isinstance(self.field, FieldModel):
            self.model_ = self.field
        else:
            self.model_ = builtin(self.field, self.field_params)
        self.regime_ = ScalingRegime(self.eps, self.ordering)
        if self.N not in (1, 2):
            raise ValueError("N must be 1 or 2")
        self.n_features_in_ = 6
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 6:
            raise ValueError("expected particle rows (x1, x2, x3, v1, v2, v3)")
        t = np.full(X.shape[0], float(self.t))
        hs = tau_gy_inverse(self.model_, self.regime_, self.N, ParticleState(X[:, :3], X[:, 3:], t))
        return np.column_stack([hs.r, hs.q_par, hs.mu_hat, hs.alpha])

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        Z = check_array(Z, dtype=float)
        if Z.shape[1] != 6:
            raise ValueError("expected hat-gyro rows (r1, r2, r3, q_par, mu_hat, alpha)")
        t = np.full(Z.shape[0], float(self.t))
        s = tau_gy(self.model_, self.regime_, self.N, HatGyroState(Z[:, :3], Z[:, 3], Z[:, 4], Z[:, 5], t))
        return np.column_stack([s.x, s.v])

    def get_feature_names_out(self, input_features=None):
        return np.asarray(GYRO_FEATURES, dtype=object)


__all__ = ["GYRO_FEATURES", "GyroTransformer", "PARTICLE_FEATURES"]
