import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gyroverify.estimators import GYRO_FEATURES, GyroTransformer


def test_round_trip_and_clone():
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.uniform(-0.5, 0.5, (20, 3)), rng.uniform(-1, 1, (20, 3))])
    tr = GyroTransformer("screwpinch", eps=0.05, ordering=1, N=2).fit(X)
    Z = tr.transform(X)
    assert Z.shape == (20, 6)
    np.testing.assert_allclose(tr.inverse_transform(Z), X, atol=1e-10)
    c = clone(tr)
    assert c.get_params() == tr.get_params()
    assert list(tr.get_feature_names_out()) == list(GYRO_FEATURES)


def test_unfitted_and_bad_shape():
    with pytest.raises(NotFittedError):
        GyroTransformer().transform(np.zeros((1, 6)))
    tr = GyroTransformer().fit()
    with pytest.raises(ValueError):
        tr.transform(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        GyroTransformer(N=3).fit()
