import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gyroverify import fields as F
from gyroverify._vec import curl_from_grad, fd_grad
from gyroverify.errors import BadParams, DerivativeUnavailable, DomainEscape, UnknownModel

coord = st.floats(-2.0, 2.0)
point = st.tuples(coord, coord, coord).map(np.array)


def test_uniform_sample_is_constant():
    m = F.builtin("uniform", {"B": 1.0})
    s = F.sample(m, F.ScalingRegime(0.1, 2), [0.3, -1.2, 2.0], t=0.7, order=2)
    assert np.array_equal(s.B0, [0.0, 0.0, 1.0])
    assert np.all(s.gradB0 == 0.0)
    assert np.all(s.E == 0.0)
    assert np.all(s.hessB0 == 0.0)


def test_gradb_sample_chain_rule():
    m = F.builtin("gradb", {"B": 1.0, "beta": 0.1})
    reg = F.ScalingRegime(0.1, 2)
    s = F.sample(m, reg, [0.0, 0.0, 0.0], order=1)
    np.testing.assert_allclose(s.B0, [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(s.grad_absB0, [0.01, 0.0, 0.0], atol=1e-15)
    # cross-check against central differences of |B0(eps_B x)|
    fd = fd_grad(lambda x: np.linalg.norm(m.B0(reg.eps_B * x), axis=-1), np.zeros(3), 1e-5)
    np.testing.assert_allclose(fd, s.grad_absB0, atol=1e-10)


def test_gradb_absB_linear():
    m = F.builtin("gradb", {"B": 1.0, "beta": 0.1})
    y = np.array([[x, 0.3, -0.2] for x in np.linspace(-1, 1, 7)])
    np.testing.assert_allclose(np.linalg.norm(m.B0(y), axis=-1), 1.0 + 0.1 * y[:, 0], rtol=1e-14)


def test_builtin_uniform_symmetric_gauge():
    m = F.builtin("uniform", {"B": 1.0})
    y = np.array([0.4, -0.6, 1.0])
    np.testing.assert_allclose(m.A0(y), [0.3, 0.2, 0.0])
    np.testing.assert_allclose(m.B0(y), [0.0, 0.0, 1.0])


def test_builtin_exb():
    m = F.builtin("exb", {"B": 1.0, "Ex": 0.5})
    x = np.array([0.7, 0.1, -0.3])
    assert m.phi(x, 0.0) == pytest.approx(-0.35)
    np.testing.assert_allclose(m.E(x, 0.0), [0.5, 0.0, 0.0])
    np.testing.assert_allclose(m.B0(x), [0.0, 0.0, 1.0])


def test_gradb_curl_matches_fd():
    m = F.builtin("gradb", {"B": 1.0, "beta": 0.1})
    pts = F.random_points(m, 20, rng=3, shrink=0.3)
    curl = curl_from_grad(fd_grad(m.A0, pts, 1e-4))
    assert np.max(np.abs(curl - m.B0(pts))) < 1e-8


def test_unknown_model_and_bad_params():
    with pytest.raises(UnknownModel):
        F.builtin("tokamak")
    with pytest.raises(BadParams):
        F.builtin("uniform", {"B": 0.0})


@pytest.mark.parametrize("name", sorted(F.BUILTINS))
def test_check_consistency_builtins(name):
    m = F.builtin(name)
    pts = F.random_points(m, 50, rng=0, shrink=0.3)
    rep = F.check_consistency(m, pts, h=1e-4, tol=1e-6, t=0.37)
    assert rep.passed, rep


def test_check_consistency_uniform_zero_residual():
    m = F.builtin("uniform")
    rep = F.check_consistency(m, F.random_points(m, 10, rng=1), tol=1e-6)
    assert rep.passed
    # linear potentials: central differences are exact up to round-off
    assert rep.max_residual < 1e-10


def test_check_consistency_negative_control():
    class WrongE(type(F.builtin("exb"))):
        def E(self, x, t):
            return super().E(x, t) + np.array([0.0, 1e-3, 0.0])

    m = WrongE()
    rep = F.check_consistency(m, F.random_points(m, 10, rng=2), tol=1e-6)
    assert not rep.passed
    assert rep.worst_quantity == "E"
    assert rep.worst_point is not None and rep.worst_point.shape == (3,)


def test_gauge_shift_identical_samples():
    m = F.builtin("exb")
    g = m.gauge_shifted(lambda x, t: x[..., 0] * t)
    x = F.random_points(m, 5, rng=4)
    for t in (0.0, 0.4):
        assert np.array_equal(m.E(x, t), g.E(x, t))
        assert np.array_equal(m.B1(x, t), g.B1(x, t))
    # shifted potentials still produce the same fields
    assert F.check_consistency(g, x * 0.2, t=0.4).passed


def test_potentials_only_backend_matches_closed_forms():
    m = F.builtin("timewave")
    fd = F.potentials_only(m)
    x = F.random_points(m, 8, rng=5, shrink=0.2)
    np.testing.assert_allclose(fd.B1(x, 0.3), m.B1(x, 0.3), atol=1e-8)
    np.testing.assert_allclose(fd.E(x, 0.3), m.E(x, 0.3), atol=1e-8)
    np.testing.assert_allclose(fd.gradB0(x), m.gradB0(x), atol=1e-7)


def test_domain_escape():
    m = F.builtin("uniform")
    with pytest.raises(DomainEscape):
        F.sample(m, F.ScalingRegime(0.1, 1), [9.0, 0.0, 0.0])


def test_derivative_unavailable():
    m = F.FieldModel(lambda y: np.stack([0 * y[..., 0], y[..., 0], 0 * y[..., 0]], -1), derivative_order=3)
    F.sample(m, F.ScalingRegime(0.1, 1), np.zeros(3), order=2)
    with pytest.raises(DerivativeUnavailable):
        F.sample(m, F.ScalingRegime(0.1, 1), np.zeros(3), order=3)


def test_regime_validation():
    assert F.ScalingRegime(0.1, 1).eps_B == 1.0
    assert F.ScalingRegime(0.1, 2).eps_B == 0.1
    with pytest.raises(BadParams):
        F.ScalingRegime(0.6, 1)
    with pytest.raises(BadParams):
        F.ScalingRegime(-0.1, 1)


@given(point)
def test_guide_fields_divergence_free(y):
    for name in ("gradb", "screwpinch", "mirror"):
        G = F.builtin(name).gradB0(y)
        assert abs(np.trace(G)) < 1e-12


@given(point)
def test_closed_form_gradients_match_fd(y):
    for name in ("gradb", "screwpinch", "mirror"):
        m = F.builtin(name)
        np.testing.assert_allclose(m.gradB0(y), fd_grad(m.B0, y, 1e-5), atol=1e-8)
        np.testing.assert_allclose(m.hessB0(y), fd_grad(m.gradB0, y, 1e-5), atol=1e-7)
