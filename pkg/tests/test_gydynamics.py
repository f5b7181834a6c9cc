import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gyroverify import fields as F
from gyroverify import gydynamics as D
from gyroverify import gymap as G
from gyroverify.errors import BadParams, BStarParZero


def _hs(r=(0.0, 0.0, 0.0), qp=0.0, mu=1.0, t=0.0):
    return G.HatGyroState.make(np.asarray(r, float), qp, mu, 0.0, t)


def test_uniform_effective_fields():
    ef = D.effective_fields(F.builtin("uniform"), F.ScalingRegime(0.1, 1), 1, _hs(qp=0.7))
    np.testing.assert_allclose(ef.B_star, [0, 0, 1], atol=1e-15)
    assert float(ef.B_star_par) == 1.0


def test_gradb_E_star_contains_grad_B():
    reg = F.ScalingRegime(0.1, 2)
    ef = D.effective_fields(F.builtin("gradb", {"beta": 0.1}), reg, 1, _hs(mu=1.0))
    np.testing.assert_allclose(ef.E_star, [-0.01, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("name", ["exb", "screwpinch", "timewave"])
def test_first_order_E_star_exact(name):
    m = F.builtin(name)
    reg = F.ScalingRegime(0.1, 1)
    hs = _hs([0.2, 0.1, 0.3], 0.4, 0.6, 0.25)
    ef = D.effective_fields(m, reg, 1, hs)
    from gyroverify.frame import frame_derivatives

    grad_abs = frame_derivatives(m, hs.r).grad_absB
    np.testing.assert_array_equal(ef.E_star, m.E(hs.r, hs.t) - 0.6 * grad_abs)


def test_uniform_E_drift_example():
    eps, Ex = 0.1, 0.5
    f = D.rhs_decoupled(F.builtin("exb", {"Ex": Ex}), F.ScalingRegime(eps, 1), 1, _hs(qp=0.5))
    np.testing.assert_allclose(f.dr, [0.0, -eps * Ex, 0.5], atol=1e-15)
    assert float(f.dq_par) == 0.0 and float(f.dmu) == 0.0
    assert float(f.dalpha) == pytest.approx(1 / eps)


def test_parallel_streaming_uniform():
    tr = D.integrate_gy(F.builtin("uniform"), F.ScalingRegime(0.1, 1), 1, _hs(qp=0.3), 1.0, dt=0.01)
    np.testing.assert_allclose(tr.r[-1], [0.0, 0.0, 0.3], atol=1e-14)
    assert np.all(tr.mu_hat == 1.0)


def test_mirror_force():
    f = D.rhs_decoupled(F.builtin("mirror", {"beta": 0.1}), F.ScalingRegime(0.1, 2), 1, _hs(qp=0.0, mu=1.0))
    assert float(f.dq_par) == pytest.approx(-0.01, abs=1e-15)


def test_no_parallel_force_when_grad_B_is_perpendicular():
    # |B0| varies across the field lines only, so B* . grad|B0| = 0
    f = D.rhs_decoupled(F.builtin("gradb", {"beta": 0.1}), F.ScalingRegime(0.1, 2), 1, _hs(qp=0.0, mu=1.0))
    assert float(f.dq_par) == 0.0
    # grad-B drift along b0 x grad|B| (= +y) with speed eps mu |grad|B|| / |B|
    assert float(f.dr[..., 1]) == pytest.approx(0.1 * 0.01, rel=1e-12)


def test_Bstar_par_zero_detected():
    # q_par curl b0 cancels b0 . B0 / eps for huge q_par in the screw pinch
    m = F.builtin("screwpinch")
    reg = F.ScalingRegime(0.1, 1)
    from gyroverify.frame import frame_derivatives
    from gyroverify._vec import curl_from_grad, dot

    r = np.array([0.4, 0.0, 0.0])
    d = frame_derivatives(m, r)
    kappa = float(dot(curl_from_grad(d.grad_b0), d.b0))
    qp = -float(d.absB) / (reg.eps * kappa)
    with pytest.raises(BStarParZero):
        D.effective_fields(m, reg, 1, _hs(r, qp, 0.5))


def test_eps_zero_rejected():
    with pytest.raises(BadParams):
        D.rhs_decoupled(F.builtin("uniform"), F.ScalingRegime(0.0, 1), 1, _hs())


@settings(max_examples=6)
@given(st.floats(-1, 1), st.floats(0.1, 1.0))
def test_static_energy_conserved(qp, mu):
    for name, ordering, N in (("screwpinch", 1, 2), ("gradb", 2, 2), ("mirror", 1, 1)):
        tr = D.integrate_gy(F.builtin(name), F.ScalingRegime(0.05, ordering), N, _hs([0.2, 0.1, 0.0], qp, mu), 0.5, dt=0.01)
        H = tr.H_gy
        assert np.max(np.abs(H - H[0])) < 1e-9
        assert np.all(tr.mu_hat == mu)


def test_alpha_independence():
    m = F.builtin("timewave")
    reg = F.ScalingRegime(0.05, 2)
    a = D.rhs_decoupled(m, reg, 2, G.HatGyroState.make([0.1, 0.2, 0.3], 0.4, 0.5, 0.0, 0.1))
    b = D.rhs_decoupled(m, reg, 2, G.HatGyroState.make([0.1, 0.2, 0.3], 0.4, 0.5, 2.5, 0.1))
    assert np.array_equal(a.dr, b.dr) and a.dq_par == b.dq_par


def test_backward_and_evaluate_F():
    m = F.builtin("screwpinch")
    reg = F.ScalingRegime(0.05, 1)
    hs0 = _hs([0.2, 0.1, 0.0], 0.4, 0.5)
    fwd = D.integrate_gy(m, reg, 2, hs0, 0.3, dt=0.005)
    back = D.integrate_gy(m, reg, 2, fwd.state(-1), 0.0, dt=0.005)
    np.testing.assert_allclose(back.slow()[-1], hs0.slow(), atol=1e-10)

    def F0(h):
        return np.exp(-np.sum(np.asarray(h.r) ** 2, axis=-1)) * np.asarray(h.q_par)

    q = fwd.state(-1)
    val = D.evaluate_F(m, reg, 2, F0, q, 0.3, dt=0.005)
    assert float(val) == pytest.approx(float(F0(hs0)), abs=1e-10)
    assert float(D.evaluate_F(m, reg, 2, F0, q, 0.0, t0=0.0)) == float(F0(q))


def test_gy_csv():
    tr = D.integrate_gy(F.builtin("uniform"), F.ScalingRegime(0.1, 1), 1, _hs(qp=0.3), 0.05, dt=0.01)
    lines = tr.to_csv().splitlines()
    assert lines[0] == ",".join(D.GY_COLUMNS)
    assert len(lines) == 7
