import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gyroverify import fields as F
from gyroverify import gymap as G
from gyroverify import verify as V
from gyroverify.errors import BadParams, DegenerateFit

HS = G.HatGyroState.make([0.1, 0.2, 0.0], 0.5, 0.5, 0.0, 0.0)


def test_fit_exact_rates():
    s = V.convergence_fit([(0.1, 1e-2), (0.05, 5e-3), (0.025, 2.5e-3)])
    assert s.fitted_slope == pytest.approx(1.0, abs=1e-12)
    assert s.r_squared == pytest.approx(1.0, abs=1e-12)
    assert V.convergence_fit([(0.1, 1e-2), (0.05, 2.5e-3)]).fitted_slope == pytest.approx(2.0, abs=1e-12)


def test_fit_noise_floor_and_errors():
    s = V.convergence_fit([(0.1, 1e-4), (0.05, 1e-5), (0.025, 1e-16)])
    assert s.dropped == [0.025]
    with pytest.raises(DegenerateFit):
        V.convergence_fit([(0.1, 1e-4), (0.05, 0.0), (0.025, 0.0)])
    with pytest.raises(BadParams):
        V.convergence_fit([(0.05, 1e-4), (0.1, 1e-3)])


@given(st.floats(0.3, 4.0), st.floats(-8, 2))
def test_fit_recovers_power_law(p, logc):
    eps = [0.1, 0.05, 0.025, 0.0125]
    s = V.convergence_fit([(e, 10**logc * e**p) for e in eps])
    assert s.fitted_slope == pytest.approx(p, abs=1e-9)


def test_convergence_csv():
    text = V.convergence_fit([(0.1, 1e-2), (0.05, 2.5e-3)]).to_csv()
    rows = text.splitlines()
    assert rows[0] == "eps,error,slope_running"
    assert rows[1].endswith(",")
    assert float(rows[2].split(",")[2]) == pytest.approx(2.0)


def test_gronwall_envelope():
    assert np.all(V.gronwall_envelope(0.7, 0.0, 0.0, np.linspace(0, 3, 5)) == 0.0)
    assert V.gronwall_envelope(1.0, 1.0, 0.0, 1.0) == pytest.approx(np.e - 1)
    assert V.gronwall_envelope(0.0, 2.0, 0.5, 1.5) == pytest.approx(3.5)
    gb = V.GronwallBound(ell_Lambda=1.0, S_inf=10.0, eps=0.1, N=1)
    assert gb(1.0) == pytest.approx(np.e - 1)


def test_ladder_checks():
    with pytest.raises(BadParams, match="ladder must decrease"):
        V.check_ladder([0.05, 0.1])
    res = V.run_ladder(lambda e: e * 2, [0.1, 0.05], threads=2)
    assert list(res) == [0.1, 0.05] and res[0.05] == 0.1


def test_uniform_compare_is_exact():
    run = V.compare(F.builtin("uniform"), F.ScalingRegime(0.05, 1), 1, HS, 1.0)
    assert run.sup_error() < 1e-9
    assert run.max_mu_drift() < 1e-9
    assert run.failed_times == []


def test_moment_drift_uniform():
    assert V.moment_drift(F.builtin("uniform"), F.ScalingRegime(0.05, 2), 2, HS, 1.0) < 1e-9


def test_threaded_sweep_is_deterministic():
    m = F.builtin("gradb")
    reg = F.ScalingRegime(0.1, 2)
    a = V.sweep(m, reg, 1, HS, [0.1, 0.05], t1=0.2, threads=1)
    b = V.sweep(m, reg, 1, HS, [0.1, 0.05], t1=0.2, threads=2)
    assert a.error_fit.to_csv() == b.error_fit.to_csv()


def test_slow_error_bounded_scaled_error():
    # sup error / eps^N must not grow as eps halves
    for name in ("gradb", "screwpinch"):
        for ordering in (1, 2):
            sw = V.sweep(F.builtin(name), F.ScalingRegime(0.1, ordering), 1, HS, [0.1, 0.05, 0.025], t1=0.5)
            e = [r.sup_error() for r in sw.runs.values()]
            for big, small in zip(e, e[1:]):
                assert big / small >= 2 ** 1 * 0.5


def test_distribution_error_identities():
    m = F.builtin("uniform")
    reg = F.ScalingRegime(0.1, 1)
    q = V.query_points(10, seed=3)
    d = V.distribution_error(m, reg, 1, f0_tilde=lambda h: 0.0 * np.asarray(h.q_par), query_set=q, t1=0.5)
    assert d.max_error < 1e-8
    d0 = V.distribution_error(F.builtin("gradb"), reg, 2, query_set=q, t1=0.0)
    expected = 0.1**2 * np.max(np.abs(V.default_f0_tilde(q)))
    assert d0.max_error == pytest.approx(expected, abs=1e-12)


def test_query_points_deterministic():
    a, b = V.query_points(5, seed=7), V.query_points(5, seed=7)
    assert np.array_equal(a.r, b.r) and np.array_equal(a.alpha, b.alpha)


def test_gauge_zero_is_exact():
    rep = V.gauge_check(F.builtin("exb"), "zero", F.ScalingRegime(0.05, 2), 1, HS, 0.05)
    assert rep.generator_deviation == 0.0 and rep.gy_deviation == 0.0 and rep.fo_deviation == 0.0
    assert rep.generators_bitwise_equal
    with pytest.raises(BadParams):
        V.gauge("unknown")


def test_gradb_maximal_second_order_slope():
    hs0 = G.HatGyroState.make([0.1, 0.2, 0.0], 0.5, 0.5, 0.0, 0.0)
    sw = V.sweep(F.builtin("gradb"), F.ScalingRegime(0.1, 2), 2, hs0, [0.1, 0.05, 0.025], 1.0)
    # lower bound only: on this field the observed rate exceeds the nominal one
    assert sw.error_fit.fitted_slope >= 1.7
