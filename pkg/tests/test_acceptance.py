"""Acceptance criteria 1-9, one verdict line per criterion."""

import json
import time

import numpy as np
import pytest

from conftest import record_criterion
from gyroverify import cli
from gyroverify import fields as F
from gyroverify import frame as Fr
from gyroverify import fullorbit as FO
from gyroverify import gydynamics as D
from gyroverify import gymap as G
from gyroverify import verify as V
from gyroverify._vec import cross

LADDER = [0.1, 0.05, 0.025]
COMBOS = [(o, N) for o in (1, 2) for N in (1, 2)]
HS0 = G.HatGyroState.make(
    [[0.1, 0.2, 0.0], [-0.3, 0.1, 0.2], [0.2, -0.25, -0.1]],
    [0.5, -0.4, 0.2],
    [0.5, 0.3, 0.7],
    [0.0, 2.0, 4.0],
    0.0,
)


def _verdict(number, checks, elapsed, budget, extra=""):
    ok_all = all(ok for ok, _ in checks) and elapsed < budget
    failed = [msg for ok, msg in checks if not ok]
    detail = f"{len(checks) - len(failed)}/{len(checks)} checks, {elapsed:.1f}s (budget {budget:g}s)"
    if extra:
        detail += f"; {extra}"
    if failed:
        detail += "; failed: " + "; ".join(failed[:4])
    record_criterion(number, ok_all, detail)
    return ok_all, failed


# ---------------------------------------------------------------------------


def test_criterion_1_frame_and_map_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 128
    checks, worst = [], 0.0
    for name in sorted(F.BUILTINS):
        m = F.builtin(name)
        x = rng.uniform(-0.8, 0.8, (n, 3))
        vpar, vperp, th = rng.uniform(-1, 1, n), rng.uniform(0.05, 1.2, n), rng.uniform(0, 2 * np.pi, n)
        for ordering in (1, 2):
            reg = F.ScalingRegime(0.05, ordering)
            fr = Fr.build_frame(m, reg, x)
            M = np.stack([fr.e1, fr.e2, fr.b0], axis=-2)
            ortho = np.max(np.abs(M @ np.swapaxes(M, -1, -2) - np.eye(3)))
            gb = Fr.gyro_basis(fr, th)
            v = vpar[:, None] * gb.b0 + vperp[:, None] * gb.c0
            ident = max(
                np.max(np.abs(cross(gb.b0, v) - vperp[:, None] * gb.a0)),
                np.max(np.abs(cross(cross(gb.b0, v), gb.b0) - vperp[:, None] * gb.c0)),
            )
            pc = Fr.PrelimCoords(x, vpar, vperp, th, np.zeros(n))
            back = Fr.to_prelim(m, reg, Fr.from_prelim(m, reg, pc))
            dth = np.abs((back.theta - th + np.pi) % (2 * np.pi) - np.pi)
            prelim = max(np.max(np.abs(back.v_par - vpar)), np.max(np.abs(back.v_perp - vperp)), np.max(dth))
            for N in (1, 2):
                gs = G.GyroState(x, vpar, vperp, th, np.full(n, 0.2))
                q = G.apply_tau_eps(m, reg, N, gs)
                inv = G.invert_tau_eps(m, reg, N, q)
                q2 = G.apply_tau_eps(m, reg, N, inv)
                rt = max(np.max(np.abs(q2.x - q.x)), np.max(np.abs(q2.v_par - q.v_par)), np.max(np.abs(q2.v_perp - q.v_perp)))
                err = max(ortho, ident, prelim, rt)
                worst = max(worst, err)
                checks.append((err < 1e-9, f"{name} o{ordering} N{N}: {err:.2e}"))
    elapsed = time.perf_counter() - t0
    ok, failed = _verdict(1, checks, elapsed, 5.0, f"worst residual {worst:.2e} over {n} states per model")
    assert ok, failed


def test_criterion_2_full_orbit_fidelity():
    t0 = time.perf_counter()
    eps = 0.05
    reg = F.ScalingRegime(eps, 1)
    s0 = Fr.ParticleState.make([[0.1, 0.2, 0.0], [-0.3, 0.1, 0.2]], [[0.3, 0.5, 0.4], [-0.6, 0.2, 0.1]], 0.0)
    checks, worst = [], 0.0
    for name in sorted(n for n in F.BUILTINS if F.builtin(n).static):
        for scheme in FO.SCHEMES:
            tr = FO.integrate(F.builtin(name), reg, s0, 1.0, dt=eps / 100, scheme=scheme)
            d = tr.energy_drift()
            worst = max(worst, d)
            checks.append((d < 1e-8, f"{name} {scheme} energy drift {d:.2e}"))
    m = F.builtin("uniform")
    ps = Fr.ParticleState.make([0.0, 0.0, 0.0], [0.7, 0.0, 0.3])
    T = FO.gyro_period(m, reg, ps.x)
    closure = {}
    for scheme in FO.SCHEMES:
        tr = FO.integrate(m, reg, ps, T, dt=eps / 100, scheme=scheme)
        # remove the parallel streaming, which is not part of the gyration
        closure[scheme] = float(np.max(np.abs(tr.x[-1] - ps.x - np.array([0, 0, 0.3 * T]))))
    checks.append((closure["rk4"] < 1e-6, f"rk4 closure {closure['rk4']:.2e}"))
    elapsed = time.perf_counter() - t0
    extra = (
        f"max energy drift {worst:.1e}; orbit closure per period rk4 {closure['rk4']:.1e}, "
        f"boris {closure['boris']:.1e} (second-order phase lag of the Boris rotation)"
    )
    ok, failed = _verdict(2, checks, elapsed, 30.0, extra)
    assert ok, failed


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ladder_runs():
    t0 = time.perf_counter()
    runs = {}
    for name in ("gradb", "screwpinch"):
        for ordering, N in COMBOS:
            runs[(name, ordering, N)] = V.sweep(F.builtin(name), F.ScalingRegime(LADDER[0], ordering), N, HS0, LADDER, 1.0)
    return runs, time.perf_counter() - t0


def test_criterion_3_slow_error_scaling(ladder_runs):
    runs, elapsed = ladder_runs
    checks, table = [], []
    for (name, ordering, N), sw in runs.items():
        if sw.error_fit is None:
            checks.append((False, f"{name} o{ordering} N{N}: {sw.error_fit_issue}"))
            continue
        s = sw.error_fit.fitted_slope
        checks.append((s >= N - 0.3, f"{name} o{ordering} N{N} slope {s:.2f}"))
        table.append(f"{name}/o{ordering}/N{N}={s:.2f}")
    for name in ("gradb", "screwpinch"):
        for ordering in (1, 2):
            e1 = runs[(name, ordering, 1)].runs[0.05].sup_error()
            e2 = runs[(name, ordering, 2)].runs[0.05].sup_error()
            checks.append((e2 <= e1, f"{name} o{ordering}: N2 {e2:.2e} vs N1 {e1:.2e} at eps=0.05"))
    ok, failed = _verdict(3, checks, elapsed, 600.0, "slopes " + " ".join(table))
    assert ok, failed


def test_criterion_4_adiabatic_invariant(ladder_runs):
    runs, shared = ladder_runs
    t0 = time.perf_counter()
    checks, table = [], []
    for (name, ordering, N), sw in runs.items():
        if sw.drift_fit is None:
            checks.append((False, f"{name} o{ordering} N{N}: {sw.drift_fit_issue}"))
            continue
        s = sw.drift_fit.fitted_slope
        checks.append((s >= N - 0.3, f"{name} o{ordering} N{N} slope {s:.2f}"))
        table.append(f"{name}/o{ordering}/N{N}={s:.2f}")
    drifts = [V.moment_drift(F.builtin("uniform"), F.ScalingRegime(0.05, o), N, HS0, 1.0) for o, N in COMBOS]
    checks.append((max(drifts) < 1e-9, f"uniform drift {max(drifts):.1e}"))
    own = time.perf_counter() - t0
    extra = f"mu drift slopes {' '.join(table)}; uniform drift {max(drifts):.1e}; reuses criterion-3 runs ({shared:.0f}s)"
    ok, failed = _verdict(4, checks, own, 300.0, extra)
    assert ok, failed


# ---------------------------------------------------------------------------


def test_criterion_5_first_order_code_paths():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    n = 50
    r, qp, qq = rng.uniform(-0.8, 0.8, (n, 3)), rng.uniform(-1, 1, n), rng.uniform(0.1, 1.5, n)
    checks = []
    for name in sorted(F.BUILTINS):
        m = F.builtin(name)
        for ordering in (1, 2):
            reg = F.ScalingRegime(0.05, ordering)
            gs = G.GyroState(r, qp, qq, np.zeros(n), np.full(n, 0.3))
            plain = qq**2 / (2.0 * F.absB0(m, reg, r))
            mu1 = G.mu_hat_from_qperp(m, reg, 1, gs)
            dH = G.delta_H(m, reg, 1, G.gyro_to_hat(m, reg, 1, gs), partials=True)
            checks.append((np.array_equal(mu1, plain), f"{name} o{ordering} N1 mu_hat not bitwise"))
            checks.append((np.all(dH.value == 0) and np.all(dH.grad_r == 0), f"{name} o{ordering} N1 dH nonzero"))
            if ordering == 2 and not np.any(m.B1(r, 0.3)):
                mu2 = G.mu_hat_from_qperp(m, reg, 2, gs)
                checks.append((np.array_equal(mu2, plain), f"{name} o2 N2 mu_hat not bitwise"))
    ok, failed = _verdict(5, checks, time.perf_counter() - t0, 1.0)
    assert ok, failed


def test_criterion_6_gauge_invariance():
    t0 = time.perf_counter()
    checks, devs = [], []
    model = F.builtin("timewave")
    reg = F.ScalingRegime(0.05, 2)
    hs0 = G.HatGyroState.make([0.1, 0.2, 0.0], 0.5, 0.5, 0.0, 0.0)
    for g in ("x1t", "sincos"):
        rep = V.gauge_check(model, g, reg, 2, hs0, 0.1)
        devs.append(max(rep.gy_deviation, rep.fd_backend_gy_deviation))
        checks.append((rep.generators_bitwise_equal, f"{g}: generators differ"))
        checks.append((rep.gy_deviation <= 1e-10, f"{g}: trajectory deviation {rep.gy_deviation:.1e}"))
        checks.append(
            (rep.fd_backend_gy_deviation <= 1e-10, f"{g}: potential-derived trajectory deviation {rep.fd_backend_gy_deviation:.1e}")
        )
    extra = f"max trajectory deviation {max(devs):.1e} (including fields rebuilt from shifted potentials)"
    ok, failed = _verdict(6, checks, time.perf_counter() - t0, 60.0, extra)
    assert ok, failed


def test_criterion_7_distribution_error():
    t0 = time.perf_counter()
    checks, table = [], []
    q = V.query_points(50, seed=0)
    m = F.builtin("gradb")
    for ordering, N in COMBOS:
        pairs = []
        for e in LADDER:
            pairs.append((e, V.distribution_error(m, F.ScalingRegime(e, ordering), N, query_set=q, t1=1.0).max_error))
        s = V.convergence_fit(pairs).fitted_slope
        checks.append((s >= N - 0.3, f"o{ordering} N{N} slope {s:.2f}"))
        table.append(f"o{ordering}/N{N}={s:.2f}")
        reg = F.ScalingRegime(0.05, ordering)
        d0 = V.distribution_error(m, reg, N, query_set=q, t1=0.0).max_error
        expect = 0.05**N * np.max(np.abs(V.default_f0_tilde(q)))
        checks.append((abs(d0 - expect) <= 1e-12, f"o{ordering} N{N} t0 discrepancy off by {abs(d0 - expect):.1e}"))
    ok, failed = _verdict(7, checks, time.perf_counter() - t0, 600.0, "slopes " + " ".join(table))
    assert ok, failed


def test_criterion_8_gronwall_consistency():
    t0 = time.perf_counter()
    checks, ratios = [], []
    for ordering in (1, 2):
        gb, run = V.gronwall_bound(F.builtin("gradb"), F.ScalingRegime(0.05, ordering), 1, HS0, 1.0, n_probe=100)
        bound = gb(run.t)
        ratio = float(np.max(run.error[1:] / bound[1:]))
        ratios.append(ratio)
        checks.append((np.all(run.error <= 1.5 * bound), f"o{ordering} error/bound {ratio:.2f}"))
    extra = "max error/bound " + ", ".join(f"o{o}={r:.2f}" for o, r in zip((1, 2), ratios))
    ok, failed = _verdict(8, checks, time.perf_counter() - t0, 120.0, extra)
    assert ok, failed


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    gyro = {"gyro": {"r": [0.1, 0.2, 0.0], "q_par": 0.5, "mu_hat": 0.5, "alpha": 0.0}}
    configs = {
        "compare": {
            "experiment": "compare", "field": {"name": "screwpinch"}, "regime": {"ordering": 1, "eps": 0.05},
            "N": 2, "initial": gyro, "t_span": [0, 0.2],
        },
        "distribution": {
            "experiment": "distribution", "field": {"name": "gradb"}, "regime": {"ordering": 2, "eps_ladder": [0.1, 0.05]},
            "N": 1, "t_span": [0, 0.1], "queries": 10, "seed": 3,
        },
        "full": {
            "experiment": "full", "field": {"name": "timewave"}, "regime": {"ordering": 2, "eps": 0.05},
            "initial": {"particle": {"x": [0, 0, 0], "v": [0.4, 0.1, 0.3]}}, "t_span": [0, 0.2],
        },
    }
    checks = []
    for name, cfg in configs.items():
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(cfg))
        outs = []
        for k, threads in enumerate((1, 2)):
            out = tmp_path / f"{name}_{k}"
            cli.main(["run", "--config", str(p), "--out", str(out), "--threads", str(threads)])
            outs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
        same = outs[0] == outs[1] and len(outs[0]) > 1
        checks.append((same, f"{name} artifacts differ"))
    ok, failed = _verdict(9, checks, time.perf_counter() - t0, 300.0, "CLI artifacts byte-identical across reruns and thread counts")
    assert ok, failed
