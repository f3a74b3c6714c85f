"""
Acceptance suite: one reported line per criterion (see the terminal summary).

Criteria that cannot be met are run as written and marked strict xfail, so an
unexpected pass is reported as an error.
"""

import json
import re
import time

import numpy as np
import pytest

from distatt.attitude import (
    check_params,
    consensus_linearization,
    design_direction,
    instability_certificate,
    relative_measurements,
    sigma_continuous,
    synthesize_params,
)
from distatt.cli import main
from distatt.formation import BPEConfig, check_bpe, inertial_bearings, integrate_error_flow
from distatt.hybrid import LieState, integrate_step, run_hybrid
from distatt.scenario import half_step_times, pyramid_preset
from distatt.so3 import angle_axis, exp_so3, random_rotation
from distatt.system import CoupledState, CoupledSystem, simulate
from distatt.topology import block_h_bar, path_graph, random_tree

PYRAMID = pyramid_preset()
A = np.diag([5.0, 8.57, 12.0])
E3 = np.array([0.0, 0.0, 1.0])


def _read_log(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1)


@pytest.fixture(scope="module")
def replication(tmp_path_factory):
    out = tmp_path_factory.mktemp("replicate")
    t0 = time.perf_counter()
    rc = main(["replicate-paper", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    header, log = _read_log(out / "hybrid" / "log.csv")
    summary = json.loads((out / "hybrid" / "summary.json").read_text())
    return {"rc": rc, "elapsed": elapsed, "header": header, "log": log, "summary": summary, "out": out}


@pytest.fixture(scope="module")
def position_run():
    log, system = simulate(PYRAMID, record_ptilde=True)
    return log, system


def _col(header, log, name):
    return log[:, header.index(name)]


# -- 1 -----------------------------------------------------------------------------


def test_c1_replication(replication, report):
    h, log, s = replication["header"], replication["log"], replication["summary"]
    ev = s["jump_events"]
    single = len(ev) == 1 and ev[0]["t"] == 0.0 and ev[0]["edges"] == [1, 2, 3, 4]
    xi_cols = [h.index(f"xi_{k}") for k in range(1, 5)]
    # row 0 is the initial state, row 1 the state right after the jump at t = 0
    jumped_to = bool(np.all(log[0, xi_cols] == 0.0) and np.allclose(log[1, xi_cols], 0.08 * np.pi, rtol=0, atol=1e-12))
    t = _col(h, log, "t")
    i29 = int(np.argmin(np.abs(t - 29.0)))
    rbar = np.array([_col(h, log, f"rbar_{k}") for k in range(1, 5)])
    final = rbar[:, -1]
    decreasing = bool(np.all(final < rbar[:, i29]))
    fast = replication["elapsed"] < 10.0
    ok = replication["rc"] == 0 and single and jumped_to and np.all(final < 1e-2) and decreasing and fast
    report(
        1,
        ok,
        f"one jump event at t=0 on edges {ev[0]['edges'] if ev else []} (xi 0 -> 0.08pi: {jumped_to}); "
        f"max |Rbar_k(30)|_I = {final.max():.2e} < 1e-2, decreasing over [29, 30]: {decreasing}; "
        f"replicate-paper {replication['elapsed']:.1f} s < 10 s",
    )
    assert ok


# -- 2 -----------------------------------------------------------------------------


def _perturbed_continuous_run(rng):
    sc = PYRAMID.with_observer("continuous").with_sim(dt=5e-3, t_end=60.0)
    system = CoupledSystem(sc, with_positions=False)
    x0 = system.initial_state()
    tangents = rng.normal(size=(5, 3))
    tangents *= 1e-4 / np.linalg.norm(tangents, axis=1, keepdims=True)
    Rh = np.stack([x0.Rh[i] @ exp_so3(tangents[i]) for i in range(5)])
    log = run_hybrid(CoupledState(x0.R, Rh, x0.xi, x0.ph), system, sc.sim)
    last = log.array()[-1]
    return np.array([last[log.columns.index(f"rbar_{k}")] for k in range(1, 5)])


def test_c2_undesired_equilibrium(report):
    t = PYRAMID.topology
    sig = sigma_continuous(t, relative_measurements(t, PYRAMID.R0), PYRAMID.Rhat0, A)
    sig_max = float(np.max(np.linalg.norm(sig, axis=1)))
    rng = np.random.default_rng(2)
    finals = [_perturbed_continuous_run(rng) for _ in range(20)]
    converged = sum(bool(np.all(f < 1e-2)) for f in finals)
    ok = sig_max < 1e-12 and converged >= 19
    report(
        2,
        ok,
        f"max |sigma_i| at Rbar_k = Ra(pi, e3): {sig_max:.1e} < 1e-12; "
        f"{converged}/20 perturbed continuous runs reach all |Rbar_k|_I < 1e-2 by 60 s (need 19)",
    )
    assert ok


# -- 3 -----------------------------------------------------------------------------


def test_c3_lyapunov(replication, report):
    s = replication["summary"]
    drops = [e["UT_before"] - e["UT_after"] for e in s["jump_events"]]
    ok = (
        s["flow_energy_violations"] == 0
        and s["max_flow_increase"] <= 1e-8
        and s["jump_energy_violations"] == 0
        and all(d >= 0.0030 for d in drops)
        and s["jumps"] <= s["jump_bound"]
    )
    report(
        3,
        ok,
        f"max U_T increase per flow step {s['max_flow_increase']:.2e} <= 1e-8; "
        f"jump decreases {[round(d, 4) for d in drops]} >= 0.003; jumps {s['jumps']} <= {s['jump_bound']}",
    )
    assert ok


# -- 4 -----------------------------------------------------------------------------


def test_c4_gradcheck(capsys, report):
    rc = main(["gradcheck", "--samples", "500"])
    out = capsys.readouterr().out
    err = float(re.search(r"max relative error: ([0-9.e+-]+)", out).group(1))
    ok = rc == 0 and err < 1e-6
    report(4, ok, f"gradcheck --samples 500: max relative error {err:.2e} < 1e-6")
    assert ok


# -- 5 -----------------------------------------------------------------------------


def test_c5_synthesis(report):
    syn = design_direction(A)
    p = synthesize_params(A, [0.08 * np.pi])
    u_err = float(np.max(np.abs(p.u - np.array([0.0, 0.6455, 0.7638]))))
    bound = syn.gamma_bound
    preset = PYRAMID.params
    accepts = preset.gamma < bound and preset.delta < (bound - preset.gamma) * preset.xi_max**2 / 2
    rep_preset, rep_syn = check_params(preset), check_params(p)
    ok = (
        abs(syn.delta_star - 5.0) <= 1e-9
        and u_err <= 5e-4
        and abs(bound - 2.0264) <= 1e-4
        and accepts
        and rep_preset.ok
        and rep_syn.ok
    )
    report(
        5,
        ok,
        f"Delta* = {syn.delta_star:.12g}; u = {np.round(p.u, 5).tolist()} (max dev {u_err:.1e}); "
        f"4 Delta*/pi^2 = {bound:.6f}; gamma = 1.9251, delta = 0.0030 accepted: {accepts}; "
        f"check_params: {rep_preset.ok and rep_syn.ok}",
    )
    assert ok


# -- 6 -----------------------------------------------------------------------------


def test_c6_h_bar_rank(report):
    rng = np.random.default_rng(6)
    worst_sv, worst_eig = np.inf, np.inf
    for _ in range(200):
        t = random_tree(int(rng.integers(2, 9)), rng)
        rel = np.stack([random_rotation(rng) for _ in range(t.n_edges)])
        Hb = block_h_bar(t, rel)
        worst_sv = min(worst_sv, np.linalg.svd(Hb, compute_uv=False).min())
        worst_eig = min(worst_eig, np.linalg.eigvalsh(Hb.T @ Hb).min())
    ok = worst_sv > 1e-6 and worst_eig > 1e-12
    report(6, ok, f"200 random trees (N <= 8): min sigma_min(Hbar) = {worst_sv:.3f}, min eig(Hbar^T Hbar) = {worst_eig:.3f}")
    assert ok


# -- 7 -----------------------------------------------------------------------------


def _position_metrics(position_run):
    log, system = position_run
    a = log.array()
    cols = log.columns
    t = a[:, 0]
    e = a[:, cols.index("e_norm")]
    sel = (t >= 15.0) & (t <= 30.0)
    slope = float(np.polyfit(t[sel], np.log(e[sel]), 1)[0])
    pt = a[:, [cols.index(f"ptilde_{i}{c}") for i in range(1, 6) for c in "xyz"]].reshape(len(a), 5, 3)
    drift = float(np.max(np.abs(pt.mean(axis=1) - system.centroid0)))
    times = np.arange(2401) * 0.01
    bearings = np.stack([inertial_bearings(PYRAMID.topology, p) for p in PYRAMID.positions.positions(times)])
    bpe = check_bpe(PYRAMID.topology, times, bearings, BPEConfig(12.0, 0.0), certify=True)
    return {"ratio": e[-1] / e[0], "slope": slope, "drift": drift, "mu": bpe.mu_max}


def test_c7_position_estimator_decay_and_persistence(position_run):
    m = _position_metrics(position_run)
    assert m["mu"] > 0
    assert m["slope"] < -0.05
    assert m["drift"] < 1e-9


@pytest.mark.xfail(
    strict=True,
    reason="slowest mode of the rotating-pyramid error dynamics decays at 0.093/s, "
    "so |e(30)|/|e(0)| is about 0.045; 1e-3 needs roughly 75 s",
)
def test_c7_position_estimator(position_run, report):
    m = _position_metrics(position_run)
    ok = m["mu"] > 0 and m["ratio"] < 1e-3 and m["slope"] < -0.05 and m["drift"] < 1e-9
    report(
        7,
        ok,
        f"BPE over T = 12 s certified mu = {m['mu']:.3f} > 0; |e(30)|/|e(0)| = {m['ratio']:.3e} "
        f"(need < 1e-3, unattainable: slowest decay rate 0.093/s); log|e| slope on [15, 30] = {m['slope']:.4f} < -0.05; "
        f"centroid drift {m['drift']:.1e} < 1e-9",
    )
    assert ok


# -- 8 -----------------------------------------------------------------------------


def test_c8_decoupling(position_run, report):
    log, system = position_run
    a = log.array()
    t = a[:, 0]
    keep = np.append(t[1:] != t[:-1], True)  # last row at each time, after any jump
    cols = [log.columns.index(f"ptilde_{i}{c}") for i in range(1, 6) for c in "xyz"]
    coupled = a[keep][:, cols]
    th = half_step_times(PYRAMID.sim)
    bearings = np.stack([inertial_bearings(PYRAMID.topology, p) for p in PYRAMID.positions.positions(th)])
    ref = integrate_error_flow(PYRAMID.topology, th, bearings, coupled[0], PYRAMID.params.k_p)
    dev = float(np.max(np.abs(coupled - ref)))
    ok = coupled.shape == ref.shape and dev < 1e-6
    report(8, ok, f"coupled ptilde vs standalone -k_p L_B(t) ptilde over 30 s: max deviation {dev:.2e} < 1e-6")
    assert ok


# -- 9 -----------------------------------------------------------------------------


def _constant_rate_error(dt, w, T=1.0):
    n = int(round(T / dt))
    state = LieState(np.eye(3)[None], np.zeros(0))
    for k in range(n):
        state = integrate_step(state, lambda t, s: (w[None], np.zeros(0)), k * dt, dt)
    return float(np.max(np.abs(state.rotations[0] - exp_so3(T * w))))


def _coning_error(dt, T=1.0):
    w1, w2 = np.array([1.0, -2.0, 1.0]), np.array([1.5, 4.0, 5.0])

    def flow(t, s):
        return (exp_so3(-t * w2) @ w1 + w2)[None], np.zeros(0)

    n = int(round(T / dt))
    state = LieState(np.eye(3)[None], np.zeros(0))
    for k in range(n):
        state = integrate_step(state, flow, k * dt, dt)
    return float(np.max(np.abs(state.rotations[0] - exp_so3(T * w1) @ exp_so3(T * w2))))


def test_c9_integrator_order_time_varying():
    ratio = _coning_error(2e-2) / _coning_error(1e-2)
    assert 13.0 <= ratio <= 19.0


@pytest.mark.xfail(
    strict=True,
    reason="the geometric scheme reproduces the exponential exactly for constant rates, "
    "so both errors sit at round-off and no order can be observed",
)
def test_c9_integrator_order(report):
    w = np.array([1.5, 4.0, 5.0])
    e1, e2 = _constant_rate_error(2e-3, w), _constant_rate_error(1e-3, w)
    ratio = e1 / e2 if e2 > 0 else np.inf
    coning = _coning_error(2e-2) / _coning_error(1e-2)
    observable = e1 > 1e-13
    ok = observable and 13.0 <= ratio <= 19.0
    report(
        9,
        ok,
        f"constant omega: errors {e1:.1e} (dt 2e-3), {e2:.1e} (dt 1e-3), exact to round-off so no order is observable; "
        f"time-varying coning motion shows ratio {coning:.2f} (16 +- 3)",
    )
    assert ok


# -- 10 ----------------------------------------------------------------------------


def test_c10_linearization(report):
    ev = np.linalg.eigvals(consensus_linearization(path_graph(5), A, PYRAMID.params.k_R))
    n_zero = int(np.sum(np.abs(ev) < 1e-10))
    n_stable = int(np.sum(ev.real < -1e-6))
    certs = [np.linalg.eigvals(instability_certificate(A, v)).real.max() for v in np.eye(3)]
    ok = n_zero == 3 and n_stable == 12 and all(c > 0 for c in certs)
    report(
        10,
        ok,
        f"{n_zero} eigenvalues with |lambda| < 1e-10, {n_stable} with Re < -1e-6; "
        f"largest certificate eigenvalue at e1, e2, e3: {np.round(certs, 3).tolist()}",
    )
    assert ok


def test_undesired_relative_errors_in_preset():
    rb = PYRAMID.Rhat0[1:] @ np.swapaxes(PYRAMID.Rhat0[:-1], -1, -2)
    for r in rb:
        np.testing.assert_allclose(r, angle_axis(np.pi, E3), atol=1e-15)
