import os
import subprocess
import sys

import numpy as np
import pytest

from distatt import kernels
from distatt.attitude import (
    HybridEdgeState,
    grad_xi,
    potential_u,
    relative_error_from_truth,
    relative_measurements,
    sigma_continuous,
    sigma_hybrid,
)
from distatt.errors import Collision
from distatt.formation import bearings_from_truth, position_error, position_flow
from distatt.scenario import input_grids, pyramid_preset
from distatt.so3 import dist_identity, random_rotation
from distatt.system import CoupledSystem

PYRAMID = pyramid_preset().with_sim(t_end=0.05)
COMPILED = kernels.compiled_kernel()
needs_compiled = pytest.mark.skipif(COMPILED is None, reason="compiled extension not built")


def _kernel(cls, sc=PYRAMID, mode=1, with_pos=True):
    p = sc.params
    t = sc.topology
    return cls(t.heads, t.tails, p.A, p.u, p.k_R, p.k_xi, p.k_p, p.gamma, np.asarray(p.xi_set), mode, with_pos, *input_grids(sc))


def _random_state(rng, N=5, M=4):
    R = np.stack([random_rotation(rng) for _ in range(N)])
    Rh = np.stack([random_rotation(rng) for _ in range(N)])
    return R, Rh, rng.uniform(-1, 1, M), rng.normal(size=(N, 3))


@pytest.mark.parametrize("mode", [0, 1])
def test_python_flow_matches_reference(rng, mode):
    sc = PYRAMID
    t, p = sc.topology, sc.params
    k = _kernel(kernels.PyCoupledKernel, mode=mode)
    R, Rh, xi, ph = _random_state(rng)
    if mode == 0:
        xi = np.zeros(4)
    omega, pos, vel = input_grids(sc)
    wR, wRh, xidot, phdot = k.flow(R, Rh, xi, ph, omega[3], pos[3], vel[3])
    meas = relative_measurements(t, R)
    if mode == 0:
        sig = sigma_continuous(t, meas, Rh, p.A)
        np.testing.assert_array_equal(xidot, 0.0)
    else:
        rb = relative_error_from_truth(t, R, Rh)
        sig = sigma_hybrid(t, HybridEdgeState(rb, xi), p)
        np.testing.assert_allclose(xidot, -p.k_xi * grad_xi(rb, xi, p), atol=1e-12)
    np.testing.assert_array_equal(wR, omega[3])
    np.testing.assert_allclose(wRh, omega[3] - p.k_R * np.einsum("nji,nj->ni", Rh, sig), atol=1e-12)
    v_body = np.einsum("nji,nj->ni", R, vel[3])
    ref = position_flow(t, ph, Rh, meas, bearings_from_truth(t, pos[3], R), v_body, sig, p.k_p, p.k_R)
    np.testing.assert_allclose(phdot, ref, atol=1e-12)


def test_python_potentials_and_diagnostics(rng):
    sc = PYRAMID
    t, p = sc.topology, sc.params
    k = _kernel(kernels.PyCoupledKernel)
    R, Rh, xi, ph = _random_state(rng)
    rb = relative_error_from_truth(t, R, Rh)
    U, Umin, arg = k.edge_potentials(R, Rh, xi)
    np.testing.assert_allclose(U, potential_u(rb, xi, p), atol=1e-12)
    np.testing.assert_allclose(Umin, potential_u(rb, np.full(4, p.xi_set[0]), p), atol=1e-12)
    np.testing.assert_array_equal(arg, 0)
    c0 = rng.normal(size=3)
    d = k.diagnostics(R, Rh, xi, ph, 2, c0)
    np.testing.assert_allclose(d[:4], [dist_identity(r) for r in rb], atol=1e-9)
    np.testing.assert_allclose(d[4:8], xi)
    assert d[8] == pytest.approx(np.sum(U))
    pos = input_grids(sc)[1][2]
    st = position_error(t, ph, pos, R, Rh)
    np.testing.assert_allclose(d[10:15], np.linalg.norm(st.ptilde.reshape(5, 3), axis=1), atol=1e-12)
    assert d[15] == pytest.approx(np.linalg.norm(st.ptilde.reshape(5, 3) - c0))


@pytest.mark.parametrize("cls", [kernels.PyCoupledKernel] + ([COMPILED] if COMPILED else []))
def test_step_rejects_rows_outside_grid(cls, rng):
    k = _kernel(cls)
    R, Rh, xi, ph = _random_state(rng)
    n = PYRAMID.sim.n_steps
    k.step(R, Rh, xi, ph, n - 1, PYRAMID.sim.step)
    for bad in (-1, n):
        with pytest.raises(IndexError):
            k.step(R, Rh, xi, ph, bad, PYRAMID.sim.step)


@needs_compiled
@pytest.mark.parametrize("mode", [0, 1])
@pytest.mark.parametrize("with_pos", [False, True])
def test_backends_agree(rng, mode, with_pos):
    py, cy = _kernel(kernels.PyCoupledKernel, mode=mode, with_pos=with_pos), _kernel(COMPILED, mode=mode, with_pos=with_pos)
    for _ in range(5):
        R, Rh, xi, ph = _random_state(rng)
        omega, pos, vel = input_grids(PYRAMID)
        a = py.flow(R, Rh, xi, ph, omega[7], pos[7], vel[7])
        b = cy.flow(R, Rh, xi, ph, omega[7], pos[7], vel[7])
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, atol=1e-12)
        for x, y in zip(py.step(R, Rh, xi, ph, 3, 1e-3), cy.step(R, Rh, xi, ph, 3, 1e-3)):
            np.testing.assert_allclose(x, y, atol=1e-12)
        for x, y in zip(py.edge_potentials(R, Rh, xi), cy.edge_potentials(R, Rh, xi)):
            np.testing.assert_allclose(x, y, atol=1e-12)
        c0 = rng.normal(size=3)
        np.testing.assert_allclose(py.diagnostics(R, Rh, xi, ph, 4, c0), cy.diagnostics(R, Rh, xi, ph, 4, c0), atol=1e-12)


@needs_compiled
def test_backends_agree_over_a_run():
    from distatt.system import simulate

    sc = pyramid_preset().with_sim(t_end=0.5)
    a, _ = simulate(sc, kernel_cls=kernels.PyCoupledKernel)
    b, _ = simulate(sc, kernel_cls=COMPILED)
    assert a.n_jumps == b.n_jumps == 1
    np.testing.assert_allclose(a.array(), b.array(), atol=1e-10)


def test_collision_is_raised(rng):
    sc = PYRAMID
    k = _kernel(kernels.PyCoupledKernel)
    R, Rh, xi, ph = _random_state(rng)
    pos = input_grids(sc)[1][0].copy()
    pos[1] = pos[0]
    with pytest.raises(Collision):
        k.flow(R, Rh, xi, ph, input_grids(sc)[0][0], pos, input_grids(sc)[2][0])
    if COMPILED is not None:
        with pytest.raises(Collision):
            _kernel(COMPILED).flow(R, Rh, xi, ph, input_grids(sc)[0][0], pos, input_grids(sc)[2][0])


def test_system_uses_selected_backend():
    sys_ = CoupledSystem(PYRAMID)
    assert isinstance(sys_.kernel, kernels.CoupledKernel)
    forced = os.environ.get("DISTATT_KERNELS", "").strip().lower() == "python"
    assert kernels.BACKEND == ("python" if forced or COMPILED is None else "cython")


def _backend_in_subprocess(value):
    env = dict(os.environ, DISTATT_KERNELS=value)
    out = subprocess.run(
        [sys.executable, "-c", "import distatt.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


def test_environment_forces_python_backend():
    assert _backend_in_subprocess("python") == "python"


@needs_compiled
def test_environment_requests_compiled_backend():
    assert _backend_in_subprocess("cython") == "cython"
