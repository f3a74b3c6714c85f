"""
The closed loop simulated by the CLI: true attitudes, attitude estimates,
per-edge hybrid variables and position estimates, advanced together by the
coupled kernel and driven through :func:`distatt.hybrid.run_hybrid`.
"""

import math

import numpy as np

from .hybrid import HybridSystem, repair_rotations, run_hybrid
from .kernels import CoupledKernel
from .scenario import input_grids

MODES = {"continuous": 0, "hybrid": 1}


class CoupledState(tuple):
    """``(R, Rhat, xi, phat)`` with shapes (N, 3, 3), (N, 3, 3), (M,), (N, 3)."""

    __slots__ = ()

    def __new__(cls, R, Rh, xi, ph):
        return super().__new__(cls, (R, Rh, xi, ph))

    R = property(lambda s: s[0])
    Rh = property(lambda s: s[1])
    xi = property(lambda s: s[2])
    ph = property(lambda s: s[3])


class CoupledSystem(HybridSystem):
    """
    Hybrid system for one scenario.

    The energy audited by the runtime is ``U_T`` for the hybrid observer and
    ``V_T`` for the continuous one (``xi`` stays at zero there, so the two
    coincide).
    """

    def __init__(self, sc, with_positions=True, kernel_cls=None, record_ptilde=False):
        self.sc = sc
        self.record_ptilde = record_ptilde
        self.p = sc.params
        self.mode = MODES[sc.observer]
        self.h = sc.sim.step
        t = sc.topology
        N, M = t.n_agents, t.n_edges
        omega, pos, vel = input_grids(sc)
        cls = kernel_cls or CoupledKernel
        p = self.p
        self.kernel = cls(
            t.heads, t.tails, p.A, p.u, p.k_R, p.k_xi, p.k_p, p.gamma, np.asarray(p.xi_set),
            self.mode, bool(with_positions), omega, pos, vel,
        )
        self.positions_grid = pos
        self.xi_values = np.asarray(p.xi_set)
        self.min_jump_decrease = p.delta if self.mode == 1 else None
        R0, Rh0 = sc.R0, sc.Rhat0
        Rt0 = R0 @ np.swapaxes(Rh0, -1, -2)
        pt0 = np.einsum("nij,nj->ni", Rt0, sc.est_positions) - pos[0]
        self.centroid0 = pt0.mean(axis=0)
        self.columns = (
            ["t", "j"]
            + [f"rbar_{k + 1}" for k in range(M)]
            + [f"xi_{k + 1}" for k in range(M)]
            + ["U_T", "V_T"]
            + [f"ptilde_{i + 1}" for i in range(N)]
            + ["e_norm"]
        )
        if record_ptilde:
            self.columns += [f"ptilde_{i + 1}{c}" for i in range(N) for c in "xyz"]
        self._cache = (None, None)

    def initial_state(self):
        sc = self.sc
        xi = sc.xi0.astype(float).copy() if self.mode == 1 else np.zeros(sc.topology.n_edges)
        return CoupledState(sc.R0, sc.Rhat0, xi, sc.est_positions.astype(float).copy())

    def _potentials(self, x):
        key, val = self._cache
        if key is x:
            return val
        val = self.kernel.edge_potentials(x.R, x.Rh, x.xi)
        self._cache = (x, val)
        return val

    def flow_step(self, x, t, dt, k):
        return CoupledState(*self.kernel.step(x.R, x.Rh, x.xi, x.ph, k, dt))

    def jump_gaps(self, x):
        U, Umin, _ = self._potentials(x)
        return U - Umin

    def jump_edges(self, x):
        if self.mode == 0:
            return ()
        return tuple(np.nonzero(self.jump_gaps(x) >= self.p.delta)[0])

    def jump(self, x, edges):
        _, _, arg = self._potentials(x)
        xi = x.xi.copy()
        idx = np.asarray(edges, dtype=np.intp)
        xi[idx] = self.xi_values[arg[idx]]
        return CoupledState(x.R, x.Rh, xi, x.ph)

    def energy(self, x):
        return float(np.sum(self._potentials(x)[0]))

    def record(self, x, t, j):
        m = int(round(2.0 * t / self.h))
        row = [t, j] + self.kernel.diagnostics(x.R, x.Rh, x.xi, x.ph, m, self.centroid0).tolist()
        if self.record_ptilde:
            Rt = x.R @ np.swapaxes(x.Rh, -1, -2)
            row += (np.einsum("nij,nj->ni", Rt, x.ph) - self.positions_grid[m]).reshape(-1).tolist()
        return row

    def repair(self, x):
        R, d1, n1 = repair_rotations(x.R)
        Rh, d2, n2 = repair_rotations(x.Rh)
        return CoupledState(R, Rh, x.xi, x.ph), max(d1, d2), n1 + n2


def simulate(sc, with_positions=True, kernel_cls=None, record_ptilde=False):
    """Run `sc` to its horizon and return ``(SimLog, CoupledSystem)``."""
    system = CoupledSystem(sc, with_positions, kernel_cls, record_ptilde)
    log = run_hybrid(system.initial_state(), system, sc.sim)
    return log, system


def jump_bound(energy0, delta):
    """``ceil(U_T(0) / delta)``: the largest number of jumps a run can take."""
    return math.ceil(energy0 / delta)
