"""Pure NumPy implementation of the coupled-observer kernel.

Same API and arithmetic as the compiled ``distatt._ckernels`` module; used
when the extension is unavailable or ``DISTATT_KERNELS=python`` is set.
"""

import numpy as np

from .errors import Collision
from .hybrid import LieState, integrate_step
from .so3 import I3, angle_axis_many, psi

COLLISION_EPS = 1e-6


class CoupledKernel:
    def __init__(self, heads, tails, A, u, k_R, k_xi, k_p, gamma, xi_set, mode, with_pos, omega_grid, p_grid, v_grid):
        self.heads = np.asarray(heads, dtype=np.intp)
        self.tails = np.asarray(tails, dtype=np.intp)
        self.M = len(self.heads)
        self.A = np.asarray(A, dtype=float).reshape(3, 3)
        self.u = np.asarray(u, dtype=float).reshape(3)
        self.xi_set = np.asarray(xi_set, dtype=float).reshape(-1)
        self.k_R = float(k_R)
        self.k_xi = float(k_xi)
        self.k_p = float(k_p)
        self.gamma = float(gamma)
        self.mode = int(mode)
        self.with_pos = bool(with_pos)
        self.omega_grid = np.asarray(omega_grid, dtype=float)
        self.p_grid = np.asarray(p_grid, dtype=float)
        self.v_grid = np.asarray(v_grid, dtype=float)
        self.N = self.omega_grid.shape[1]

    def _rbar(self, R, Rh):
        h, t = self.heads, self.tails
        RtR = np.swapaxes(R[t], -1, -2) @ R[h]
        return Rh[t] @ RtR @ np.swapaxes(Rh[h], -1, -2)

    def flow(self, R, Rh, xi, ph, omega, p, v):
        R = np.asarray(R, dtype=float)
        Rh = np.asarray(Rh, dtype=float)
        xi = np.asarray(xi, dtype=float)
        ph = np.asarray(ph, dtype=float)
        omega = np.asarray(omega, dtype=float)
        N, M = self.N, self.M
        h, t = self.heads, self.tails
        rbar = self._rbar(R, Rh)
        if self.mode == 0:
            g = psi(self.A @ rbar)
            xidot = np.zeros(M)
        else:
            ra = angle_axis_many(xi, self.u)
            q = psi(self.A @ rbar @ ra)
            g = np.einsum("kij,kj->ki", ra, q)
            xidot = -self.k_xi * (self.gamma * xi + 2.0 * (q @ self.u))
        sig = np.zeros((N, 3))
        np.add.at(sig, h, -g)
        np.add.at(sig, t, np.einsum("kij,kj->ki", rbar, g))
        wR = omega.copy()
        wRh = omega - self.k_R * np.einsum("nji,nj->ni", Rh, sig)
        if not self.with_pos:
            return wR, wRh, xidot, np.zeros((N, 3))
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        vb = np.einsum("nji,nj->ni", R, v)
        phdot = np.einsum("nij,nj->ni", Rh, vb) - self.k_R * np.cross(sig, ph)
        d = p[t] - p[h]
        nrm = np.linalg.norm(d, axis=-1)
        if np.any(nrm < COLLISION_EPS):
            raise Collision("two neighbouring agents are closer than 1e-6 m")
        d = d / nrm[:, None]
        bi = np.einsum("kji,kj->ki", R[h], d)
        bj = -np.einsum("kji,kj->ki", R[t], d)
        ai = np.einsum("kji,kj->ki", Rh[h], ph[h])
        aj = np.einsum("kji,kj->ki", Rh[t], ph[t])
        rij = np.swapaxes(R[h], -1, -2) @ R[t]
        x1 = ai - bi * np.sum(bi * ai, axis=1, keepdims=True)
        y = aj - bj * np.sum(bj * aj, axis=1, keepdims=True)
        zi = x1 - np.einsum("kij,kj->ki", rij, y)
        zj = y - np.einsum("kji,kj->ki", rij, x1)
        np.add.at(phdot, h, -self.k_p * np.einsum("kij,kj->ki", Rh[h], zi))
        np.add.at(phdot, t, -self.k_p * np.einsum("kij,kj->ki", Rh[t], zj))
        return wR, wRh, xidot, phdot

    def step(self, R, Rh, xi, ph, k, h):
        N, M = self.N, self.M
        if k < 0 or 2 * k + 2 >= self.omega_grid.shape[0]:
            raise IndexError(f"step {k} lies outside the exogenous grid")
        t0 = 0.0

        def f(ts, s):
            row = 2 * k + int(round(2.0 * (ts - t0) / h))
            R_s, Rh_s = s.rotations[:N], s.rotations[N:]
            xi_s, ph_s = s.vectors[:M], s.vectors[M:].reshape(N, 3)
            wR, wRh, xd, pd = self.flow(R_s, Rh_s, xi_s, ph_s, self.omega_grid[row], self.p_grid[row], self.v_grid[row])
            return np.concatenate([wR, wRh]), np.concatenate([xd, pd.reshape(-1)])

        state = LieState(
            np.concatenate([np.asarray(R, dtype=float), np.asarray(Rh, dtype=float)]),
            np.concatenate([np.asarray(xi, dtype=float).reshape(-1), np.asarray(ph, dtype=float).reshape(-1)]),
        )
        out = integrate_step(state, f, t0, h)
        return out.rotations[:N], out.rotations[N:], out.vectors[:M].copy(), out.vectors[M:].reshape(N, 3)

    def edge_potentials(self, R, Rh, xi):
        rbar = self._rbar(np.asarray(R, dtype=float), np.asarray(Rh, dtype=float))
        xi = np.asarray(xi, dtype=float)

        def U(x):
            M_ = rbar @ angle_axis_many(x, self.u)
            return np.einsum("ij,kji->k", self.A, I3 - M_) + 0.5 * self.gamma * x * x

        table = np.stack([U(np.full(self.M, x)) for x in self.xi_set], axis=1)
        arg = np.argmin(table, axis=1).astype(np.intp)
        return U(xi), table[np.arange(self.M), arg], arg

    def diagnostics(self, R, Rh, xi, ph, m, centroid0):
        R = np.asarray(R, dtype=float)
        Rh = np.asarray(Rh, dtype=float)
        xi = np.asarray(xi, dtype=float)
        rbar = self._rbar(R, Rh)
        norms = np.sqrt(np.clip(0.25 * (3.0 - np.trace(rbar, axis1=1, axis2=2)), 0.0, 1.0))
        VT = np.sum(np.einsum("ij,kji->k", self.A, I3 - rbar))
        M_ = rbar @ angle_axis_many(xi, self.u)
        UT = np.sum(np.einsum("ij,kji->k", self.A, I3 - M_) + 0.5 * self.gamma * xi * xi)
        pt = np.einsum("nij,nj->ni", R @ np.swapaxes(Rh, -1, -2), np.asarray(ph, dtype=float)) - self.p_grid[m]
        e = pt - np.asarray(centroid0, dtype=float).reshape(3)
        return np.concatenate([norms, xi, [UT, VT], np.linalg.norm(pt, axis=1), [np.linalg.norm(e)]])
