# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled coupled-observer kernel. Mirrors ``distatt._pykernels`` exactly."""

import numpy as np

from libc.math cimport cos, sin, sqrt

from .errors import Collision

cdef double SMALL_ANGLE = 1e-8
cdef double COLLISION_EPS = 1e-6


cdef inline void mm(const double* a, const double* b, double* o) noexcept nogil:
    cdef int r, c
    for r in range(3):
        for c in range(3):
            o[3 * r + c] = a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c]


cdef inline void mtm(const double* a, const double* b, double* o) noexcept nogil:
    # a^T b
    cdef int r, c
    for r in range(3):
        for c in range(3):
            o[3 * r + c] = a[r] * b[c] + a[3 + r] * b[3 + c] + a[6 + r] * b[6 + c]


cdef inline void mmt(const double* a, const double* b, double* o) noexcept nogil:
    # a b^T
    cdef int r, c
    for r in range(3):
        for c in range(3):
            o[3 * r + c] = a[3 * r] * b[3 * c] + a[3 * r + 1] * b[3 * c + 1] + a[3 * r + 2] * b[3 * c + 2]


cdef inline void mv(const double* a, const double* x, double* o) noexcept nogil:
    o[0] = a[0] * x[0] + a[1] * x[1] + a[2] * x[2]
    o[1] = a[3] * x[0] + a[4] * x[1] + a[5] * x[2]
    o[2] = a[6] * x[0] + a[7] * x[1] + a[8] * x[2]


cdef inline void mtv(const double* a, const double* x, double* o) noexcept nogil:
    o[0] = a[0] * x[0] + a[3] * x[1] + a[6] * x[2]
    o[1] = a[1] * x[0] + a[4] * x[1] + a[7] * x[2]
    o[2] = a[2] * x[0] + a[5] * x[1] + a[8] * x[2]


cdef inline void psi9(const double* m, double* o) noexcept nogil:
    o[0] = 0.5 * (m[7] - m[5])
    o[1] = 0.5 * (m[2] - m[6])
    o[2] = 0.5 * (m[3] - m[1])


cdef inline void rodrigues(const double* w, double a, double b, double* o) noexcept nogil:
    # I + a K + b K^2 with K = hat(w)
    cdef double x = w[0], y = w[1], z = w[2]
    cdef double xx = x * x, yy = y * y, zz = z * z
    o[0] = 1.0 - b * (yy + zz)
    o[1] = -a * z + b * x * y
    o[2] = a * y + b * x * z
    o[3] = a * z + b * x * y
    o[4] = 1.0 - b * (xx + zz)
    o[5] = -a * x + b * y * z
    o[6] = -a * y + b * x * z
    o[7] = a * x + b * y * z
    o[8] = 1.0 - b * (xx + yy)


cdef inline void expso3(const double* w, double* o) noexcept nogil:
    cdef double th = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if th < SMALL_ANGLE:
        rodrigues(w, 1.0, 0.5, o)
    else:
        rodrigues(w, sin(th) / th, (1.0 - cos(th)) / (th * th), o)


cdef inline void angle_axis(double th, const double* u, double* o) noexcept nogil:
    rodrigues(u, sin(th), 1.0 - cos(th), o)


cdef inline double trace_a_i_minus(const double* A, const double* X) noexcept nogil:
    # tr(A (I - X))
    cdef double s = A[0] + A[4] + A[8]
    cdef int r, c
    for r in range(3):
        for c in range(3):
            s -= A[3 * r + c] * X[3 * c + r]
    return s


cdef inline void cross(const double* a, const double* b, double* o) noexcept nogil:
    o[0] = a[1] * b[2] - a[2] * b[1]
    o[1] = a[2] * b[0] - a[0] * b[2]
    o[2] = a[0] * b[1] - a[1] * b[0]


cdef class CoupledKernel:
    """
    Flow, RKMK4 step, edge potentials and logging diagnostics for the coupled
    plant + attitude observer + position estimator.

    Exogenous inputs (body angular velocity, inertial position and inertial
    velocity of every agent) are sampled on a half-step grid of shape
    (2 n_steps + 1, N, 3); step ``k`` reads rows ``2k, 2k+1, 2k+2``.
    """

    cdef readonly Py_ssize_t N, M
    cdef readonly int mode, with_pos
    cdef int[::1] heads, tails
    cdef double[::1] A, u, xi_set
    cdef double k_R, k_xi, k_p, gamma
    cdef double[:, :, ::1] omega_grid, p_grid, v_grid
    cdef double[::1] sig, rot_s, vec_s, W1, W2, W3, W4, V1, V2, V3, V4, th

    def __init__(self, heads, tails, A, u, double k_R, double k_xi, double k_p, double gamma,
                 xi_set, int mode, bint with_pos, omega_grid, p_grid, v_grid):
        self.heads = np.ascontiguousarray(heads, dtype=np.intc)
        self.tails = np.ascontiguousarray(tails, dtype=np.intc)
        self.M = self.heads.shape[0]
        self.A = np.ascontiguousarray(A, dtype=float).reshape(9)
        self.u = np.ascontiguousarray(u, dtype=float).reshape(3)
        self.xi_set = np.ascontiguousarray(xi_set, dtype=float).reshape(-1)
        self.k_R = k_R
        self.k_xi = k_xi
        self.k_p = k_p
        self.gamma = gamma
        self.mode = mode
        self.with_pos = with_pos
        self.omega_grid = np.ascontiguousarray(omega_grid, dtype=float)
        self.p_grid = np.ascontiguousarray(p_grid, dtype=float)
        self.v_grid = np.ascontiguousarray(v_grid, dtype=float)
        self.N = self.omega_grid.shape[1]
        cdef Py_ssize_t N = self.N, M = self.M
        self.sig = np.zeros(3 * N)
        self.rot_s = np.zeros(18 * N)
        self.vec_s = np.zeros(M + 3 * N)
        self.th = np.zeros(6 * N)
        self.W1 = np.zeros(6 * N)
        self.W2 = np.zeros(6 * N)
        self.W3 = np.zeros(6 * N)
        self.W4 = np.zeros(6 * N)
        self.V1 = np.zeros(M + 3 * N)
        self.V2 = np.zeros(M + 3 * N)
        self.V3 = np.zeros(M + 3 * N)
        self.V4 = np.zeros(M + 3 * N)

    cdef int _flow(self, const double* rot, const double* vec, const double* om,
                   const double* p, const double* v, double* W, double* V) noexcept nogil:
        cdef Py_ssize_t N = self.N, M = self.M
        cdef const double* R = rot
        cdef const double* Rh = rot + 9 * N
        cdef const double* xi = vec
        cdef const double* ph = vec + M
        cdef double* sig = &self.sig[0]
        cdef const double* A = &self.A[0]
        cdef const double* u = &self.u[0]
        cdef double t1[9]
        cdef double t2[9]
        cdef double rbar[9]
        cdef double ra[9]
        cdef double rij[9]
        cdef double q[3]
        cdef double g[3]
        cdef double t3[3]
        cdef double ai[3]
        cdef double aj[3]
        cdef double bi[3]
        cdef double bj[3]
        cdef double d[3]
        cdef double x1[3]
        cdef double y[3]
        cdef double z[3]
        cdef Py_ssize_t k, n, c
        cdef int i, j
        cdef double nrm, s1, s2
        for n in range(3 * N):
            sig[n] = 0.0
        for k in range(M):
            i = self.heads[k]
            j = self.tails[k]
            mtm(R + 9 * j, R + 9 * i, t1)
            mm(Rh + 9 * j, t1, t2)
            mmt(t2, Rh + 9 * i, rbar)
            if self.mode == 0:
                mm(A, rbar, t1)
                psi9(t1, g)
                V[k] = 0.0
            else:
                angle_axis(xi[k], u, ra)
                mm(A, rbar, t1)
                mm(t1, ra, t2)
                psi9(t2, q)
                mv(ra, q, g)
                V[k] = -self.k_xi * (self.gamma * xi[k] + 2.0 * (u[0] * q[0] + u[1] * q[1] + u[2] * q[2]))
            mv(rbar, g, t3)
            for c in range(3):
                sig[3 * i + c] -= g[c]
                sig[3 * j + c] += t3[c]
        for n in range(N):
            mtv(Rh + 9 * n, sig + 3 * n, t3)
            for c in range(3):
                W[3 * n + c] = om[3 * n + c]
                W[3 * (N + n) + c] = om[3 * n + c] - self.k_R * t3[c]
        if not self.with_pos:
            for n in range(3 * N):
                V[M + n] = 0.0
            return 0
        for n in range(N):
            mtv(R + 9 * n, v + 3 * n, t3)
            mv(Rh + 9 * n, t3, d)
            cross(sig + 3 * n, ph + 3 * n, z)
            for c in range(3):
                V[M + 3 * n + c] = d[c] - self.k_R * z[c]
        for k in range(M):
            i = self.heads[k]
            j = self.tails[k]
            for c in range(3):
                d[c] = p[3 * j + c] - p[3 * i + c]
            nrm = sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
            if nrm < COLLISION_EPS:
                return 1
            for c in range(3):
                d[c] /= nrm
            mtv(R + 9 * i, d, bi)
            mtv(R + 9 * j, d, bj)
            for c in range(3):
                bj[c] = -bj[c]
            mtv(Rh + 9 * i, ph + 3 * i, ai)
            mtv(Rh + 9 * j, ph + 3 * j, aj)
            mtm(R + 9 * i, R + 9 * j, rij)
            # head i: P_bi ai - R_ij P_bj aj
            s1 = bi[0] * ai[0] + bi[1] * ai[1] + bi[2] * ai[2]
            s2 = bj[0] * aj[0] + bj[1] * aj[1] + bj[2] * aj[2]
            for c in range(3):
                x1[c] = ai[c] - bi[c] * s1
                y[c] = aj[c] - bj[c] * s2
            mv(rij, y, t3)
            for c in range(3):
                z[c] = x1[c] - t3[c]
            mv(Rh + 9 * i, z, t3)
            for c in range(3):
                V[M + 3 * i + c] -= self.k_p * t3[c]
            # tail j: P_bj aj - R_ji P_bi ai
            mtv(rij, x1, t3)
            for c in range(3):
                z[c] = y[c] - t3[c]
            mv(Rh + 9 * j, z, t3)
            for c in range(3):
                V[M + 3 * j + c] -= self.k_p * t3[c]
        return 0

    cdef void _stage(self, const double* rot0, const double* vec0, const double* theta,
                     const double* dvec, double* rot, double* vec) noexcept nogil:
        cdef Py_ssize_t n, c
        cdef double e[9]
        for n in range(2 * self.N):
            expso3(theta + 3 * n, e)
            mm(rot0 + 9 * n, e, rot + 9 * n)
        for c in range(self.M + 3 * self.N):
            vec[c] = vec0[c] + dvec[c]

    def flow(self, R, Rh, xi, ph, omega, p, v):
        """Stage derivatives ``(w_R, w_Rhat, xi_dot, phat_dot)`` at the given exogenous sample."""
        cdef Py_ssize_t N = self.N, M = self.M
        cdef double[::1] rot = np.concatenate([np.ravel(R), np.ravel(Rh)]).astype(float)
        cdef double[::1] vec = np.concatenate([np.ravel(xi), np.ravel(ph)]).astype(float)
        cdef double[::1] om = np.ascontiguousarray(omega, dtype=float).reshape(-1)
        cdef double[::1] pp = np.ascontiguousarray(p, dtype=float).reshape(-1)
        cdef double[::1] vv = np.ascontiguousarray(v, dtype=float).reshape(-1)
        W = np.zeros(6 * N)
        V = np.zeros(M + 3 * N)
        cdef double[::1] Wm = W
        cdef double[::1] Vm = V
        if self._flow(&rot[0], &vec[0], &om[0], &pp[0], &vv[0], &Wm[0], &Vm[0]):
            raise Collision("two neighbouring agents are closer than 1e-6 m")
        return W[: 3 * N].reshape(N, 3), W[3 * N :].reshape(N, 3), V[:M].copy(), V[M:].reshape(N, 3)

    def step(self, R, Rh, xi, ph, Py_ssize_t k, double h):
        """One RKMK4 step from grid row ``2k`` over ``h`` seconds; returns new arrays."""
        cdef Py_ssize_t N = self.N, M = self.M, nv = M + 3 * N, c
        if k < 0 or 2 * k + 2 >= self.omega_grid.shape[0]:
            raise IndexError(f"step {k} is outside the exogenous input grid")
        rot0_a = np.concatenate([np.ravel(R), np.ravel(Rh)])
        vec0_a = np.concatenate([np.ravel(xi), np.ravel(ph)])
        cdef double[::1] rot0 = rot0_a
        cdef double[::1] vec0 = vec0_a
        cdef double* rs = &self.rot_s[0]
        cdef double* vs = &self.vec_s[0]
        cdef double* th = &self.th[0]
        cdef double* W1 = &self.W1[0]
        cdef double* W2 = &self.W2[0]
        cdef double* W3 = &self.W3[0]
        cdef double* W4 = &self.W4[0]
        cdef double* V1 = &self.V1[0]
        cdef double* V2 = &self.V2[0]
        cdef double* V3 = &self.V3[0]
        cdef double* V4 = &self.V4[0]
        cdef const double* om0 = &self.omega_grid[2 * k, 0, 0]
        cdef const double* om1 = &self.omega_grid[2 * k + 1, 0, 0]
        cdef const double* om2 = &self.omega_grid[2 * k + 2, 0, 0]
        cdef const double* p0 = &self.p_grid[2 * k, 0, 0]
        cdef const double* p1 = &self.p_grid[2 * k + 1, 0, 0]
        cdef const double* p2 = &self.p_grid[2 * k + 2, 0, 0]
        cdef const double* v0 = &self.v_grid[2 * k, 0, 0]
        cdef const double* v1 = &self.v_grid[2 * k + 1, 0, 0]
        cdef const double* v2 = &self.v_grid[2 * k + 2, 0, 0]
        cdef int err = 0
        cdef double[::1] dvec = np.empty(nv)
        cdef double* dvp = &dvec[0]
        cdef double[::1] out_rot = np.empty(18 * N)
        cdef double[::1] out_vec = np.empty(nv)
        cdef double e[9]
        cdef double kx[3]
        with nogil:
            err |= self._flow(&rot0[0], &vec0[0], om0, p0, v0, W1, V1)
            for c in range(6 * N):
                W1[c] *= h
                th[c] = 0.5 * W1[c]
            for c in range(nv):
                V1[c] *= h
                dvp[c] = 0.5 * V1[c]
            self._stage(&rot0[0], &vec0[0], th, dvp, rs, vs)
            err |= self._flow(rs, vs, om1, p1, v1, W2, V2)
            for c in range(6 * N):
                W2[c] *= h
            for c in range(nv):
                V2[c] *= h
                dvp[c] = 0.5 * V2[c]
            for c in range(2 * N):
                cross(W1 + 3 * c, W2 + 3 * c, kx)
                th[3 * c] = 0.5 * W2[3 * c] + kx[0] / 8.0
                th[3 * c + 1] = 0.5 * W2[3 * c + 1] + kx[1] / 8.0
                th[3 * c + 2] = 0.5 * W2[3 * c + 2] + kx[2] / 8.0
            self._stage(&rot0[0], &vec0[0], th, dvp, rs, vs)
            err |= self._flow(rs, vs, om1, p1, v1, W3, V3)
            for c in range(6 * N):
                W3[c] *= h
            for c in range(nv):
                V3[c] *= h
            self._stage(&rot0[0], &vec0[0], W3, V3, rs, vs)
            err |= self._flow(rs, vs, om2, p2, v2, W4, V4)
            for c in range(6 * N):
                W4[c] *= h
            for c in range(nv):
                V4[c] *= h
                dvp[c] = (V1[c] + 2.0 * V2[c] + 2.0 * V3[c] + V4[c]) / 6.0
            for c in range(2 * N):
                cross(W1 + 3 * c, W4 + 3 * c, kx)
                th[3 * c] = (W1[3 * c] + 2.0 * W2[3 * c] + 2.0 * W3[3 * c] + W4[3 * c]) / 6.0 + kx[0] / 12.0
                th[3 * c + 1] = (W1[3 * c + 1] + 2.0 * W2[3 * c + 1] + 2.0 * W3[3 * c + 1] + W4[3 * c + 1]) / 6.0 + kx[1] / 12.0
                th[3 * c + 2] = (W1[3 * c + 2] + 2.0 * W2[3 * c + 2] + 2.0 * W3[3 * c + 2] + W4[3 * c + 2]) / 6.0 + kx[2] / 12.0
            self._stage(&rot0[0], &vec0[0], th, dvp, &out_rot[0], &out_vec[0])
        if err:
            raise Collision("two neighbouring agents are closer than 1e-6 m")
        ro = np.asarray(out_rot)
        vo = np.asarray(out_vec)
        return ro[: 9 * N].reshape(N, 3, 3), ro[9 * N :].reshape(N, 3, 3), vo[:M].copy(), vo[M:].reshape(N, 3)

    def edge_potentials(self, R, Rh, xi):
        """``(U(Rbar_k, xi_k), min over xi_set of U(Rbar_k, .), argmin index)`` per edge."""
        cdef Py_ssize_t M = self.M, k, s
        cdef double[:, :, ::1] Rm = np.ascontiguousarray(R, dtype=float)
        cdef double[:, :, ::1] Rhm = np.ascontiguousarray(Rh, dtype=float)
        cdef double[::1] xim = np.ascontiguousarray(xi, dtype=float)
        U = np.empty(M)
        Umin = np.empty(M)
        arg = np.empty(M, dtype=np.intp)
        cdef double[::1] Um = U
        cdef double[::1] Umm = Umin
        cdef Py_ssize_t[::1] am = arg
        cdef double t1[9]
        cdef double t2[9]
        cdef double rbar[9]
        cdef double ra[9]
        cdef const double* A = &self.A[0]
        cdef double val, x
        cdef int i, j
        for k in range(M):
            i = self.heads[k]
            j = self.tails[k]
            mtm(&Rm[j, 0, 0], &Rm[i, 0, 0], t1)
            mm(&Rhm[j, 0, 0], t1, t2)
            mmt(t2, &Rhm[i, 0, 0], rbar)
            x = xim[k]
            angle_axis(x, &self.u[0], ra)
            mm(rbar, ra, t1)
            Um[k] = trace_a_i_minus(A, t1) + 0.5 * self.gamma * x * x
            Umm[k] = 0.0
            am[k] = -1
            for s in range(self.xi_set.shape[0]):
                x = self.xi_set[s]
                angle_axis(x, &self.u[0], ra)
                mm(rbar, ra, t1)
                val = trace_a_i_minus(A, t1) + 0.5 * self.gamma * x * x
                if am[k] < 0 or val < Umm[k]:
                    Umm[k] = val
                    am[k] = s
        return U, Umin, arg

    def diagnostics(self, R, Rh, xi, ph, Py_ssize_t m, centroid0):
        """
        Logged quantities at grid row ``m``: ``|Rbar_k|_I`` (M), ``xi`` (M),
        ``U_T``, ``V_T``, ``|ptilde_i|`` (N) and ``|e|``.
        """
        cdef Py_ssize_t N = self.N, M = self.M, k, n, c
        cdef double[:, :, ::1] Rm = np.ascontiguousarray(R, dtype=float)
        cdef double[:, :, ::1] Rhm = np.ascontiguousarray(Rh, dtype=float)
        cdef double[::1] xim = np.ascontiguousarray(xi, dtype=float)
        cdef double[:, ::1] phm = np.ascontiguousarray(ph, dtype=float)
        cdef double[::1] cen = np.ascontiguousarray(centroid0, dtype=float).reshape(3)
        out = np.empty(2 * M + 2 + N + 1)
        cdef double[::1] o = out
        cdef double t1[9]
        cdef double t2[9]
        cdef double rbar[9]
        cdef double ra[9]
        cdef double a[3]
        cdef double pt[3]
        cdef const double* A = &self.A[0]
        cdef double UT = 0.0, VT = 0.0, x, tr, e2 = 0.0, s
        cdef int i, j
        for k in range(M):
            i = self.heads[k]
            j = self.tails[k]
            mtm(&Rm[j, 0, 0], &Rm[i, 0, 0], t1)
            mm(&Rhm[j, 0, 0], t1, t2)
            mmt(t2, &Rhm[i, 0, 0], rbar)
            tr = 0.25 * (3.0 - rbar[0] - rbar[4] - rbar[8])
            if tr < 0.0:
                tr = 0.0
            if tr > 1.0:
                tr = 1.0
            o[k] = sqrt(tr)
            x = xim[k]
            o[M + k] = x
            VT += trace_a_i_minus(A, rbar)
            angle_axis(x, &self.u[0], ra)
            mm(rbar, ra, t1)
            UT += trace_a_i_minus(A, t1) + 0.5 * self.gamma * x * x
        o[2 * M] = UT
        o[2 * M + 1] = VT
        for n in range(N):
            mtv(&Rhm[n, 0, 0], &phm[n, 0], a)
            mv(&Rm[n, 0, 0], a, pt)
            s = 0.0
            for c in range(3):
                pt[c] -= self.p_grid[m, n, c]
                s += pt[c] * pt[c]
                e2 += (pt[c] - cen[c]) * (pt[c] - cen[c])
            o[2 * M + 2 + n] = sqrt(s)
        o[2 * M + 2 + N] = sqrt(e2)
        return out
