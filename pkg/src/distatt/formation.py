"""
Bearing-based distributed position estimation.

Each agent integrates ``phat_i`` from its body-frame velocity, its local
bearings and its neighbours' estimates, rotated through the attitude
estimates. The error ``ptilde_i = Rtilde_i phat_i - p_i`` obeys
``d ptilde / dt = -k_p L_B(t) ptilde`` regardless of the attitude observer.
"""

from dataclasses import dataclass

import numpy as np

from .errors import Collision, InsufficientSamples
from .so3 import I3
from .topology import bearing_laplacian, laplacian

COLLISION_EPS = 1e-6


@dataclass
class BearingMeasurements:
    """Body-frame bearings per edge k = (i head, j tail).

    ``b_ij[k]`` is ``b_ij^i`` (seen by the head), ``b_ji[k]`` is ``b_ji^j``.
    """

    b_ij: np.ndarray
    b_ji: np.ndarray


@dataclass
class PositionErrorState:
    ptilde: np.ndarray
    e: np.ndarray

    @property
    def e_norm(self):
        return float(np.linalg.norm(self.e))


@dataclass(frozen=True)
class BPEConfig:
    window: float
    mu: float
    n_windows: int = 50

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("window must be positive")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")


def inertial_bearings(t, positions, eps=COLLISION_EPS):
    """Unit vectors ``(p_j - p_i) / |p_j - p_i|`` per edge (i head, j tail)."""
    p = np.asarray(positions, dtype=float)
    d = p[t.tails] - p[t.heads]
    n = np.linalg.norm(d, axis=-1)
    if np.any(n < eps):
        k = int(np.argmin(n))
        raise Collision(f"agents {t.edges[k]} are {n[k]:.3e} m apart on edge {k + 1}")
    return d / n[..., None]


def bearings_from_truth(t, positions, attitudes, eps=COLLISION_EPS):
    """Body-frame bearing measurements ``b_ij^i = R_i^T b_ij`` for both ends of each edge."""
    R = np.asarray(attitudes, dtype=float)
    b = inertial_bearings(t, positions, eps)
    b_ij = np.einsum("kji,kj->ki", R[t.heads], b)
    b_ji = np.einsum("kji,kj->ki", R[t.tails], -b)
    return BearingMeasurements(b_ij, b_ji)


def _proj(b):
    return I3 - b[..., :, None] * b[..., None, :]


def position_flow(t, p_hat, est, meas, bearings, v_body, sigma, k_p, k_R):
    """
    Right-hand side of the position estimator for every agent.

    ``phat_i' = Rhat_i v_i^i
               - k_p sum_j Rhat_i (P_{b_ij^i} Rhat_i^T phat_i - R_ij P_{b_ji^j} Rhat_j^T phat_j)
               - k_R [sigma_i]x phat_i``
    """
    ph = np.asarray(p_hat, dtype=float)
    Rh = np.asarray(est, dtype=float)
    meas = np.asarray(meas, dtype=float)
    out = np.einsum("nij,nj->ni", Rh, np.asarray(v_body, dtype=float))
    P_ij = _proj(bearings.b_ij)
    P_ji = _proj(bearings.b_ji)
    for k in range(t.n_edges):
        i, j = t.heads[k], t.tails[k]
        R_ij = meas[k]
        R_ji = R_ij.T
        # agent i sees neighbour j, agent j sees neighbour i
        out[i] -= k_p * Rh[i] @ (P_ij[k] @ Rh[i].T @ ph[i] - R_ij @ P_ji[k] @ Rh[j].T @ ph[j])
        out[j] -= k_p * Rh[j] @ (P_ji[k] @ Rh[j].T @ ph[j] - R_ji @ P_ij[k] @ Rh[i].T @ ph[i])
    out -= k_R * np.cross(np.asarray(sigma, dtype=float), ph)
    return out


def position_error(t, p_hat, truth_p, truth_R, est, ptilde0=None):
    """
    ``ptilde_i = Rtilde_i phat_i - p_i`` and its deviation ``e`` from the
    centroid of ``ptilde0`` (the current ``ptilde`` when omitted).
    """
    R = np.asarray(truth_R, dtype=float)
    Rh = np.asarray(est, dtype=float)
    Rt = R @ np.swapaxes(Rh, -1, -2)
    pt = np.einsum("nij,nj->ni", Rt, np.asarray(p_hat, dtype=float)) - np.asarray(truth_p, dtype=float)
    ref = pt if ptilde0 is None else np.asarray(ptilde0, dtype=float).reshape(pt.shape)
    e = pt - ref.mean(axis=0)
    return PositionErrorState(pt.reshape(-1), e.reshape(-1))


def error_flow(t, ptilde, bearings_inertial, k_p):
    """``-k_p L_B ptilde`` for inertial per-edge bearings."""
    return -k_p * bearing_laplacian(t, bearings_inertial) @ np.asarray(ptilde, dtype=float).reshape(-1)


@dataclass
class BPEReport:
    passed: bool
    mu: float
    window: float
    min_eigenvalue: float
    window_starts: np.ndarray
    per_window: np.ndarray
    mu_max: float = None

    def __str__(self):
        s = (
            f"BPE {'PASS' if self.passed else 'FAIL'}: T = {self.window:g} s, mu = {self.mu:g}, "
            f"min eig(int L_B - mu L) = {self.min_eigenvalue:.6g} over {len(self.window_starts)} windows"
        )
        if self.mu_max is not None:
            s += f"\nlargest certified mu = {self.mu_max:.6g}"
        return s


def bearing_laplacians(t, bearings):
    """Stack of bearing Laplacians for bearings of shape (K, M, 3); shape (K, 3N, 3N)."""
    b = np.asarray(bearings, dtype=float)
    P = _proj(b)
    N = t.n_agents
    out = np.zeros((len(b), 3 * N, 3 * N))
    for k in range(t.n_edges):
        i, j = 3 * t.heads[k], 3 * t.tails[k]
        out[:, i : i + 3, i : i + 3] += P[:, k]
        out[:, j : j + 3, j : j + 3] += P[:, k]
        out[:, i : i + 3, j : j + 3] -= P[:, k]
        out[:, j : j + 3, i : i + 3] -= P[:, k]
    return out


def _window_integrals(t, times, bearings, window, n_windows):
    times = np.asarray(times, dtype=float)
    b = np.asarray(bearings, dtype=float)
    if len(times) < 2 or times[-1] - times[0] < window * (1 - 1e-9):
        raise InsufficientSamples(
            f"samples span {times[-1] - times[0] if len(times) else 0:.4g} s, need at least one window of {window:g} s"
        )
    LB = bearing_laplacians(t, b)
    last_start = times[-1] - window
    starts = np.linspace(times[0], last_start, n_windows) if n_windows > 1 else np.array([times[0]])
    ints = []
    for s0 in starts:
        i0 = int(np.searchsorted(times, s0 - 1e-12))
        i1 = int(np.searchsorted(times, s0 + window + 1e-12))
        sel = slice(i0, i1)
        if i1 - i0 < 2:
            raise InsufficientSamples("fewer than two samples inside a window")
        ints.append(np.trapezoid(LB[sel], times[sel], axis=0))
    return starts, np.stack(ints)


def check_bpe(t, times, bearings, cfg, certify=False, tol=1e-9):
    """
    Windowed bearing-persistence test ``int_s^{s+T} L_B >= mu (L kron I3)``.

    Parameters
    ----------
    times : array of shape (K,)
    bearings : array of shape (K, M, 3)
        Inertial unit bearings per sample and edge.
    cfg : BPEConfig
    certify : bool
        Also bisect for the largest passing ``mu`` in ``[0, T]``.
    """
    starts, ints = _window_integrals(t, times, bearings, cfg.window, cfg.n_windows)
    L = np.kron(laplacian(t), I3)

    def min_eig(mu):
        return np.array([np.linalg.eigvalsh(W - mu * L)[0] for W in ints])

    per = min_eig(cfg.mu)
    rep = BPEReport(bool(np.all(per >= -tol)), cfg.mu, cfg.window, float(per.min()), starts, per)
    if certify:
        lo, hi = 0.0, cfg.window
        if np.all(min_eig(hi) >= -tol):
            lo = hi
        else:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if np.all(min_eig(mid) >= -tol):
                    lo = mid
                else:
                    hi = mid
        rep.mu_max = lo
    return rep


def integrate_error_flow(t, times, bearings, ptilde0, k_p):
    """
    Classical RK4 for ``d ptilde / dt = -k_p L_B(t) ptilde``.

    `times` and `bearings` form a half-step grid: step ``k`` spans rows
    ``2k, 2k+1, 2k+2``. Returns ``ptilde`` at every full step, shape (n + 1, 3N).
    """
    times = np.asarray(times, dtype=float)
    b = np.asarray(bearings, dtype=float)
    n = (len(times) - 1) // 2
    x = np.asarray(ptilde0, dtype=float).reshape(-1)
    out = np.empty((n + 1, x.size))
    out[0] = x
    LB = bearing_laplacians(t, b[: 2 * n + 1])
    for k in range(n):
        h = times[2 * k + 2] - times[2 * k]
        L0, L1, L2 = LB[2 * k], LB[2 * k + 1], LB[2 * k + 2]
        k1 = -k_p * L0 @ x
        k2 = -k_p * L1 @ (x + 0.5 * h * k1)
        k3 = -k_p * L1 @ (x + 0.5 * h * k2)
        k4 = -k_p * L2 @ (x + h * k3)
        x = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        out[k + 1] = x
    return out
