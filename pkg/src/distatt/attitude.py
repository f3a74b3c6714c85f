"""
Distributed attitude observers on SO(3) over tree graphs.

Two correcting terms drive the common observer ``dRhat_i = Rhat_i [w_i - k_R Rhat_i^T sigma_i]x``:

* the continuous one, the gradient of ``V_T = sum_k tr(A (I - Rbar_k))``,
  which is almost globally convergent;
* the hybrid one, built on ``U(Rbar, xi) = tr(A (I - Rbar Ra(xi, u))) + gamma xi^2 / 2``
  with one scalar ``xi_k`` per edge that is reset whenever a lower potential
  value in the finite set ``xi_set`` is available by at least ``delta``.

Edge quantities are stored per edge as arrays of shape (M, 3, 3) / (M,).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EigenvalueOrderViolation, EmptyXiSet, NotInJumpSet, NotUnit
from .so3 import I3, angle_axis, angle_axis_many, hat, psi, reorthonormalize
from .topology import block_h_bar, laplacian

BOUNDARY_RTOL = 1e-3


def _eig_sorted(A):
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    # largest-magnitude component of each eigenvector made positive
    for i in range(3):
        c = V[:, i]
        if c[np.argmax(np.abs(c))] < 0:
            V[:, i] = -c
    return lam, V


def _check_spd(A):
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3) or not np.all(np.isfinite(A)):
        raise EigenvalueOrderViolation("A must be a finite 3x3 matrix")
    if np.max(np.abs(A - A.T)) > 1e-9 * max(1.0, np.max(np.abs(A))):
        raise EigenvalueOrderViolation("A must be symmetric")
    lam = np.linalg.eigvalsh(A)
    if lam[0] <= 0:
        raise EigenvalueOrderViolation(f"A must be positive definite (eigenvalues {lam})")
    return A


@dataclass(frozen=True)
class ObserverParams:
    """
    Hybrid observer parameters ``{xi_set, A, u, gamma, delta}`` plus gains.

    Construction validates shapes, symmetry/positivity of `A`, the unit norm of
    `u` and the range of every element of `xi_set`. The inequality constraints
    tying ``gamma`` and ``delta`` to ``A`` are reported by :func:`check_params`.
    """

    xi_set: tuple
    A: np.ndarray
    u: np.ndarray
    gamma: float
    delta: float
    k_R: float = 1.0
    k_xi: float = 1.0
    k_p: float = 1.0

    def __post_init__(self):
        xs = tuple(float(x) for x in np.atleast_1d(self.xi_set))
        if not xs:
            raise EmptyXiSet("xi_set must contain at least one value")
        for x in xs:
            if not (0.0 < abs(x) <= np.pi):
                raise ValueError(f"xi_set element {x} must satisfy 0 < |xi| <= pi")
        object.__setattr__(self, "xi_set", xs)
        object.__setattr__(self, "A", _check_spd(self.A))
        u = np.asarray(self.u, dtype=float)
        if u.shape != (3,) or abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise NotUnit(f"u = {u.tolist()} must be a unit 3-vector")
        object.__setattr__(self, "u", u)
        for name in ("gamma", "delta", "k_R", "k_xi", "k_p"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def xi_max(self):
        return max(abs(x) for x in self.xi_set)

    def to_dict(self):
        return {
            "xi_set": list(self.xi_set),
            "A": self.A.tolist(),
            "u": self.u.tolist(),
            "gamma": self.gamma,
            "delta": self.delta,
            "k_R": self.k_R,
            "k_xi": self.k_xi,
            "k_p": self.k_p,
        }


@dataclass
class HybridEdgeState:
    """Per-edge relative attitude errors and hybrid variables.

    ``owners[k]`` is the agent (head of edge k) that integrates ``xi[k]``.
    """

    r_bar: np.ndarray
    xi: np.ndarray
    owners: tuple = field(default=())

    def __post_init__(self):
        self.r_bar = np.asarray(self.r_bar, dtype=float).reshape(-1, 3, 3)
        self.xi = np.asarray(self.xi, dtype=float).reshape(-1)
        if len(self.xi) != len(self.r_bar):
            raise ValueError("r_bar and xi must have one entry per edge")

    @classmethod
    def for_topology(cls, t, r_bar, xi):
        return cls(r_bar, xi, tuple(h for h, _ in t.edges))


# -- measurements and relative errors -----------------------------------------


def relative_measurements(t, attitudes):
    """``R_ij = R_i^T R_j`` for each edge (i head, j tail)."""
    R = np.asarray(attitudes, dtype=float)
    return np.swapaxes(R[t.heads], -1, -2) @ R[t.tails]


def relative_error_from_measurements(t, meas, est):
    """``Rbar_k = Rhat_j R_ij^T Rhat_i^T``, re-orthonormalized."""
    meas = np.asarray(meas, dtype=float)
    est = np.asarray(est, dtype=float)
    out = np.empty((t.n_edges, 3, 3))
    for k in range(t.n_edges):
        i, j = t.heads[k], t.tails[k]
        out[k] = reorthonormalize(est[j] @ meas[k].T @ est[i].T)
    return out


def relative_error_from_truth(t, truth, est):
    """``Rbar_k = Rtilde_j^T Rtilde_i`` with ``Rtilde = R Rhat^T``."""
    truth = np.asarray(truth, dtype=float)
    est = np.asarray(est, dtype=float)
    Rt = truth @ np.swapaxes(est, -1, -2)
    return np.swapaxes(Rt[t.tails], -1, -2) @ Rt[t.heads]


# -- continuous scheme ---------------------------------------------------------


def sigma_continuous(t, meas, est, A):
    """Per-agent correcting terms ``sigma_i = -sum_j psi(A Rhat_j R_ij^T Rhat_i^T)``.

    Each agent only reads its own estimate, its neighbours' estimates and the
    relative measurements along its incident edges.
    """
    meas = np.asarray(meas, dtype=float)
    est = np.asarray(est, dtype=float)
    A = np.asarray(A, dtype=float)
    sigma = np.zeros((t.n_agents, 3))
    for k in range(t.n_edges):
        i, j = t.heads[k], t.tails[k]
        R_ij = meas[k]
        R_ji = R_ij.T
        sigma[i] -= psi(A @ est[j] @ R_ij.T @ est[i].T)
        sigma[j] -= psi(A @ est[i] @ R_ji.T @ est[j].T)
    return sigma


def continuous_potential(r_bar, A):
    """``V_T = sum_k tr(A (I - Rbar_k))``."""
    r_bar = np.asarray(r_bar, dtype=float).reshape(-1, 3, 3)
    return float(np.sum(np.einsum("ij,kji->k", A, I3 - r_bar)))


def stacked_psi(r_bar, A):
    """``Psi = [psi(A Rbar_1); ...; psi(A Rbar_M)]`` as a flat 3M vector."""
    return psi(np.asarray(A) @ np.asarray(r_bar)).reshape(-1)


# -- hybrid potential and its gradients ------------------------------------------


def _ra(xi, u):
    return angle_axis_many(xi, u)


def potential_u(r_bar_k, xi_k, p):
    """
    ``tr(A (I - Rbar Ra(xi, u))) + gamma xi^2 / 2``.

    Broadcasts over stacks ``r_bar_k`` of shape (..., 3, 3) and ``xi_k`` of shape (...).
    """
    R = np.asarray(r_bar_k, dtype=float)
    xi = np.asarray(xi_k, dtype=float)
    M = R @ _ra(xi, p.u)
    tr = np.einsum("ij,...ji->...", p.A, I3 - M)
    val = tr + 0.5 * p.gamma * xi * xi
    return float(val) if np.ndim(val) == 0 else val


def total_potential(state, p):
    """``U_T``: the sum of :func:`potential_u` over all edges."""
    return float(np.sum(potential_u(state.r_bar, state.xi, p)))


def grad_r(r_bar_k, xi_k, p):
    """Vectorized rotational gradient ``Ra(xi, u) psi(A Rbar Ra(xi, u))``."""
    R = np.asarray(r_bar_k, dtype=float)
    Ra = _ra(np.asarray(xi_k, dtype=float), p.u)
    return np.einsum("...ij,...j->...i", Ra, psi(p.A @ R @ Ra))


def grad_xi(r_bar_k, xi_k, p):
    """``gamma xi + 2 u^T psi(A Rbar Ra(xi, u))``."""
    R = np.asarray(r_bar_k, dtype=float)
    xi = np.asarray(xi_k, dtype=float)
    Ra = _ra(xi, p.u)
    val = p.gamma * xi + 2.0 * (psi(p.A @ R @ Ra) @ p.u)
    return float(val) if np.ndim(val) == 0 else val


def _potential_table(r_bar, p):
    """U(Rbar_k, xi) for every edge k and every xi in xi_set, shape (M, len(xi_set))."""
    R = np.asarray(r_bar, dtype=float).reshape(-1, 3, 3)
    xs = np.asarray(p.xi_set)
    return potential_u(R[:, None], np.broadcast_to(xs, (len(R), len(xs))), p)


def xi_star(r_bar_k, p):
    """Element of ``xi_set`` minimizing ``U(Rbar_k, .)``; ties go to the first listed."""
    table = _potential_table(r_bar_k, p)[0]
    return p.xi_set[int(np.argmin(table))]


def jump_gaps(state, p):
    """``U(Rbar_k, xi_k) - min_{xi in xi_set} U(Rbar_k, xi)`` per edge."""
    table = _potential_table(state.r_bar, p)
    return potential_u(state.r_bar, state.xi, p) - np.min(table, axis=1)


def in_jump_set(state, p):
    """
    Per-edge jump flags and their union.

    Returns
    -------
    flags : ndarray of bool, shape (M,)
        Edge k is flagged when its gap is at least ``delta``.
    aggregate : bool
        True if any edge is flagged, i.e. the network state lies in the jump set.
    """
    flags = np.atleast_1d(jump_gaps(state, p) >= p.delta)
    return flags, bool(np.any(flags))


def in_flow_set(state, p):
    """True when every edge gap is at most ``delta`` (closed flow set)."""
    return bool(np.all(jump_gaps(state, p) <= p.delta))


def apply_jump(state, p):
    """
    Reset ``xi_k`` to :func:`xi_star` on every edge in the jump set.

    The relative attitudes are unchanged. All flagged edges jump together as a
    single network-level event.
    """
    flags, any_jump = in_jump_set(state, p)
    if not any_jump:
        raise NotInJumpSet("state lies in the flow set; no edge can jump")
    table = _potential_table(state.r_bar, p)
    best = np.asarray(p.xi_set)[np.argmin(table, axis=1)]
    xi = np.where(flags, best, state.xi)
    return HybridEdgeState(state.r_bar.copy(), xi, state.owners)


def sigma_hybrid(t, state, p):
    """
    Per-agent hybrid correcting terms.

    ``sigma_i = sum_{l: i tail} Rbar_l g_l - sum_{n: i head} g_n`` with ``g = grad_r``.
    """
    g = np.atleast_2d(grad_r(state.r_bar, state.xi, p))
    sigma = np.zeros((t.n_agents, 3))
    for k in range(t.n_edges):
        sigma[t.heads[k]] -= g[k]
        sigma[t.tails[k]] += state.r_bar[k] @ g[k]
    return sigma


def xi_flow(state, p):
    return -p.k_xi * np.atleast_1d(grad_xi(state.r_bar, state.xi, p))


def observer_body_rate(est, omega_body, sigma, k_R):
    """Body angular velocity ``w_i - k_R Rhat_i^T sigma_i`` of each estimate."""
    est = np.asarray(est, dtype=float)
    return np.asarray(omega_body, dtype=float) - k_R * np.einsum("nji,nj->ni", est, sigma)


def observer_flow(t, est, omega_body, sigma, k_R):
    """Time derivatives ``Rhat_i [w_i - k_R Rhat_i^T sigma_i]x``, shape (N, 3, 3)."""
    est = np.asarray(est, dtype=float)
    return est @ hat(observer_body_rate(est, omega_body, sigma, k_R))


# -- linearizations ----------------------------------------------------------------


def consensus_linearization(t, A, k_R):
    """``-(k_R / 2) (L kron (tr(A) I - A))`` near the desired equilibrium."""
    A = np.asarray(A, dtype=float)
    Abar = np.trace(A) * I3 - A
    return -0.5 * k_R * np.kron(laplacian(t), Abar)


def instability_certificate(A, v):
    """``-(tr(A Ra(pi, v)) I - (A Ra(pi, v))^T)`` for an eigenvector `v` of `A`."""
    AR = np.asarray(A, dtype=float) @ angle_axis(np.pi, v)
    return -(np.trace(AR) * I3 - AR.T)


# -- parameter synthesis ---------------------------------------------------------------


@dataclass(frozen=True)
class Synthesis:
    case: str
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    alpha_sq: np.ndarray
    delta_star: float

    @property
    def u(self):
        return self.eigenvectors @ np.sqrt(self.alpha_sq)

    @property
    def gamma_bound(self):
        return 4.0 * self.delta_star / np.pi**2


def design_direction(A):
    """
    Eigen-analysis of `A` selecting the case that fixes ``u`` and ``Delta*``.

    Eigenvalues are sorted ascending. The boundary between cases "b" and "c"
    is compared with a relative tolerance of 1e-3 and assigned to "b".
    """
    A = _check_spd(A)
    lam, V = _eig_sorted(A)
    l1, l2, l3 = lam
    scale = l3
    if not l2 < l3 - 1e-12 * scale:
        raise EigenvalueOrderViolation(
            f"need lambda_1 <= lambda_2 < lambda_3, got {lam.tolist()}"
        )
    if abs(l1 - l2) <= 1e-12 * scale:
        a3 = 1.0 - l2 / l3
        alpha_sq = np.array([0.0, 1.0 - a3, a3])
        return Synthesis("a", lam, V, alpha_sq, l1 * (1.0 - l2 / l3))
    boundary = l1 * l3 / (l3 - l1)
    if l2 >= boundary * (1.0 - BOUNDARY_RTOL):
        alpha_sq = np.array([0.0, l2 / (l2 + l3), l3 / (l2 + l3)])
        return Synthesis("b", lam, V, alpha_sq, l1)
    pairs = l1 * l2 + l1 * l3 + l2 * l3
    others = np.array([l2 * l3, l1 * l3, l1 * l2])
    alpha_sq = 1.0 - 2.0 * others / pairs
    return Synthesis("c", lam, V, alpha_sq, 2.0 * l1 * l2 * l3 / pairs)


def synthesize_params(A, xi_set, gamma_fraction=0.95, delta_fraction=0.9, k_R=1.0, k_xi=1.0, k_p=1.0):
    """
    Build :class:`ObserverParams` satisfying the gap condition for `A` and `xi_set`.

    ``gamma = gamma_fraction * 4 Delta* / pi^2`` and
    ``delta = delta_fraction * (4 Delta* / pi^2 - gamma) xi_M^2 / 2``.
    """
    xs = tuple(float(x) for x in np.atleast_1d(xi_set)) if xi_set is not None else ()
    if not xs:
        raise EmptyXiSet("xi_set must contain at least one value")
    for name, frac in (("gamma_fraction", gamma_fraction), ("delta_fraction", delta_fraction)):
        if not 0.0 < frac < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {frac}")
    syn = design_direction(A)
    gamma = gamma_fraction * syn.gamma_bound
    xi_m = max(abs(x) for x in xs)
    delta = delta_fraction * (syn.gamma_bound - gamma) * xi_m**2 / 2.0
    return ObserverParams(xs, np.asarray(A, dtype=float), syn.u, gamma, delta, k_R, k_xi, k_p)


@dataclass
class ParamReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def ok(self):
        return all(passed for _, passed, _ in self.checks)

    @property
    def violations(self):
        return [c for c in self.checks if not c[1]]

    def __str__(self):
        lines = []
        for name, passed, detail in self.checks:
            lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
        lines.append("overall: " + ("PASS" if self.ok else "FAIL"))
        return "\n".join(lines)


def check_params(p, scheme="hybrid", u_tol=1e-3):
    """
    Re-validate every parameter inequality and probe the gap condition.

    The gap condition is evaluated at each undesired critical point
    ``(Ra(pi, v), 0)`` for the eigenvectors `v` of `A`.
    """
    rep = ParamReport()
    xs = p.xi_set
    rep.add("xi_set nonempty, 0 < |xi| <= pi", len(xs) > 0 and all(0 < abs(x) <= np.pi for x in xs))
    try:
        syn = design_direction(p.A)
    except EigenvalueOrderViolation as exc:
        rep.add("eigenvalue order", False, str(exc))
        return rep
    lam = syn.eigenvalues
    rep.add("eigenvalue order 0 < l1 <= l2 < l3", True, f"eigenvalues {np.round(lam, 6).tolist()}, case {syn.case}")
    if scheme == "continuous":
        distinct = np.min(np.diff(lam)) > 1e-12 * lam[-1]
        rep.add("three distinct eigenvalues", distinct)
    rep.add("u is unit", abs(np.linalg.norm(p.u) - 1.0) <= 1e-9)
    comp = (syn.eigenvectors.T @ p.u) ** 2
    rep.add(
        "u composition matches design",
        np.max(np.abs(comp - syn.alpha_sq)) <= u_tol,
        f"(v_i.u)^2 = {np.round(comp, 5).tolist()}, design {np.round(syn.alpha_sq, 5).tolist()}",
    )
    bound = syn.gamma_bound
    rep.add("gamma > 0", p.gamma > 0, f"gamma = {p.gamma}")
    rep.add("gamma < 4 Delta*/pi^2", p.gamma < bound, f"Delta* = {syn.delta_star:.6g}, bound = {bound:.6g}")
    d_bound = (bound - p.gamma) * p.xi_max**2 / 2.0
    rep.add("delta > 0", p.delta > 0, f"delta = {p.delta}")
    rep.add("delta < (4 Delta*/pi^2 - gamma) xi_M^2 / 2", p.delta < d_bound, f"bound = {d_bound:.6g}")
    rep.add("gains positive", min(p.k_R, p.k_xi, p.k_p) > 0)
    worst = np.inf
    for i in range(3):
        Rc = angle_axis(np.pi, syn.eigenvectors[:, i])
        gap = potential_u(Rc, 0.0, p) - np.min(_potential_table(Rc, p)[0])
        worst = min(worst, gap)
    rep.add("gap at undesired critical points exceeds delta", worst > p.delta, f"min gap = {worst:.6g}")
    return rep


# -- finite-difference audit -------------------------------------------------------


@dataclass
class GradientAudit:
    samples: int
    max_rel_error_r: float
    max_rel_error_xi: float

    @property
    def max_rel_error(self):
        return max(self.max_rel_error_r, self.max_rel_error_xi)

    def __str__(self):
        return (
            f"gradient audit over {self.samples} samples: max relative error "
            f"{self.max_rel_error:.3e} (rotation {self.max_rel_error_r:.3e}, xi {self.max_rel_error_xi:.3e})"
        )


def _rel_err(a, b):
    # unit floor keeps near-critical samples from dividing by ~0
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def gradient_audit(p, samples, rng, step=1e-5):
    """
    Compare :func:`grad_r` and :func:`grad_xi` with central differences of
    :func:`potential_u` at random ``(Rbar, xi)``.

    The rotational gradient is checked along right perturbations
    ``Rbar exp([eps e_m]x)``: with the metric ``<R X, R Y> = tr(X^T Y)``,
    ``dU/d eps_m = 2 grad_r[m]``. Relative errors use ``max(1, |analytic|)``
    as denominator.
    """
    from .so3 import exp_so3, random_rotation

    worst_r = worst_x = 0.0
    for _ in range(samples):
        R = random_rotation(rng)
        xi = rng.uniform(-np.pi, np.pi)
        fd = np.empty(3)
        for m in range(3):
            e = np.zeros(3)
            e[m] = step
            fd[m] = (potential_u(R @ exp_so3(e), xi, p) - potential_u(R @ exp_so3(-e), xi, p)) / (2 * step)
        worst_r = max(worst_r, _rel_err(0.5 * fd, grad_r(R, xi, p)))
        fdx = (potential_u(R, xi + step, p) - potential_u(R, xi - step, p)) / (2 * step)
        worst_x = max(worst_x, _rel_err(np.array([fdx]), np.array([grad_xi(R, xi, p)])))
    return GradientAudit(samples, worst_r, worst_x)
