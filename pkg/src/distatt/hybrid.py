"""
Hybrid-system runtime: flow on the flow set, jump on the jump set.

States live on ``SO(3)^n x R^m``. Flows are integrated with a fourth-order
Runge-Kutta-Munthe-Kaas scheme: rotational components advance through the
exponential map applied to a combination of stage body rates, vector
components with the classical RK4 tableau evaluated at the same stages.

Jumps are detected at step boundaries and take priority over flowing when the
state is in both sets.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxJumpsExceeded, StepRejected
from .so3 import DRIFT_REPAIR, exp_so3_many, orthonormality_error

REJECT_DRIFT = 1e-6
ENERGY_TOL = 1e-8


@dataclass
class LieState:
    """A point of ``SO(3)^n x R^m``."""

    rotations: np.ndarray
    vectors: np.ndarray

    def copy(self):
        return LieState(self.rotations.copy(), self.vectors.copy())


@dataclass(frozen=True)
class HybridTime:
    t: float
    j: int


@dataclass(frozen=True)
class SimConfig:
    """
    dt : float
        Flow step in seconds. The horizon is split into ``round(t_end / dt)``
        equal steps.
    max_jumps : int or None
        None means ``10 * ceil(E(0) / min_decrease)`` when the system declares a
        guaranteed jump decrease, and 1000 otherwise.
    repair_every : int
        Steps between orthonormality checks (repair above 1e-8).
    log_every : int
        Steps between logged rows; jump rows are always logged.
    """

    dt: float = 1e-3
    t_end: float = 30.0
    max_jumps: int = None
    repair_every: int = 100
    log_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= self.dt:
            raise ValueError("t_end must be at least dt")
        if self.max_jumps is not None and self.max_jumps < 1:
            raise ValueError("max_jumps must be positive")
        if self.repair_every < 1 or self.log_every < 1:
            raise ValueError("repair_every and log_every must be positive")

    @property
    def n_steps(self):
        return max(1, int(round(self.t_end / self.dt)))

    @property
    def step(self):
        return self.t_end / self.n_steps


@dataclass
class JumpEvent:
    t: float
    j: int
    edges: tuple
    energy_before: float
    energy_after: float


@dataclass
class SimLog:
    columns: list
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    energy_flow_violations: list = field(default_factory=list)
    energy_jump_violations: list = field(default_factory=list)
    max_flow_increase: float = -np.inf
    max_drift: float = 0.0
    repairs: int = 0
    final_state: object = None

    def array(self):
        return np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))

    def column(self, name):
        return self.array()[:, self.columns.index(name)]

    @property
    def n_jumps(self):
        return len(self.events)


def _bracket(a, b):
    # [hat a, hat b] = hat(a x b)
    return np.cross(a, b)


def integrate_step(state, flow, t, dt):
    """
    Advance `state` by one geometric RK4 step.

    Parameters
    ----------
    state : LieState
    flow : callable ``flow(t, state) -> (body_rates, vector_rates)``
        ``body_rates`` has shape (n, 3) with ``dR_i/dt = R_i hat(body_rates[i])``.
    t, dt : float

    Notes
    -----
    Body-frame form of the order-4 Munthe-Kaas method::

        k1 = h f(t, y0)
        k2 = h f(t + h/2, y0 exp(k1/2))
        k3 = h f(t + h/2, y0 exp(k2/2 + [k1, k2]/8))
        k4 = h f(t + h,   y0 exp(k3))
        y1 = y0 exp((k1 + 2 k2 + 2 k3 + k4)/6 + [k1, k4]/12)
    """
    R0, x0 = state.rotations, state.vectors
    h = dt

    def at(theta, dx):
        return LieState(R0 @ exp_so3_many(theta), x0 + dx)

    w1, v1 = flow(t, state)
    k1, l1 = h * w1, h * v1
    w2, v2 = flow(t + 0.5 * h, at(0.5 * k1, 0.5 * l1))
    k2, l2 = h * w2, h * v2
    w3, v3 = flow(t + 0.5 * h, at(0.5 * k2 + _bracket(k1, k2) / 8.0, 0.5 * l2))
    k3, l3 = h * w3, h * v3
    w4, v4 = flow(t + h, at(k3, l3))
    k4, l4 = h * w4, h * v4
    theta = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0 + _bracket(k1, k4) / 12.0
    return LieState(R0 @ exp_so3_many(theta), x0 + (l1 + 2.0 * l2 + 2.0 * l3 + l4) / 6.0)


def repair_rotations(R, threshold=DRIFT_REPAIR):
    """
    Project drifting rotations back onto SO(3).

    Returns ``(R, max_drift, n_repaired)``. Raises :class:`StepRejected` for
    non-finite matrices or drift beyond 1e-6.
    """
    if not np.all(np.isfinite(R)):
        raise StepRejected("non-finite rotation after integration step")
    drift = orthonormality_error(R)
    worst = float(np.max(drift, initial=0.0))
    if worst > REJECT_DRIFT:
        raise StepRejected(f"orthonormality drift {worst:.3e} beyond repair threshold")
    bad = np.nonzero(drift > threshold)[0]
    if len(bad):
        R = R.copy()
        U, _, Vt = np.linalg.svd(R[bad])
        R[bad] = U @ Vt
    return R, worst, len(bad)


class HybridSystem:
    """
    Interface consumed by :func:`run_hybrid`.

    Subclasses implement :meth:`flow_step`, :meth:`jump_edges`, :meth:`jump`,
    :meth:`energy` and :meth:`record`, and set :attr:`columns`.
    ``min_jump_decrease`` is the decrease of :meth:`energy` guaranteed at every
    jump (None if the system makes no such promise).
    """

    columns = ("t", "j")
    min_jump_decrease = None

    def flow_step(self, state, t, dt, k):
        raise NotImplementedError

    def jump_edges(self, state):
        return ()

    def jump(self, state, edges):
        raise NotImplementedError

    def energy(self, state):
        return 0.0

    def record(self, state, t, j):
        return [t, j]

    def repair(self, state):
        return state, 0.0, 0


def default_max_jumps(energy0, decrease):
    if decrease is None or decrease <= 0:
        return 1000
    return max(1, 10 * math.ceil(energy0 / decrease))


def run_hybrid(x0, system, cfg):
    """
    Simulate `system` from `x0` over ``[0, cfg.t_end]``.

    The energy returned by ``system.energy`` is audited: along flows it must
    not increase by more than 1e-8 per step, and every jump must lower it by
    at least ``system.min_jump_decrease`` (minus 1e-8). Violations are logged,
    not raised.

    Raises
    ------
    MaxJumpsExceeded
        More jumps than ``cfg.max_jumps`` (or its default).
    """
    log = SimLog(list(system.columns))
    n = cfg.n_steps
    dt = cfg.step
    x = x0
    j = 0
    k = 0
    t = 0.0
    E = system.energy(x)
    max_jumps = cfg.max_jumps or default_max_jumps(E, system.min_jump_decrease)
    dec = system.min_jump_decrease
    log.rows.append(system.record(x, t, j))
    while True:
        edges = system.jump_edges(x)
        if len(edges):
            if j >= max_jumps:
                raise MaxJumpsExceeded(f"more than {max_jumps} jumps by t = {t:.6g}")
            x = system.jump(x, edges)
            E_new = system.energy(x)
            j += 1
            log.events.append(JumpEvent(t, j, tuple(int(e) for e in edges), E, E_new))
            if dec is not None and E - E_new < dec - ENERGY_TOL:
                log.energy_jump_violations.append((t, j, E - E_new))
            E = E_new
            log.rows.append(system.record(x, t, j))
            continue
        if k >= n:
            break
        x = system.flow_step(x, t, dt, k)
        k += 1
        t = k * dt
        if k % cfg.repair_every == 0 or k == n:
            x, drift, fixed = system.repair(x)
            log.max_drift = max(log.max_drift, drift)
            log.repairs += fixed
        E_new = system.energy(x)
        inc = E_new - E
        log.max_flow_increase = max(log.max_flow_increase, inc)
        if inc > ENERGY_TOL:
            log.energy_flow_violations.append((t, j, inc))
        E = E_new
        if k % cfg.log_every == 0 or k == n:
            log.rows.append(system.record(x, t, j))
    log.final_state = x
    return log
