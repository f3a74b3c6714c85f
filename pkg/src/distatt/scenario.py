"""
Declarative scenarios: topology, ground-truth motion, initial estimates,
observer parameters and simulation settings, loaded from JSON.

Rotations are written as ``{"angle": theta, "axis": [x, y, z]}`` with a unit
axis. Angular-velocity components are either numbers or one-entry objects
``{"cos": [a, b, c]}`` / ``{"sin": [a, b, c]}`` meaning ``a cos(b t) + c`` and
``a sin(b t) + c``. See ``docs/scenario_schema.md`` for the full layout.
"""

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attitude import ObserverParams, synthesize_params
from .errors import DistattError, ParseError, ValidationError
from .hybrid import LieState, SimConfig, integrate_step
from .so3 import I3, angle_axis
from .topology import TreeTopology, validate_tree

OBSERVERS = ("continuous", "hybrid")
POSITION_KINDS = ("rotating", "static", "linear")
WAVES = ("cos", "sin")


# -- building blocks -----------------------------------------------------------


@dataclass(frozen=True)
class AngleAxis:
    angle: float
    axis: tuple

    @property
    def matrix(self):
        return angle_axis(self.angle, np.asarray(self.axis))

    def to_dict(self):
        return {"angle": self.angle, "axis": list(self.axis)}


@dataclass(frozen=True)
class Wave:
    """``a cos(b t) + c`` or ``a sin(b t) + c``."""

    kind: str
    a: float
    b: float
    c: float

    def __call__(self, t):
        f = np.cos if self.kind == "cos" else np.sin
        return self.a * f(self.b * np.asarray(t, dtype=float)) + self.c

    def bound(self):
        return abs(self.a) + abs(self.c)

    def to_json(self):
        return {self.kind: [self.a, self.b, self.c]}


@dataclass(frozen=True)
class PositionProfile:
    """
    Inertial trajectories of all agents.

    ``rotating``: ``p_i(t) = Ra(rate t, axis)^T p_i(0)``.
    ``static``: ``p_i(t) = p_i(0)``.
    ``linear``: ``p_i(t) = p_i(0) + velocity_i t``.
    """

    kind: str
    initial: np.ndarray
    axis: tuple = (0.0, 0.0, 1.0)
    rate: float = 0.0
    velocity: np.ndarray = None

    def positions(self, t):
        """Positions at times `t`, shape ``t.shape + (N, 3)``."""
        t = np.asarray(t, dtype=float)
        p0 = self.initial
        if self.kind == "static":
            return np.broadcast_to(p0, t.shape + p0.shape).copy()
        if self.kind == "linear":
            return p0 + t[..., None, None] * self.velocity
        R = _axis_rotations(self.rate * t, self.axis)
        return np.einsum("...ji,nj->...ni", R, p0)

    def velocities(self, t):
        """Closed-form inertial velocities at times `t`."""
        t = np.asarray(t, dtype=float)
        p0 = self.initial
        if self.kind == "static":
            return np.zeros(t.shape + p0.shape)
        if self.kind == "linear":
            return np.broadcast_to(self.velocity, t.shape + p0.shape).copy()
        # d/dt [Ra(w t)^T p0] = -w [axis]x Ra(w t)^T p0
        p = self.positions(t)
        return -self.rate * np.cross(np.asarray(self.axis), p)

    def to_dict(self):
        d = {"kind": self.kind, "initial": self.initial.tolist()}
        if self.kind == "rotating":
            d["axis"] = list(self.axis)
            d["rate"] = self.rate
        if self.kind == "linear":
            d["velocity"] = self.velocity.tolist()
        return d


def _axis_rotations(theta, axis):
    theta = np.asarray(theta, dtype=float)
    K = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    s = np.sin(theta)[..., None, None]
    c = np.cos(theta)[..., None, None]
    return I3 + s * K + (1.0 - c) * (K @ K)


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: TreeTopology
    omega: tuple  # per agent, per component: float or Wave
    truth_attitudes: tuple  # AngleAxis per agent
    positions: PositionProfile
    est_attitudes: tuple  # AngleAxis per agent
    est_positions: np.ndarray
    xi0: np.ndarray
    observer: str
    params: ObserverParams
    sim: SimConfig
    output: dict = field(default_factory=dict)

    @property
    def n_agents(self):
        return self.topology.n_agents

    @property
    def R0(self):
        return np.stack([a.matrix for a in self.truth_attitudes])

    @property
    def Rhat0(self):
        return np.stack([a.matrix for a in self.est_attitudes])

    def with_observer(self, observer):
        if observer not in OBSERVERS:
            raise ValidationError(f"must be one of {OBSERVERS}", "observer")
        return replace(self, observer=observer)

    def with_sim(self, **kw):
        cfg = {k: getattr(self.sim, k) for k in ("dt", "t_end", "max_jumps", "repair_every", "log_every")}
        cfg.update({k: v for k, v in kw.items() if v is not None})
        return replace(self, sim=SimConfig(**cfg))

    def angular_velocity(self, t):
        """Body angular velocities at times `t`, shape ``t.shape + (N, 3)``."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.n_agents, 3))
        for i, comps in enumerate(self.omega):
            for c, w in enumerate(comps):
                out[..., i, c] = w(t) if isinstance(w, Wave) else w
        return out

    def to_dict(self):
        return {
            "name": self.name,
            "graph": self.topology.to_dict(),
            "truth": {
                "initial_attitudes": [a.to_dict() for a in self.truth_attitudes],
                "angular_velocity": [
                    [w.to_json() if isinstance(w, Wave) else w for w in comps] for comps in self.omega
                ],
                "positions": self.positions.to_dict(),
            },
            "estimates": {
                "attitudes": [a.to_dict() for a in self.est_attitudes],
                "positions": self.est_positions.tolist(),
                "xi": self.xi0.tolist(),
            },
            "observer": self.observer,
            "params": self.params.to_dict(),
            "sim": {
                "dt": self.sim.dt,
                "t_end": self.sim.t_end,
                "max_jumps": self.sim.max_jumps,
                "repair_every": self.sim.repair_every,
                "log_every": self.sim.log_every,
            },
            "output": dict(self.output),
        }

    def to_json(self):
        return dumps_compact(self.to_dict())

    def save(self, path):
        Path(path).write_text(self.to_json())


_NUMBER_LIST = re.compile(r"\[[\s\d.eE+,-]*\]")


def dumps_compact(doc):
    """Indented JSON with numeric lists kept on one line."""
    text = json.dumps(doc, indent=2)
    return _NUMBER_LIST.sub(lambda m: re.sub(r"\s+", " ", m.group(0)).replace("[ ", "[").replace(" ]", "]"), text) + "\n"


def scenarios_equal(a, b):
    """Structural equality, comparing arrays exactly."""
    return json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


# -- parsing -------------------------------------------------------------------


def _get(d, key, path, default=...):
    if not isinstance(d, dict):
        raise ValidationError("expected an object", path)
    if key not in d:
        if default is ...:
            raise ValidationError("missing required field", f"{path}.{key}" if path else key)
        return default
    return d[key]


def _num(x, path, positive=False, nonneg=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ValidationError(f"expected a finite number, got {x!r}", path)
    if positive and not x > 0:
        raise ValidationError(f"must be positive, got {x}", path)
    if nonneg and x < 0:
        raise ValidationError(f"must be nonnegative, got {x}", path)
    return float(x)


def _vec(x, path, n=3):
    if not isinstance(x, (list, tuple)) or len(x) != n:
        raise ValidationError(f"expected a list of {n} numbers", path)
    return np.array([_num(v, f"{path}[{i}]") for i, v in enumerate(x)])


def _vec_list(x, n_rows, path):
    if not isinstance(x, (list, tuple)) or len(x) != n_rows:
        raise ValidationError(f"expected {n_rows} entries (one per agent)", path)
    return np.stack([_vec(v, f"{path}[{i}]") for i, v in enumerate(x)])


def _unit(x, path):
    v = _vec(x, path)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValidationError(f"axis must be a unit vector (norm {np.linalg.norm(v):.12g})", path)
    return tuple(float(c) for c in v)


def _angle_axis(x, path):
    return AngleAxis(_num(_get(x, "angle", path), f"{path}.angle"), _unit(_get(x, "axis", path), f"{path}.axis"))


def _rotations(x, n, path):
    if not isinstance(x, list) or len(x) != n:
        raise ValidationError(f"expected {n} angle-axis rotations (one per agent)", path)
    return tuple(_angle_axis(r, f"{path}[{i}]") for i, r in enumerate(x))


def _omega_component(x, path):
    if isinstance(x, dict):
        if len(x) != 1 or next(iter(x)) not in WAVES:
            raise ValidationError(f"expected a number or one of {{'cos': [a, b, c]}}, {{'sin': [a, b, c]}}", path)
        kind = next(iter(x))
        a, b, c = _vec(x[kind], f"{path}.{kind}")
        return Wave(kind, float(a), float(b), float(c))
    return _num(x, path)


def _omega(x, n, path):
    if not isinstance(x, list) or len(x) != n:
        raise ValidationError(f"expected {n} angular-velocity profiles (one per agent)", path)
    out = []
    for i, comps in enumerate(x):
        p = f"{path}[{i}]"
        if not isinstance(comps, list) or len(comps) != 3:
            raise ValidationError("expected three components", p)
        out.append(tuple(_omega_component(c, f"{p}[{k}]") for k, c in enumerate(comps)))
    return tuple(out)


def _positions(x, n, path):
    kind = _get(x, "kind", path)
    if kind not in POSITION_KINDS:
        raise ValidationError(f"must be one of {POSITION_KINDS}", f"{path}.kind")
    p0 = _vec_list(_get(x, "initial", path), n, f"{path}.initial")
    if kind == "rotating":
        return PositionProfile(
            kind, p0, _unit(_get(x, "axis", path), f"{path}.axis"), _num(_get(x, "rate", path), f"{path}.rate")
        )
    if kind == "linear":
        return PositionProfile(kind, p0, velocity=_vec_list(_get(x, "velocity", path), n, f"{path}.velocity"))
    return PositionProfile(kind, p0)


def _params(d):
    syn = d.get("synthesize")
    raw = d.get("params")
    if (syn is None) == (raw is None):
        raise ValidationError("give exactly one of 'params' or 'synthesize'", "params")
    if raw is not None:
        path = "params"
        A = _get(raw, "A", path)
        try:
            return ObserverParams(
                tuple(_num(v, f"{path}.xi_set[{i}]") for i, v in enumerate(_get(raw, "xi_set", path))),
                np.array(A, dtype=float),
                _vec(_get(raw, "u", path), f"{path}.u"),
                _num(_get(raw, "gamma", path), f"{path}.gamma", positive=True),
                _num(_get(raw, "delta", path), f"{path}.delta", positive=True),
                _num(raw.get("k_R", 1.0), f"{path}.k_R", positive=True),
                _num(raw.get("k_xi", 1.0), f"{path}.k_xi", positive=True),
                _num(raw.get("k_p", 1.0), f"{path}.k_p", positive=True),
            )
        except ValidationError:
            raise
        except (DistattError, ValueError, TypeError) as exc:
            raise ValidationError(str(exc), path) from exc
    path = "synthesize"
    try:
        return synthesize_params(
            np.array(_get(syn, "A", path), dtype=float),
            tuple(_num(v, f"{path}.xi_set[{i}]") for i, v in enumerate(_get(syn, "xi_set", path))),
            gamma_fraction=_num(syn.get("gamma_fraction", 0.95), f"{path}.gamma_fraction"),
            delta_fraction=_num(syn.get("delta_fraction", 0.9), f"{path}.delta_fraction"),
            k_R=_num(syn.get("k_R", 1.0), f"{path}.k_R", positive=True),
            k_xi=_num(syn.get("k_xi", 1.0), f"{path}.k_xi", positive=True),
            k_p=_num(syn.get("k_p", 1.0), f"{path}.k_p", positive=True),
        )
    except ValidationError:
        raise
    except (DistattError, ValueError, TypeError) as exc:
        raise ValidationError(str(exc), path) from exc


def _sim(d):
    path = "sim"
    s = d.get("sim", {})
    mj = s.get("max_jumps")
    try:
        return SimConfig(
            dt=_num(s.get("dt", 1e-3), f"{path}.dt", positive=True),
            t_end=_num(s.get("t_end", 30.0), f"{path}.t_end", positive=True),
            max_jumps=None if mj is None else int(_num(mj, f"{path}.max_jumps", positive=True)),
            repair_every=int(_num(s.get("repair_every", 100), f"{path}.repair_every", positive=True)),
            log_every=int(_num(s.get("log_every", 1), f"{path}.log_every", positive=True)),
        )
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc), path) from exc


def scenario_from_dict(d):
    """Validate a parsed JSON document and build a :class:`Scenario`."""
    if not isinstance(d, dict):
        raise ValidationError("top level must be an object", "$")
    graph = _get(d, "graph", "")
    n = _get(graph, "agents", "graph")
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise ValidationError("expected an integer >= 2", "graph.agents")
    edges = _get(graph, "edges", "graph")
    if not isinstance(edges, list) or not all(
        isinstance(e, list) and len(e) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in e)
        for e in edges
    ):
        raise ValidationError("expected a list of [head, tail] integer pairs", "graph.edges")
    try:
        topo = validate_tree(n, [tuple(e) for e in edges])
    except DistattError as exc:
        raise ValidationError(str(exc), "graph.edges") from exc
    truth = _get(d, "truth", "")
    est = _get(d, "estimates", "")
    observer = d.get("observer", "hybrid")
    if observer not in OBSERVERS:
        raise ValidationError(f"must be one of {OBSERVERS}", "observer")
    xi0 = est.get("xi", [0.0] * topo.n_edges) if isinstance(est, dict) else None
    if not isinstance(xi0, list) or len(xi0) != topo.n_edges:
        raise ValidationError(f"expected {topo.n_edges} values (one per edge)", "estimates.xi")
    output = d.get("output", {})
    if not isinstance(output, dict):
        raise ValidationError("expected an object", "output")
    return Scenario(
        name=str(d.get("name", "scenario")),
        topology=topo,
        omega=_omega(_get(truth, "angular_velocity", "truth"), n, "truth.angular_velocity"),
        truth_attitudes=(
            _rotations(truth["initial_attitudes"], n, "truth.initial_attitudes")
            if "initial_attitudes" in truth
            else tuple(AngleAxis(0.0, (0.0, 0.0, 1.0)) for _ in range(n))
        ),
        positions=_positions(_get(truth, "positions", "truth"), n, "truth.positions"),
        est_attitudes=_rotations(_get(est, "attitudes", "estimates"), n, "estimates.attitudes"),
        est_positions=_vec_list(_get(est, "positions", "estimates"), n, "estimates.positions"),
        xi0=np.array([_num(x, f"estimates.xi[{k}]") for k, x in enumerate(xi0)]),
        observer=observer,
        params=_params(d),
        sim=_sim(d),
        output=output,
    )


def load_scenario(path):
    """
    Read and validate a scenario file.

    Raises
    ------
    ParseError
        The file is missing or is not valid JSON.
    ValidationError
        A field is missing or inconsistent; the message names its path.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}", str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", str(path)) from exc
    return scenario_from_dict(doc)


# -- the replication preset ----------------------------------------------------------


def pyramid_preset():
    """Five agents on a path, rotating square pyramid, hybrid observer parameters."""
    half = math.pi / 2
    e3 = (0.0, 0.0, 1.0)
    u = np.array([0.0, 0.6455, 0.7638])
    params = ObserverParams(
        xi_set=(0.08 * math.pi,),
        A=np.diag([5.0, 8.57, 12.0]),
        u=u / np.linalg.norm(u),
        gamma=1.9251,
        delta=0.0030,
        k_R=1.1,
        k_xi=5.0,
        k_p=1.0,
    )
    return Scenario(
        name="pyramid",
        topology=validate_tree(5, [(1, 2), (2, 3), (3, 4), (4, 5)]),
        omega=(
            (1.0, -2.0, 1.0),
            (Wave("cos", -1.0, 3.0, 0.0), 1.0, Wave("sin", 1.0, 2.0, 0.0)),
            (Wave("cos", -1.0, 1.0, 0.0), 1.0, Wave("sin", 1.0, 2.0, 0.0)),
            (Wave("cos", -1.0, 2.0, 0.0), 1.0, Wave("sin", 1.0, 5.0, 0.0)),
            (1.5, 4.0, 5.0),
        ),
        truth_attitudes=tuple(AngleAxis(0.0, e3) for _ in range(5)),
        positions=PositionProfile(
            "rotating",
            np.array([[-2.0, -2.0, -2.0], [2.0, -2.0, -2.0], [-2.0, 2.0, -2.0], [2.0, 2.0, -2.0], [0.0, 0.0, 0.0]]),
            axis=e3,
            rate=math.pi / 6,
        ),
        est_attitudes=tuple(AngleAxis(s * half, e3) for s in (-1, 1, -1, 1, -1)),
        est_positions=np.array([[1.0, 1.0, 0.0], [-1.0, 2.0, 1.0], [-2.0, 0.0, -1.0], [-1.0, 2.0, 2.0], [-1.0, 1.0, 1.0]]),
        xi0=np.zeros(4),
        observer="hybrid",
        params=params,
        sim=SimConfig(dt=1e-3, t_end=30.0),
    )


# -- ground truth ------------------------------------------------------------------


@dataclass
class GroundTruth:
    times: np.ndarray
    R: np.ndarray  # (K, N, 3, 3)
    p: np.ndarray  # (K, N, 3)
    omega: np.ndarray  # (K, N, 3) body frame
    v: np.ndarray  # (K, N, 3) inertial


def half_step_times(cfg):
    """Grid ``0, h/2, h, ..., t_end`` used by the RK4 stages."""
    return np.arange(2 * cfg.n_steps + 1) * (0.5 * cfg.step)


def input_grids(sc):
    """Body angular velocity, inertial position and velocity on the half-step grid."""
    t = half_step_times(sc.sim)
    return sc.angular_velocity(t), sc.positions.positions(t), sc.positions.velocities(t)


def integrate_attitudes(sc, n_steps=None):
    """
    Integrate ``dR_i/dt = R_i [w_i(t)]x`` from the initial attitudes with the
    geometric RK4 scheme on the simulation grid.

    Returns the attitudes at ``0, h, ..., n_steps h``, shape (n_steps + 1, N, 3, 3).
    """
    cfg = sc.sim
    n = cfg.n_steps if n_steps is None else n_steps
    h = cfg.step
    R = sc.R0
    out = np.empty((n + 1,) + R.shape)
    out[0] = R

    def flow(t, s):
        return sc.angular_velocity(t), np.zeros(0)

    state = LieState(R, np.zeros(0))
    for k in range(n):
        state = integrate_step(state, flow, k * h, h)
        out[k + 1] = state.rotations
    return out


def ground_truth(sc, n_steps=None):
    """Sample the plant on the simulation grid (full steps only)."""
    cfg = sc.sim
    n = cfg.n_steps if n_steps is None else n_steps
    t = np.arange(n + 1) * cfg.step
    return GroundTruth(
        t, integrate_attitudes(sc, n), sc.positions.positions(t), sc.angular_velocity(t), sc.positions.velocities(t)
    )


def ground_truth_velocity(sc, t, attitudes=None):
    """
    Exogenous velocities at time `t`.

    Returns ``(omega_body, v_inertial, v_body)``, each of shape (N, 3). The body
    velocity needs the true attitudes at `t`; they are integrated from the
    start when not supplied.
    """
    omega = sc.angular_velocity(t)
    v = sc.positions.velocities(t)
    if attitudes is None:
        steps = int(round(t / sc.sim.step))
        if abs(steps * sc.sim.step - t) > 1e-12 * max(1.0, t):
            sc = sc.with_sim(dt=t / max(steps, 1), t_end=t)
            steps = sc.sim.n_steps
        attitudes = integrate_attitudes(sc, steps)[-1] if steps else sc.R0
    vb = np.einsum("nji,nj->ni", np.asarray(attitudes), v)
    return omega, v, vb


def finite_difference_velocity(sc, t, h=1e-4):
    """Centered difference of the position profile, error O(h^2)."""
    return (sc.positions.positions(t + h) - sc.positions.positions(t - h)) / (2.0 * h)
