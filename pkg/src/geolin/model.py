"""Kinematic tree model, joint kinematics and model generation.

Bodies are numbered ``0..n_B`` with 0 the moving base and every body numbered
after its parent. Body ``i >= 1`` is attached to its parent ``parent[i]`` by
joint ``i``, whose scalar coordinate is ``s[i - 1]``.

For joint ``i`` three frames are involved: the parent frame ``p = parent[i]``,
the joint predecessor frame ``p|i`` rigidly attached to the parent, and the
body frame ``i``. The model stores the constant pose ``^{p|i}H_p`` and the
joint motion gives ``^{p|i}H_i(s_i)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spatial import Pose, cross_motion, se3_exp, so3_exp, spatial_inertia, velocity_transform

JOINT_KINDS = ("revolute", "prismatic", "helical")
DEFAULT_PITCH = 0.1
AXES = {"x": np.array([1.0, 0.0, 0.0]), "y": np.array([0.0, 1.0, 0.0]), "z": np.array([0.0, 0.0, 1.0])}

# Minimum eigenvalue enforced on randomly drawn inertias.
RANDOM_INERTIA_MIN_EIG = 0.1


class ModelError(ValueError):
    """Invalid model description or model data."""


class ModelParseError(ModelError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class TopologyError(ModelError):
    pass


class InertiaError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class JointType:
    """1-DoF joint: revolute, prismatic or helical about/along ``axis``."""

    kind: str
    axis: np.ndarray
    pitch: float = DEFAULT_PITCH

    def __post_init__(self) -> None:
        if self.kind not in JOINT_KINDS:
            raise ModelError(f"unknown joint kind {self.kind!r}")
        axis = AXES[self.axis] if isinstance(self.axis, str) else np.array(self.axis, dtype=float)
        norm = np.linalg.norm(axis)
        if axis.shape != (3,) or norm == 0.0:
            raise ModelError(f"invalid joint axis {self.axis!r}")
        axis = axis / norm
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        if not np.isfinite(self.pitch):
            raise ModelError("helical pitch must be finite")

    @property
    def subspace(self) -> np.ndarray:
        """Joint motion subspace in the body frame (constant for these types)."""
        if self.kind == "revolute":
            return np.concatenate([np.zeros(3), self.axis])
        if self.kind == "prismatic":
            return np.concatenate([self.axis, np.zeros(3)])
        return np.concatenate([self.pitch * self.axis, self.axis])

    def axis_name(self) -> str | None:
        for name, a in AXES.items():
            if np.array_equal(a, self.axis):
                return name
        return None


def joint_pose(joint: JointType, s: float) -> Pose:
    """``^{p|i}H_i``: pose of the body frame in the joint predecessor frame."""
    if joint.kind == "prismatic":
        return Pose(np.eye(3), joint.axis * s)
    rot = so3_exp(joint.axis * s)
    if joint.kind == "revolute":
        return Pose(rot, np.zeros(3))
    return Pose(rot, joint.pitch * s * joint.axis)


def jcalc(joint: JointType, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Joint transform ``^iX_{p|i}`` and motion subspace ``Gamma_i``."""
    return velocity_transform(joint_pose(joint, s).inverse()), joint.subspace


def jcalc_deriv(joint: JointType, s: float) -> np.ndarray:
    """``d(^iX_{p|i})/ds``.

    ``^{p|i}H_i`` is the one-parameter subgroup ``exp(s Gamma^)``, so the
    derivative of its inverse transform is ``-(Gamma x) X``.
    """
    x, gamma = jcalc(joint, s)
    return -cross_motion(gamma) @ x


@dataclass(frozen=True, eq=False)
class MultibodyModel:
    """Tree-structured multibody system with a moving base.

    All per-body sequences have length ``n_B + 1`` and are indexed by body
    number; entry 0 of ``parent``, ``joints`` and ``fixed_transforms`` is an
    unused placeholder (``-1``/``None``).
    """

    parent: tuple[int, ...]
    joints: tuple[JointType | None, ...]
    fixed_transforms: tuple[Pose | None, ...]
    inertias: tuple[np.ndarray, ...]
    fixed_velocity_transforms: tuple[np.ndarray | None, ...] = field(init=False, repr=False)
    children: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    subtrees: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = len(self.inertias)
        if not (len(self.parent) == len(self.joints) == len(self.fixed_transforms) == n):
            raise ModelError("per-body sequences must all have length n_B + 1")
        for i in range(1, n):
            p = self.parent[i]
            if not 0 <= p < i:
                raise TopologyError(f"body {i} has parent {p}; parents must be numbered lower")
            if self.joints[i] is None or self.fixed_transforms[i] is None:
                raise ModelError(f"body {i} is missing its joint or fixed transform")
        inertias = []
        for i, m in enumerate(self.inertias):
            m = np.array(m, dtype=float)
            if m.shape != (6, 6):
                raise InertiaError(f"inertia of body {i} must be 6x6")
            if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
                raise InertiaError(f"inertia of body {i} is not symmetric")
            m = (m + m.T) / 2.0
            if np.linalg.eigvalsh(m)[0] <= 0.0:
                raise InertiaError(f"inertia of body {i} is not positive definite")
            m.setflags(write=False)
            inertias.append(m)
        object.__setattr__(self, "inertias", tuple(inertias))
        object.__setattr__(
            self,
            "fixed_velocity_transforms",
            (None,) + tuple(velocity_transform(p) for p in self.fixed_transforms[1:]),
        )
        children: list[list[int]] = [[] for _ in range(n)]
        for i in range(1, n):
            children[self.parent[i]].append(i)
        subtrees: list[list[int]] = [[i] for i in range(n)]
        for i in range(n - 1, 0, -1):
            subtrees[self.parent[i]].extend(subtrees[i])
        object.__setattr__(self, "children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "subtrees", tuple(tuple(sorted(s)) for s in subtrees))

    @property
    def n_bodies(self) -> int:
        """Number of bodies excluding the base (``n_B``)."""
        return len(self.inertias) - 1

    @property
    def n_joints(self) -> int:
        return self.n_bodies

    @property
    def n_dof(self) -> int:
        return 6 + self.n_joints

    def ancestors(self, i: int) -> list[int]:
        """Bodies on the path from ``i`` (exclusive) down to the base (inclusive)."""
        out = []
        while i > 0:
            i = self.parent[i]
            out.append(i)
        return out


@dataclass(frozen=True, eq=False)
class SystemState:
    """State ``(H, s, v, r)`` of a moving-base system.

    ``base_twist`` is the body twist ``^0v_{A,0}`` of the base, so that the
    base kinematics read ``dH/dt = H v^``. :meth:`world_twist` gives the same
    twist expressed in the inertial frame A.
    """

    base_pose: Pose
    joint_pos: np.ndarray
    base_twist: np.ndarray
    joint_vel: np.ndarray

    def __post_init__(self) -> None:
        for name, shape in (("joint_pos", None), ("base_twist", (6,)), ("joint_vel", None)):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if shape is not None and arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.joint_pos.shape != self.joint_vel.shape:
            raise ValueError("joint_pos and joint_vel must have the same length")

    @classmethod
    def from_world_twist(cls, base_pose: Pose, joint_pos, world_twist, joint_vel) -> SystemState:
        """Build a state from the base twist expressed in frame A."""
        body = velocity_transform(base_pose.inverse()) @ np.asarray(world_twist, dtype=float)
        return cls(base_pose, joint_pos, body, joint_vel)

    def world_twist(self) -> np.ndarray:
        """``^Av_{A,0} = ^AX_0 ^0v_{A,0}``."""
        return velocity_transform(self.base_pose) @ self.base_twist

    def check(self, model: MultibodyModel) -> None:
        if self.joint_pos.shape[0] != model.n_joints:
            raise ValueError(
                f"state has {self.joint_pos.shape[0]} joints, model has {model.n_joints}"
            )

    def replace(self, **changes) -> SystemState:
        fields = dict(
            base_pose=self.base_pose,
            joint_pos=self.joint_pos,
            base_twist=self.base_twist,
            joint_vel=self.joint_vel,
        )
        fields.update(changes)
        return SystemState(**fields)


# ---------------------------------------------------------------------------
# model documents

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_FLOAT_RE = re.compile(rf"^{_FLOAT}$")


def _parse_floats(text: str, count: int, line: int, name: str) -> np.ndarray:
    parts = [p for p in text.split(",") if p != ""]
    if len(parts) != count:
        raise ModelParseError(f"expected {count} floats, got {len(parts)}", line, name)
    for p in parts:
        if not _FLOAT_RE.match(p):
            raise ModelParseError(f"invalid float {p!r}", line, name)
    return np.array([float(p) for p in parts])


def _upper_to_sym(values: np.ndarray) -> np.ndarray:
    m = np.zeros((6, 6))
    m[np.triu_indices(6)] = values
    return m + np.triu(m, 1).T


def _sym_to_upper(m: np.ndarray) -> np.ndarray:
    return np.asarray(m)[np.triu_indices(6)]


def _parse_fields(tokens: list[str], line: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ModelParseError(f"expected key=value, got {tok!r}", line)
        key, value = tok.split("=", 1)
        if key in out:
            raise ModelParseError("duplicate field", line, key)
        out[key] = value
    return out


def load_model(text: str) -> MultibodyModel:
    """Parse a model document.

    Format (one record per line, ``#`` starts a comment)::

        base inertia=<21 floats>
        body <id> parent=<id> joint=<revolute|prismatic|helical> axis=<x|y|z>
             [pitch=<float>] xform=<12 floats> inertia=<21 floats>

    Float lists are comma separated. ``xform`` is ``^{p|i}H_p`` given as the
    rotation (row-major) followed by the origin; ``inertia`` is the upper
    triangle of the 6x6 spatial inertia, row by row. Body ids must be
    ``1..n_B`` with each parent id lower than the body id.
    """
    base_inertia = None
    bodies: dict[int, tuple[int, JointType, Pose, np.ndarray, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        tokens = content.split()
        head = tokens[0]
        if head == "base":
            if base_inertia is not None:
                raise ModelParseError("duplicate base record", lineno)
            fields = _parse_fields(tokens[1:], lineno)
            if set(fields) != {"inertia"}:
                raise ModelParseError("base record takes exactly one field 'inertia'", lineno)
            base_inertia = _upper_to_sym(_parse_floats(fields["inertia"], 21, lineno, "inertia"))
        elif head == "body":
            if len(tokens) < 2 or not tokens[1].isdigit():
                raise ModelParseError("body record needs a numeric id", lineno, "id")
            body_id = int(tokens[1])
            if body_id < 1:
                raise ModelParseError("body ids start at 1", lineno, "id")
            if body_id in bodies:
                raise ModelParseError(f"duplicate body id {body_id}", lineno, "id")
            fields = _parse_fields(tokens[2:], lineno)
            required = {"parent", "joint", "axis", "xform", "inertia"}
            missing = required - set(fields)
            if missing:
                raise ModelParseError("missing field", lineno, sorted(missing)[0])
            unknown = set(fields) - required - {"pitch"}
            if unknown:
                raise ModelParseError("unknown field", lineno, sorted(unknown)[0])
            if not fields["parent"].isdigit():
                raise ModelParseError("parent must be a non-negative integer", lineno, "parent")
            if fields["joint"] not in JOINT_KINDS:
                raise ModelParseError(f"unknown joint type {fields['joint']!r}", lineno, "joint")
            if fields["axis"] not in AXES:
                raise ModelParseError("axis must be x, y or z", lineno, "axis")
            pitch = DEFAULT_PITCH
            if "pitch" in fields:
                pitch = float(_parse_floats(fields["pitch"], 1, lineno, "pitch")[0])
            joint = JointType(fields["joint"], fields["axis"], pitch)
            xf = _parse_floats(fields["xform"], 12, lineno, "xform")
            pose = Pose(xf[:9].reshape(3, 3), xf[9:])
            if not pose.is_valid(1e-9):
                raise ModelParseError("xform rotation is not a proper rotation", lineno, "xform")
            inertia = _upper_to_sym(_parse_floats(fields["inertia"], 21, lineno, "inertia"))
            bodies[body_id] = (int(fields["parent"]), joint, pose, inertia, lineno)
        else:
            raise ModelParseError(f"unknown record type {head!r}", lineno)
    if base_inertia is None:
        raise ModelParseError("missing base record")
    n = len(bodies)
    if sorted(bodies) != list(range(1, n + 1)):
        raise TopologyError("body ids must be exactly 1..n_B")
    for i, (p, *_rest, lineno) in bodies.items():
        if p >= i:
            raise TopologyError(f"line {lineno}: body {i} has parent {p}; parents must be numbered lower")
    try:
        return MultibodyModel(
            parent=(-1,) + tuple(bodies[i][0] for i in range(1, n + 1)),
            joints=(None,) + tuple(bodies[i][1] for i in range(1, n + 1)),
            fixed_transforms=(None,) + tuple(bodies[i][2] for i in range(1, n + 1)),
            inertias=(base_inertia,) + tuple(bodies[i][3] for i in range(1, n + 1)),
        )
    except InertiaError:
        raise
    except ModelError as exc:  # pragma: no cover - guarded by the checks above
        raise ModelParseError(str(exc)) from exc


def dump_model(model: MultibodyModel) -> str:
    """Serialize ``model`` in the :func:`load_model` format (exact round trip)."""

    def floats(values) -> str:
        return ",".join(repr(float(x)) for x in values)

    lines = [f"base inertia={floats(_sym_to_upper(model.inertias[0]))}"]
    for i in range(1, model.n_bodies + 1):
        joint = model.joints[i]
        axis = joint.axis_name()
        if axis is None:
            raise ModelError(f"joint {i} axis is not a coordinate axis; cannot serialize")
        pose = model.fixed_transforms[i]
        parts = [
            f"body {i}",
            f"parent={model.parent[i]}",
            f"joint={joint.kind}",
            f"axis={axis}",
        ]
        if joint.kind == "helical":
            parts.append(f"pitch={float(joint.pitch)!r}")
        parts.append(f"xform={floats(np.concatenate([pose.rotation.ravel(), pose.origin]))}")
        parts.append(f"inertia={floats(_sym_to_upper(model.inertias[i]))}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# test system and random generation


def _link_inertia(mass: float, com: Sequence[float], dims: Sequence[float]) -> np.ndarray:
    a, b, c = dims
    box = mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])
    return spatial_inertia(mass, np.asarray(com, dtype=float), box)


def build_test_system() -> MultibodyModel:
    """Nine-joint branched test system.

    Three revolute, three prismatic and three helical joints, each kind using
    the x, y and z axes once. The base carries three chains (bodies 1, 4, 7);
    bodies 4 and 7 each carry two children.
    """
    #      body: (parent, kind, axis, joint placement in parent frame)
    layout = {
        1: (0, "revolute", "x", (0.20, 0.00, 0.10)),
        2: (1, "prismatic", "y", (0.00, 0.30, 0.00)),
        3: (2, "helical", "z", (0.00, 0.25, 0.05)),
        4: (0, "prismatic", "x", (-0.20, 0.05, 0.00)),
        5: (4, "revolute", "y", (-0.25, 0.10, 0.00)),
        6: (4, "helical", "x", (-0.25, -0.10, 0.00)),
        7: (0, "helical", "y", (0.00, -0.20, -0.10)),
        8: (7, "revolute", "z", (0.10, -0.25, 0.00)),
        9: (7, "prismatic", "z", (-0.10, -0.25, -0.05)),
    }
    tilt = {3: (0.0, 0.0, 0.3), 6: (0.2, 0.0, 0.0), 9: (0.0, -0.25, 0.0)}
    parent = [-1]
    joints: list[JointType | None] = [None]
    fixed: list[Pose | None] = [None]
    inertias = [_link_inertia(4.0, (0.0, 0.0, 0.02), (0.3, 0.3, 0.2))]
    for i in range(1, 10):
        p, kind, axis, where = layout[i]
        placement = Pose(so3_exp(np.array(tilt.get(i, (0.0, 0.0, 0.0)))), np.array(where))
        parent.append(p)
        joints.append(JointType(kind, axis, 0.05 if kind == "helical" else DEFAULT_PITCH))
        fixed.append(placement.inverse())
        direction = AXES[axis]
        com = 0.12 * direction + np.array([0.02, -0.01, 0.03]) * (i % 3 - 1)
        mass = 0.5 + 0.15 * i
        inertias.append(_link_inertia(mass, com, (0.06 + 0.01 * i, 0.05, 0.24)))
    return MultibodyModel(tuple(parent), tuple(joints), tuple(fixed), tuple(inertias))


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_inertia(rng: np.random.Generator) -> np.ndarray:
    """Symmetric positive definite 6x6 with entries drawn from U[0, 1].

    The symmetrized draw is shifted along the identity when needed so that its
    smallest eigenvalue is at least ``RANDOM_INERTIA_MIN_EIG``.
    """
    a = rng.uniform(0.0, 1.0, (6, 6))
    m = (a + a.T) / 2.0
    lo = np.linalg.eigvalsh(m)[0]
    if lo < RANDOM_INERTIA_MIN_EIG:
        m = m + (RANDOM_INERTIA_MIN_EIG - lo) * np.eye(6)
    return m


def randomize_parameters(model: MultibodyModel, seed: int | np.random.Generator) -> MultibodyModel:
    """Keep topology and joints of ``model`` and redraw fixed transforms
    (exponential of U[0, 1]^6 coordinates) and inertias."""
    rng = _rng(seed)
    n = model.n_bodies
    fixed = [None] + [se3_exp(rng.uniform(0.0, 1.0, 6)) for _ in range(n)]
    inertias = [random_inertia(rng) for _ in range(n + 1)]
    return MultibodyModel(model.parent, model.joints, tuple(fixed), tuple(inertias))


def random_model(seed: int | np.random.Generator, n_bodies: int) -> MultibodyModel:
    """Random tree with ``n_bodies`` bodies on top of the base."""
    if n_bodies < 0:
        raise ValueError("n_bodies must be non-negative")
    rng = _rng(seed)
    parent = [-1] + [int(rng.integers(0, i)) for i in range(1, n_bodies + 1)]
    joints = [None] + [
        JointType(JOINT_KINDS[rng.integers(0, 3)], "xyz"[rng.integers(0, 3)])
        for _ in range(n_bodies)
    ]
    fixed = [None] + [se3_exp(rng.uniform(0.0, 1.0, 6)) for _ in range(n_bodies)]
    inertias = [random_inertia(rng) for _ in range(n_bodies + 1)]
    return MultibodyModel(tuple(parent), tuple(joints), tuple(fixed), tuple(inertias))


def random_state(seed: int | np.random.Generator, model: MultibodyModel) -> SystemState:
    """State with every component drawn from U[0, 1]; the base pose is the
    exponential of a U[0, 1]^6 vector."""
    rng = _rng(seed)
    n = model.n_joints
    pose = se3_exp(rng.uniform(0.0, 1.0, 6))
    return SystemState(
        base_pose=pose,
        joint_pos=rng.uniform(0.0, 1.0, n),
        base_twist=rng.uniform(0.0, 1.0, 6),
        joint_vel=rng.uniform(0.0, 1.0, n),
    )
