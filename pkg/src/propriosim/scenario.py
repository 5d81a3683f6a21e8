"""Scenario files: flat dotted-key text describing one object/controller/runner setup.

Format: one `key = value` per line, `#` comments, values are numbers, bare
words, `inf`, booleans, or `[a, b, c]` lists. Angles in files are degrees;
they are converted to radians at this boundary (and back when dumping).
Configuration-valued keys (limits, targets, step sizes) follow the joint
type: meters for prismatic, degrees for revolute/helical.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .admittance import AdmittanceParams, GRIPPER_FRAME, WORLD_FRAME, critical_damping
from .articulation import (
    HELICAL,
    JOINT_TYPES,
    PRISMATIC,
    REVOLUTE,
    JointModel,
    PoseNoise,
    helical_joint,
    part_pose,
    prismatic_joint,
    revolute_joint,
)
from .contact import GraspCoupling, MechanismForces, World
from .episode import RunnerConfig
from .estimation import NoiseModel
from .se3 import Pose, so3_exp


class ParseError(ValueError):
    """Malformed scenario syntax."""

    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class ValidationError(ValueError):
    """A scenario value is out of range or inconsistent."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z_][a-z0-9_]*)*$")
_INT_RE = re.compile(r"^[+-]?\d+$")

_POSITIVE = ("must be > 0", lambda v: v > 0)
_NON_NEGATIVE = ("must be >= 0", lambda v: v >= 0)
_POSITIVE_VEC = ("must be > 0 on every axis", lambda v: all(x > 0 for x in v))
_ANY = ("", lambda v: True)
_UNIT_FRACTION = ("must be in (0, 1]", lambda v: 0 < v <= 1)
_POSITIVE_INT = ("must be a positive integer", lambda v: v >= 1)


def _enum(*options):
    return (f"must be one of {options}", lambda v: v in options)


# key -> (kind, default, (message, predicate))
# kinds: float, int, vec2, vec3, word; suffix ~q marks joint-configuration
# units (degrees in files for revolute/helical), ~deg marks plain angles.
_SCHEMA: dict[str, tuple[str, object, tuple]] = {
    "name": ("word", "scenario", _ANY),
    "object.joint.type": ("word", PRISMATIC, _enum(*JOINT_TYPES)),
    "object.joint.axis_direction": ("vec3", [0.0, 0.0, -1.0], ("must be nonzero", lambda v: any(x != 0 for x in v))),
    "object.joint.axis_origin": ("vec3", [0.0, 0.0, 0.0], _ANY),
    "object.joint.pitch": ("float", 0.0, _ANY),
    "object.joint.limits~q": ("vec2", [0.0, 0.3], ("must satisfy min <= max", lambda v: v[0] <= v[1])),
    "object.initial_q~q": ("float", 0.0, _ANY),
    "object.handle_offset.translation": ("vec3", [0.0, 0.0, 0.0], _ANY),
    "object.handle_offset.rotation_rpy~deg": ("vec3", [0.0, 0.0, 0.0], _ANY),
    "object.mech.damping": ("float", 50.0, _POSITIVE),
    "object.mech.latch_breakaway": ("float", 0.0, _NON_NEGATIVE),
    "object.mech.latch_disengage_q~q": ("float", 0.0, _NON_NEGATIVE),
    "object.mech.closing_spring_k": ("float", 0.0, _NON_NEGATIVE),
    "object.mech.closing_spring_range_q~q": ("float", 0.0, _NON_NEGATIVE),
    "grasp.k_couple_trans": ("float", 2000.0, _POSITIVE),
    "grasp.k_couple_rot": ("float", 20.0, _POSITIVE),
    "grasp.slip_torque_limit": ("float", math.inf, _POSITIVE),
    "grasp.slip_force_limit": ("float", math.inf, _POSITIVE),
    "grasp.slip_viscosity_rot": ("float", 1.0, _POSITIVE),
    "grasp.slip_viscosity_trans": ("float", 200.0, _POSITIVE),
    "grasp.closing_axis": ("vec3", [1.0, 0.0, 0.0], ("must be nonzero", lambda v: any(x != 0 for x in v))),
    "grasp.handle_axis": ("vec3", [0.0, 1.0, 0.0], ("must be nonzero", lambda v: any(x != 0 for x in v))),
    "grasp.handle_half_length": ("float", 0.06, _POSITIVE),
    "controller.k_rot": ("vec3", [2.0, 2.0, 2.0], _POSITIVE_VEC),
    "controller.k_trans": ("vec3", [50.0, 50.0, 200.0], _POSITIVE_VEC),
    "controller.m_rot": ("vec3", [0.05, 0.05, 0.05], _POSITIVE_VEC),
    "controller.m_trans": ("vec3", [2.0, 2.0, 2.0], _POSITIVE_VEC),
    "controller.b_rot": ("vec3|word", "critical", _ANY),
    "controller.b_trans": ("vec3|word", "critical", _ANY),
    "controller.frame": ("word", GRIPPER_FRAME, _enum(GRIPPER_FRAME, WORLD_FRAME)),
    "runner.step_dq~q": ("float", 0.01, _POSITIVE),
    "runner.poses_per_estimate": ("int", 5, _POSITIVE_INT),
    "runner.target_q~q": ("float", 0.25, _ANY),
    "runner.max_steps": ("int", 100, _POSITIVE_INT),
    "runner.dt": ("float", 0.002, ("must be in (0, 0.05]", lambda v: 0 < v <= 0.05)),
    "runner.motion_time": ("float", 0.2, _POSITIVE),
    "runner.noise.sigma_translation": ("float", 0.0, _NON_NEGATIVE),
    "runner.noise.sigma_rotation~deg": ("float", 0.0, _NON_NEGATIVE),
    "runner.success_threshold": ("float", 0.9, _UNIT_FRACTION),
    "runner.force_limit": ("float", 50.0, _POSITIVE),
    "estimator.sigma_translation": ("float", 0.005, _POSITIVE),
    "estimator.sigma_rotation~deg": ("float", 2.0, _POSITIVE),
    "replicates": ("int", 1, _POSITIVE_INT),
    "seed_base": ("int", 0, _ANY),
}

_KEY_TO_SPEC = {key.split("~")[0]: (key, *spec) for key, spec in _SCHEMA.items()}


@dataclass(frozen=True)
class Scenario:
    """A fully resolved experiment description (values dict is in file units)."""

    name: str
    joint: JointModel
    initial_q: float
    handle_offset: Pose
    mech: MechanismForces
    grasp: GraspCoupling
    controller: AdmittanceParams
    runner: RunnerConfig
    force_limit: float
    replicates: int
    seed_base: int
    values: dict = field(repr=False, default_factory=dict)


def parse_scenario_text(text: str) -> dict:
    """Raw key -> value map from scenario text; syntax errors carry line/col."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(lineno, raw.index(line[0]) + 1, "expected 'key = value'")
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if not _KEY_RE.match(key):
            raise ParseError(lineno, raw.find(key_part.strip() or "=") + 1, f"bad key {key!r}")
        col = raw.find("=") + 2
        value = value_part.strip()
        if not value:
            raise ParseError(lineno, col, "missing value")
        values[key] = _parse_value(value, lineno, col)
    return values


def _parse_value(tok: str, lineno: int, col: int):
    if tok.startswith("["):
        if not tok.endswith("]"):
            raise ParseError(lineno, col, "unterminated list")
        inner = tok[1:-1].strip()
        items = [s.strip() for s in inner.split(",")] if inner else []
        return [_parse_scalar(s, lineno, col) for s in items]
    return _parse_scalar(tok, lineno, col)


def _parse_scalar(tok: str, lineno: int, col: int):
    if tok in ("true", "false"):
        return tok == "true"
    if tok == "inf":
        return math.inf
    if _INT_RE.match(tok):
        return int(tok)
    try:
        return float(tok)
    except ValueError:
        if re.match(r"^[A-Za-z_][A-Za-z0-9_\-]*$", tok):
            return tok
        raise ParseError(lineno, col, f"cannot parse value {tok!r}") from None


def _as_float(key: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(key, f"expected a number, got {v!r}")
    return float(v)


def _as_vec(key: str, v, n: int) -> list[float]:
    if not isinstance(v, list) or len(v) != n:
        raise ValidationError(key, f"expected a list of {n} numbers")
    return [_as_float(key, x) for x in v]


def _resolve(values: dict) -> dict:
    """Defaults + overrides, typed and range-checked; still in file units."""
    resolved = {}
    for full_key, (kind, default, (msg, check)) in _SCHEMA.items():
        key = full_key.split("~")[0]
        v = values.get(key, default)
        if kind == "float":
            v = _as_float(key, v)
        elif kind == "int":
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValidationError(key, f"expected an integer, got {v!r}")
        elif kind == "vec3":
            v = _as_vec(key, v, 3)
        elif kind == "vec2":
            v = _as_vec(key, v, 2)
        elif kind == "word":
            if not isinstance(v, str):
                raise ValidationError(key, f"expected a word, got {v!r}")
        elif kind == "vec3|word":
            if not (isinstance(v, str) or (isinstance(v, list) and len(v) == 3)):
                raise ValidationError(key, "expected a list of 3 numbers or 'critical'")
            if isinstance(v, str) and v != "critical":
                raise ValidationError(key, "expected a list of 3 numbers or 'critical'")
            if isinstance(v, list):
                v = _as_vec(key, v, 3)
                if not all(x > 0 for x in v):
                    raise ValidationError(key, "must be > 0 on every axis")
        if not check(v):
            raise ValidationError(key, msg)
        resolved[key] = v
    for key in values:
        if key not in _KEY_TO_SPEC:
            raise ValidationError(key, "unknown key")
    return resolved


def _rpy_to_rotation(rpy_rad) -> np.ndarray:
    r, p, y = rpy_rad
    return so3_exp([0.0, 0.0, y]) @ so3_exp([0.0, p, 0.0]) @ so3_exp([r, 0.0, 0.0])


def build_scenario(values: dict, name_fallback: str = "scenario") -> Scenario:
    """Assemble a Scenario from a raw key->value map (file units)."""
    r = _resolve(values)
    joint_type = r["object.joint.type"]
    angular_q = joint_type in (REVOLUTE, HELICAL)

    def q_units(x: float) -> float:
        return math.radians(x) if angular_q else x

    axis_dir = r["object.joint.axis_direction"]
    axis_origin = r["object.joint.axis_origin"]
    limits = tuple(q_units(x) for x in r["object.joint.limits"])
    try:
        if joint_type == PRISMATIC:
            joint = prismatic_joint(axis_dir, q_limits=limits)
        elif joint_type == REVOLUTE:
            joint = revolute_joint(axis_dir, axis_origin, q_limits=limits)
        else:
            joint = helical_joint(axis_dir, axis_origin, r["object.joint.pitch"], q_limits=limits)
    except ValueError as e:
        raise ValidationError("object.joint", str(e)) from e

    initial_q = q_units(r["object.initial_q"])
    if not (limits[0] - 1e-12 <= initial_q <= limits[1] + 1e-12):
        raise ValidationError("object.initial_q", "must lie within object.joint.limits")

    handle_offset = Pose(
        _rpy_to_rotation([math.radians(a) for a in r["object.handle_offset.rotation_rpy"]]),
        np.array(r["object.handle_offset.translation"]),
    )
    mech = MechanismForces(
        damping=r["object.mech.damping"],
        latch_breakaway=r["object.mech.latch_breakaway"],
        latch_disengage_q=q_units(r["object.mech.latch_disengage_q"]),
        closing_spring_k=r["object.mech.closing_spring_k"],
        closing_spring_range_q=q_units(r["object.mech.closing_spring_range_q"]),
    )

    def unit_vec(key: str) -> np.ndarray:
        v = np.array(r[key], dtype=float)
        return v / np.linalg.norm(v)

    grasp = GraspCoupling(
        k_couple_trans=r["grasp.k_couple_trans"],
        k_couple_rot=r["grasp.k_couple_rot"],
        slip_torque_limit=r["grasp.slip_torque_limit"],
        slip_force_limit=r["grasp.slip_force_limit"],
        slip_viscosity_rot=r["grasp.slip_viscosity_rot"],
        slip_viscosity_trans=r["grasp.slip_viscosity_trans"],
        closing_axis=unit_vec("grasp.closing_axis"),
        handle_axis=unit_vec("grasp.handle_axis"),
        handle_half_length=r["grasp.handle_half_length"],
    )

    stiffness = np.array(r["controller.k_rot"] + r["controller.k_trans"])
    mass = np.array(r["controller.m_rot"] + r["controller.m_trans"])
    b_rot, b_trans = r["controller.b_rot"], r["controller.b_trans"]
    damping = np.empty(6)
    damping[:3] = critical_damping(stiffness[:3], mass[:3]) if b_rot == "critical" else b_rot
    damping[3:] = critical_damping(stiffness[3:], mass[3:]) if b_trans == "critical" else b_trans
    try:
        controller = AdmittanceParams(stiffness, mass, damping, frame=r["controller.frame"])
    except ValueError as e:
        raise ValidationError("controller", str(e)) from e

    target_q = q_units(r["runner.target_q"])
    if not (limits[0] <= target_q <= limits[1] + 1e-12):
        raise ValidationError("runner.target_q", "must lie within object.joint.limits")
    try:
        runner = RunnerConfig(
            target_q=target_q,
            step_dq=q_units(r["runner.step_dq"]),
            poses_per_estimate=r["runner.poses_per_estimate"],
            max_steps=r["runner.max_steps"],
            dt=r["runner.dt"],
            motion_time=r["runner.motion_time"],
            pose_noise=PoseNoise(
                r["runner.noise.sigma_translation"],
                math.radians(r["runner.noise.sigma_rotation"]),
            ),
            estimator_noise=NoiseModel(
                r["estimator.sigma_translation"],
                math.radians(r["estimator.sigma_rotation"]),
            ),
            success_threshold=r["runner.success_threshold"],
        )
    except ValueError as e:
        raise ValidationError("runner", str(e)) from e

    name = r["name"] if "name" in values else name_fallback
    return Scenario(
        name=name,
        joint=joint,
        initial_q=initial_q,
        handle_offset=handle_offset,
        mech=mech,
        grasp=grasp,
        controller=controller,
        runner=runner,
        force_limit=r["runner.force_limit"],
        replicates=r["replicates"],
        seed_base=r["seed_base"],
        values=dict(r, name=name),
    )


def load_scenario(path) -> Scenario:
    """Parse, default-fill, and validate a scenario file."""
    p = Path(path)
    text = p.read_text()
    return build_scenario(parse_scenario_text(text), name_fallback=p.stem)


def scenario_to_text(scenario: Scenario) -> str:
    """Serialize every resolved key (file units); load round-trips exactly."""
    lines = []
    for full_key in _SCHEMA:
        key = full_key.split("~")[0]
        v = scenario.values[key]
        lines.append(f"{key} = {_format_value(v)}")
    return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def build_world(scenario: Scenario) -> World:
    """Fresh ground-truth world with the gripper grasping the handle."""
    start = part_pose(scenario.joint, scenario.initial_q) @ scenario.handle_offset
    return World(
        joint=scenario.joint,
        grasp=replace(scenario.grasp),
        mech=scenario.mech,
        gripper_pose=start,
        q=scenario.initial_q,
        handle_offset=scenario.handle_offset,
        force_limit=scenario.force_limit,
    )


def builtin_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (name without extension)."""
    res = resources.files("propriosim") / "scenarios" / f"{name}.scenario"
    with resources.as_file(res) as p:
        return Path(p)


def list_builtin_scenarios() -> list[str]:
    folder = resources.files("propriosim") / "scenarios"
    return sorted(p.name[: -len(".scenario")] for p in folder.iterdir() if p.name.endswith(".scenario"))
