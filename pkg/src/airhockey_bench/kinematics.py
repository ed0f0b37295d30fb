"""Kinematic model of the striking arm.

Serial chain of revolute joints described by standard DH triples (d, a, alpha),
followed by a fixed tool offset. Provides forward kinematics for the
end-effector plus elbow/wrist heights, the linear-velocity Jacobian, damped
weighted pseudo-inverse IK steps, and joint-limit clamping. Everything here is
a pure function of (spec, q); no hidden state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

# Nominal KUKA iiwa 14 segment lengths (base-shoulder, shoulder-elbow,
# elbow-wrist, wrist-flange) plus the mallet rod below the flange. The rod
# length puts the q_init end-effector on the table-height band.
IIWA_DH = (
    (0.36, 0.0, -math.pi / 2),
    (0.0, 0.0, math.pi / 2),
    (0.42, 0.0, math.pi / 2),
    (0.0, 0.0, -math.pi / 2),
    (0.40, 0.0, -math.pi / 2),
    (0.0, 0.0, math.pi / 2),
    (0.126, 0.0, 0.0),
)
DEFAULT_TOOL = (0.0, 0.0, 0.54)

DEFAULT_Q_UPPER = (2.967, 2.09, 2.967, 2.094, 2.967, 2.094, 3.054)
DEFAULT_Q_LOWER = (-2.967, -2.094, -2.967, -2.094, -2.967, -2.094, -3.054)
DEFAULT_QDOT_LIMIT = (1.483, 1.483, 1.745, 1.308, 2.268, 2.356, 2.356)
DEFAULT_Q_INIT = (0.0, -0.1960, 0.0, -1.8436, 0.0, 0.9704, 0.0)

DEFAULT_BASE_XYZ = (-0.40, 0.0, 0.0)

# Damped-least-squares defaults; the z direction is weighted heavily so IK
# corrections prioritize staying on the table plane.
DEFAULT_DAMPING = 1e-3
DEFAULT_Z_WEIGHT = 10.0
SINGULARITY_THRESHOLD = 1e-5


@dataclass(frozen=True)
class RobotSpec:
    """Joint limits, initial configuration and chain geometry of one arm."""

    q_upper: np.ndarray
    q_lower: np.ndarray
    qdot_limit: np.ndarray
    q_init: np.ndarray
    chain: tuple[tuple[float, float, float], ...] = IIWA_DH
    tool: tuple[float, float, float] = DEFAULT_TOOL
    base_xyz: tuple[float, float, float] = DEFAULT_BASE_XYZ
    base_yaw: float = 0.0
    elbow_index: int = 2
    wrist_index: int = 4

    def __post_init__(self):
        for name in ("q_upper", "q_lower", "qdot_limit", "q_init"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.chain)
        if not (self.q_upper.shape == self.q_lower.shape == self.qdot_limit.shape == self.q_init.shape == (n,)):
            raise ValueError(f"limit vectors must have length {n} to match the chain")
        if not np.all(self.q_lower < self.q_upper):
            raise ValueError("q_lower must be elementwise below q_upper")
        if not np.all(self.qdot_limit > 0):
            raise ValueError("qdot_limit must be positive")
        if np.any(self.q_init < self.q_lower) or np.any(self.q_init > self.q_upper):
            raise ValueError("q_init outside joint limits")
        # per-joint constants for the chain walk: cos/sin of alpha and (a, d)
        consts = tuple((math.cos(alpha), math.sin(alpha), float(a), float(d))
                       for d, a, alpha in self.chain)
        object.__setattr__(self, "_consts", consts)
        object.__setattr__(self, "_base_R", _rot_z(self.base_yaw))
        object.__setattr__(self, "_tool_v", np.asarray(self.tool, dtype=float))

    @property
    def dof(self) -> int:
        return len(self.chain)


def default_robot_spec() -> RobotSpec:
    return RobotSpec(
        q_upper=np.array(DEFAULT_Q_UPPER),
        q_lower=np.array(DEFAULT_Q_LOWER),
        qdot_limit=np.array(DEFAULT_QDOT_LIMIT),
        q_init=np.array(DEFAULT_Q_INIT),
    )


def planar_spec(lengths: Sequence[float], qdot_limit: float = 2.0) -> RobotSpec:
    """N-link arm in the x-y plane; used for closed-form checks."""
    n = len(lengths)
    return RobotSpec(
        q_upper=np.full(n, math.pi),
        q_lower=np.full(n, -math.pi),
        qdot_limit=np.full(n, qdot_limit),
        q_init=np.zeros(n),
        chain=tuple((0.0, float(l), 0.0) for l in lengths),
        tool=(0.0, 0.0, 0.0),
        base_xyz=(0.0, 0.0, 0.0),
        elbow_index=min(1, n - 1),
        wrist_index=n - 1,
    )


class FramePoses(NamedTuple):
    ee: np.ndarray  # (3,) world position of the mallet tip
    elbow_z: float
    wrist_z: float


class IKStep(NamedTuple):
    dq: np.ndarray
    degenerate: bool


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _chain_pass(spec: RobotSpec, q: np.ndarray, full: bool = True):
    """Walk the chain with column arithmetic (one trig pair per joint).

    full=True also records joint axes/origins (pre-rotation) and frame
    origins (post-transform) for the Jacobian and elbow/wrist heights.
    """
    R = spec._base_R.copy()
    p = np.asarray(spec.base_xyz, dtype=float).copy()
    if full:
        axes = np.empty((spec.dof, 3))
        origins = np.empty((spec.dof, 3))
        frames = np.empty((spec.dof, 3))
    else:
        axes = origins = frames = None
    for i, (ca, sa, a, d) in enumerate(spec._consts):
        if full:
            axes[i] = R[:, 2]
            origins[i] = p
        c, s = math.cos(q[i]), math.sin(q[i])
        x_col = R[:, 0] * c + R[:, 1] * s      # R @ Rz(q) column images
        y_col = R[:, 1] * c - R[:, 0] * s
        z_col = R[:, 2]
        p = p + x_col * a + z_col * d
        R = np.stack((x_col, y_col * ca + z_col * sa, z_col * ca - y_col * sa), axis=1)
        if full:
            frames[i] = p
    ee = p + R @ spec._tool_v
    return axes, origins, frames, ee


def ee_position(spec: RobotSpec, q: np.ndarray) -> np.ndarray:
    """End-effector position only (fast path for the 1 kHz stepper)."""
    return _chain_pass(spec, q, full=False)[3]


def forward_kinematics(spec: RobotSpec, q: Sequence[float]) -> FramePoses:
    """End-effector position and elbow/wrist heights for configuration q.

    Out-of-limit configurations are evaluable; limit handling lives in the
    metrics layer.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.dof,):
        raise ValueError(f"q must have {spec.dof} entries")
    _, _, frames, ee = _chain_pass(spec, q)
    return FramePoses(ee=ee, elbow_z=float(frames[spec.elbow_index][2]),
                      wrist_z=float(frames[spec.wrist_index][2]))


def jacobian(spec: RobotSpec, q: Sequence[float]) -> np.ndarray:
    """Linear-velocity Jacobian of the end-effector frame, shape (3, dof)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (spec.dof,):
        raise ValueError(f"q must have {spec.dof} entries")
    axes, origins, _, ee = _chain_pass(spec, q)
    return np.cross(axes, ee[None, :] - origins).T


def ik_step(spec: RobotSpec, q: Sequence[float], dx: Sequence[float], dt: float,
            z_weight: float = DEFAULT_Z_WEIGHT, damping: float = DEFAULT_DAMPING) -> IKStep:
    """One damped, z-weighted pseudo-inverse step toward displacement dx.

    The result is clipped elementwise so no joint moves faster than its
    velocity limit over dt. Near-singular configurations still return the
    damped solution and are flagged degenerate.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q = np.asarray(q, dtype=float)
    dx = np.asarray(dx, dtype=float)
    J = jacobian(spec, q)
    w = np.array([1.0, 1.0, float(z_weight)])
    Jw = J * w[:, None]
    A = J.T @ Jw + damping**2 * np.eye(spec.dof)
    dq = np.linalg.solve(A, J.T @ (w * dx))
    degenerate = np.linalg.svd(np.sqrt(w)[:, None] * J, compute_uv=False)[-1] < SINGULARITY_THRESHOLD
    cap = spec.qdot_limit * dt
    return IKStep(dq=np.clip(dq, -cap, cap), degenerate=bool(degenerate))


def clamp_joint_command(spec: RobotSpec, q_cmd: Sequence[float],
                        qdot_cmd: Sequence[float]) -> tuple[np.ndarray, np.ndarray, bool]:
    """Project a joint command into position and velocity limits."""
    q_cmd = np.asarray(q_cmd, dtype=float)
    qdot_cmd = np.asarray(qdot_cmd, dtype=float)
    q_out = np.clip(q_cmd, spec.q_lower, spec.q_upper)
    qd_out = np.clip(qdot_cmd, -spec.qdot_limit, spec.qdot_limit)
    clipped = bool(np.any(q_out != q_cmd) or np.any(qd_out != qdot_cmd))
    return q_out, qd_out, clipped


def spec_to_dict(spec: RobotSpec) -> dict:
    return {
        "q_upper": spec.q_upper.tolist(),
        "q_lower": spec.q_lower.tolist(),
        "qdot_limit": spec.qdot_limit.tolist(),
        "q_init": spec.q_init.tolist(),
        "chain": [list(j) for j in spec.chain],
        "tool": list(spec.tool),
        "base_xyz": list(spec.base_xyz),
        "base_yaw": spec.base_yaw,
        "elbow_index": spec.elbow_index,
        "wrist_index": spec.wrist_index,
    }


def spec_from_dict(data: dict) -> RobotSpec:
    defaults = spec_to_dict(default_robot_spec())
    unknown = set(data) - set(defaults)
    if unknown:
        raise ValueError(f"unknown robot spec keys: {sorted(unknown)}")
    merged = {**defaults, **data}
    return RobotSpec(
        q_upper=np.asarray(merged["q_upper"], dtype=float),
        q_lower=np.asarray(merged["q_lower"], dtype=float),
        qdot_limit=np.asarray(merged["qdot_limit"], dtype=float),
        q_init=np.asarray(merged["q_init"], dtype=float),
        chain=tuple(tuple(float(v) for v in j) for j in merged["chain"]),
        tool=tuple(float(v) for v in merged["tool"]),
        base_xyz=tuple(float(v) for v in merged["base_xyz"]),
        base_yaw=float(merged["base_yaw"]),
        elbow_index=int(merged["elbow_index"]),
        wrist_index=int(merged["wrist_index"]),
    )


def load_robot_spec(path) -> RobotSpec:
    with open(path) as f:
        return spec_from_dict(json.load(f))
