"""Deployment safety layer: trajectory extension and IK height correction.

Actions arrive every 20 ms but the executed trajectory always covers the next
100 ms: the segment ramps linearly from the current state to the action over
the first 20 ms and then continues with a constant-velocity model, so a late
action never leaves the controller without setpoints. Height correction nudges
joint commands whose end-effector would leave the table-height band back onto
the plane; corrections beyond what one tick of joint motion can deliver are
flagged unsafe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..kinematics import RobotSpec, forward_kinematics, ik_step, DEFAULT_Z_WEIGHT
from .commands import Command, InterpolationMode
from .table import EE_HEIGHT_BAND, TableGeometry

EXTENSION_MS = 100
ACTION_MS = 20


def safety_extend_trajectory(q: np.ndarray, qdot: np.ndarray,
                             action_q: np.ndarray, action_qdot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expand one (position, velocity) action into a 100 ms setpoint sequence.

    Sample k is the setpoint at (k+1) ms: linear ramp to the action over the
    first 20 ms, then constant-velocity extension. Returns (qs, qdots) with
    shape (100, dof).
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    action_q = np.asarray(action_q, dtype=float)
    action_qdot = np.asarray(action_qdot, dtype=float)
    t = np.arange(1, EXTENSION_MS + 1) * 1e-3
    T = ACTION_MS * 1e-3
    qs = np.empty((EXTENSION_MS, q.size))
    qds = np.empty_like(qs)
    ramp = t <= T + 1e-12
    frac = (t[ramp] / T)[:, None]
    qs[ramp] = q[None, :] + frac * (action_q - q)[None, :]
    qds[ramp] = qdot[None, :] + frac * (action_qdot - qdot)[None, :]
    tail = ~ramp
    qs[tail] = action_q[None, :] + (t[tail] - T)[:, None] * action_qdot[None, :]
    qds[tail] = action_qdot[None, :]
    return qs, qds


@dataclass
class SetpointBuffer:
    """Holds the pending extended trajectory; a new action replaces the tail."""

    qs: np.ndarray = None
    qdots: np.ndarray = None
    cursor: int = 0

    def replace(self, q, qdot, action_q, action_qdot):
        self.qs, self.qdots = safety_extend_trajectory(q, qdot, action_q, action_qdot)
        self.cursor = 0

    def pop(self) -> tuple[np.ndarray, np.ndarray]:
        """Next 1 ms setpoint; holds the last sample once exhausted."""
        idx = min(self.cursor, EXTENSION_MS - 1)
        self.cursor += 1
        return self.qs[idx], self.qdots[idx]

    @property
    def remaining_ms(self) -> int:
        return max(0, EXTENSION_MS - self.cursor)


def safety_height_correct(spec: RobotSpec, cmd: Command, geom: TableGeometry,
                          z_weight: float = DEFAULT_Z_WEIGHT,
                          dt: float = ACTION_MS * 1e-3) -> tuple[Command, bool]:
    """Correct a joint command whose end-effector leaves the height band.

    Commands already inside z_table +/- band are returned unchanged. Otherwise
    one velocity-limited IK step pulls the commanded configuration toward the
    table plane; unsafe is True when even the clamped step cannot reach the
    band (the correction exceeds what one tick of joint motion delivers).
    """
    if cmd.mode is InterpolationMode.DIRECT or cmd.q_des is None:
        return cmd, False
    poses = forward_kinematics(spec, cmd.q_des)
    dz = geom.z_table - poses.ee[2]
    if abs(dz) <= EE_HEIGHT_BAND:
        return cmd, False
    step = ik_step(spec, cmd.q_des, np.array([0.0, 0.0, dz]), dt, z_weight=z_weight)
    q_new = cmd.q_des + step.dq
    z_new = forward_kinematics(spec, q_new).ee[2]
    unsafe = abs(z_new - geom.z_table) > EE_HEIGHT_BAND
    corrected = Command(mode=cmd.mode, q_des=q_new, qdot_des=cmd.qdot_des,
                        qddot_des=cmd.qddot_des)
    return corrected, unsafe
