"""The 50 Hz agent-to-simulator command contract and setpoint interpolation.

A command carries desired joint positions (plus velocities/accelerations for
the richer modes) and an interpolation mode; the simulator expands it into
per-millisecond setpoints over the 20 ms control tick. Polynomial orders match
the boundary conditions each mode constrains: linear/quadratic for pure
position control, linear/cubic/quartic for position+velocity, quintic when
acceleration is commanded too, and a direct mode that bypasses interpolation
with explicit 1 kHz samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

CONTROL_PERIOD_MS = 20


class InterpolationMode(str, enum.Enum):
    POS_LINEAR = "pos-linear"
    POS_QUADRATIC = "pos-quadratic"
    POSVEL_LINEAR = "posvel-linear"
    POSVEL_CUBIC = "posvel-cubic"
    POSVEL_QUARTIC = "posvel-quartic"
    POSVELACC_QUINTIC = "posvelacc-quintic"
    DIRECT = "direct-1khz"


class CommandError(ValueError):
    """A command is missing fields its mode requires, or is malformed."""


@dataclass
class Command:
    mode: InterpolationMode
    q_des: Optional[np.ndarray] = None
    qdot_des: Optional[np.ndarray] = None
    qddot_des: Optional[np.ndarray] = None
    samples_q: Optional[np.ndarray] = None      # (horizon_ms, dof) for direct mode
    samples_qdot: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mode = InterpolationMode(self.mode)
        for name in ("q_des", "qdot_des", "qddot_des", "samples_q", "samples_qdot"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))


class Boundary(NamedTuple):
    """State at the end of the previous command segment."""

    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray


class SetpointSegment(NamedTuple):
    q: np.ndarray      # (horizon_ms, dof), sample k is the setpoint at (k+1) ms
    qdot: np.ndarray   # (horizon_ms, dof)
    end_qddot: np.ndarray


_NEEDS_VEL = {InterpolationMode.POSVEL_LINEAR, InterpolationMode.POSVEL_CUBIC,
              InterpolationMode.POSVEL_QUARTIC, InterpolationMode.POSVELACC_QUINTIC}


def _check_fields(cmd: Command, horizon_ms: int):
    if cmd.mode is InterpolationMode.DIRECT:
        if cmd.samples_q is None or cmd.samples_qdot is None:
            raise CommandError("direct-1khz commands need samples_q and samples_qdot")
        if cmd.samples_q.shape[0] != horizon_ms or cmd.samples_qdot.shape != cmd.samples_q.shape:
            raise CommandError(f"direct samples must cover {horizon_ms} ms")
        return
    if cmd.q_des is None:
        raise CommandError(f"{cmd.mode.value} commands need q_des")
    if not np.all(np.isfinite(cmd.q_des)):
        raise CommandError("q_des must be finite")
    if cmd.mode in _NEEDS_VEL and cmd.qdot_des is None:
        raise CommandError(f"{cmd.mode.value} commands need qdot_des")
    if cmd.mode is InterpolationMode.POSVELACC_QUINTIC and cmd.qddot_des is None:
        raise CommandError("posvelacc-quintic commands need qddot_des")


def _polyval_stack(coeffs: np.ndarray, t: np.ndarray):
    """Evaluate per-joint polynomials and their derivative at times t.

    coeffs has shape (order+1, dof), ascending powers.
    """
    order = coeffs.shape[0] - 1
    powers = t[:, None] ** np.arange(order + 1)[None, :]
    q = powers @ coeffs
    dcoeffs = coeffs[1:] * np.arange(1, order + 1)[:, None]
    dpowers = t[:, None] ** np.arange(order)[None, :]
    qdot = dpowers @ dcoeffs
    return q, qdot


def interpolate_command(boundary: Boundary, cmd: Command,
                        horizon_ms: int = CONTROL_PERIOD_MS) -> SetpointSegment:
    """Expand one command into per-ms (q, qdot) setpoints over the tick.

    The segment starts at the boundary at t=0 and reaches the commanded values
    at t=horizon; sample k is taken at (k+1) ms.
    """
    _check_fields(cmd, horizon_ms)
    T = horizon_ms * 1e-3
    q0 = np.asarray(boundary.q, dtype=float)
    v0 = np.asarray(boundary.qdot, dtype=float)
    a0 = np.asarray(boundary.qddot, dtype=float)
    t = np.arange(1, horizon_ms + 1) * 1e-3

    if cmd.mode is InterpolationMode.DIRECT:
        return SetpointSegment(cmd.samples_q.copy(), cmd.samples_qdot.copy(),
                               np.zeros_like(q0))

    q1 = cmd.q_des
    if q1.shape != q0.shape:
        raise CommandError("command dimension does not match boundary")

    if cmd.mode is InterpolationMode.POS_LINEAR:
        slope = (q1 - q0) / T
        qs = q0[None, :] + t[:, None] * slope[None, :]
        qds = np.broadcast_to(slope, qs.shape).copy()
        return SetpointSegment(qs, qds, np.zeros_like(q0))

    if cmd.mode is InterpolationMode.POS_QUADRATIC:
        c2 = (q1 - q0 - v0 * T) / T**2
        coeffs = np.stack([q0, v0, c2])
    elif cmd.mode is InterpolationMode.POSVEL_LINEAR:
        v1 = cmd.qdot_des
        slope = (q1 - q0) / T
        qs = q0[None, :] + t[:, None] * slope[None, :]
        qds = v0[None, :] + (t / T)[:, None] * (v1 - v0)[None, :]
        return SetpointSegment(qs, qds, np.zeros_like(q0))
    elif cmd.mode is InterpolationMode.POSVEL_CUBIC:
        v1 = cmd.qdot_des
        c2 = (3 * (q1 - q0) - (2 * v0 + v1) * T) / T**2
        c3 = (-2 * (q1 - q0) + (v0 + v1) * T) / T**3
        coeffs = np.stack([q0, v0, c2, c3])
    elif cmd.mode is InterpolationMode.POSVEL_QUARTIC:
        v1 = cmd.qdot_des
        # q(0)=q0, q'(0)=v0, q''(0)=a0, q(T)=q1, q'(T)=v1
        dq = q1 - q0 - v0 * T - 0.5 * a0 * T**2
        dv = v1 - v0 - a0 * T
        c3 = (4 * dq - dv * T) / T**3
        c4 = (dv * T - 3 * dq) / T**4
        coeffs = np.stack([q0, v0, 0.5 * a0, c3, c4])
    else:  # quintic
        v1 = cmd.qdot_des
        a1 = cmd.qddot_des
        dq = q1 - q0 - v0 * T - 0.5 * a0 * T**2
        dv = v1 - v0 - a0 * T
        da = a1 - a0
        c3 = (20 * dq - 8 * dv * T + da * T**2) / (2 * T**3)
        c4 = (-30 * dq + 14 * dv * T - 2 * da * T**2) / (2 * T**4)
        c5 = (12 * dq - 6 * dv * T + da * T**2) / (2 * T**5)
        coeffs = np.stack([q0, v0, 0.5 * a0, c3, c4, c5])

    qs, qds = _polyval_stack(coeffs, t)
    # end acceleration = second derivative of the polynomial at T
    order = coeffs.shape[0] - 1
    if order >= 2:
        ddc = coeffs[2:] * (np.arange(2, order + 1) * np.arange(1, order))[:, None]
        end_acc = (np.array([T**k for k in range(order - 1)]) @ ddc)
    else:
        end_acc = np.zeros_like(q0)
    return SetpointSegment(qs, qds, end_acc)


def hold_command(q: np.ndarray) -> Command:
    """Constant-position fallback used when a malformed command arrives."""
    return Command(mode=InterpolationMode.POS_LINEAR, q_des=np.asarray(q, dtype=float).copy())
