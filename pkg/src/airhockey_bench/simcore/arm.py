"""Setpoint-level arm tracking: ideal or first-order lag with a gain knob.

The lag model is q' = g*q_s + (q - g*q_s) * exp(-dt/tau): tau is the time
constant and g a DC-gain mismatch factor (g != 1 leaves a steady-state
tracking error, which is what the model-mismatch ablation perturbs). The
exact exponential discretization keeps the tau -> 0 limit equal to ideal
tracking at any dt. Realized velocity is the finite difference of the tracked
position so mallet contact impulses see the motion that actually happened.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class TrackingMode(str, enum.Enum):
    IDEAL = "ideal"
    FIRST_ORDER_LAG = "first-order-lag"


@dataclass(frozen=True)
class ArmTrackingModel:
    mode: TrackingMode = TrackingMode.IDEAL
    tau: float = 0.02
    gain_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", TrackingMode(self.mode))
        if self.mode is TrackingMode.FIRST_ORDER_LAG and self.tau <= 0:
            raise ValueError("tau must be positive in lag mode")


def step_arm(model: ArmTrackingModel, q: np.ndarray, qdot: np.ndarray,
             q_s: np.ndarray, qdot_s: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if model.mode is TrackingMode.IDEAL:
        return np.array(q_s, dtype=float, copy=True), np.array(qdot_s, dtype=float, copy=True)
    alpha = math.exp(-dt / model.tau)
    target = model.gain_scale * np.asarray(q_s, dtype=float)
    q_next = target + (np.asarray(q, dtype=float) - target) * alpha
    return q_next, (q_next - q) / dt
