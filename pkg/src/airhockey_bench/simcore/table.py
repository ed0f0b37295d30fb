"""Table geometry, puck state and physical parameters.

World frame convention: the agent's goal line is at x = 0, the opponent's at
x = length; y is centered on the table axis. Centered coordinates (table
center at the origin) are used by reward functions and rule controllers;
`to_centered` / `from_centered` convert the x component.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

Z_TABLE = 0.1645

DEFAULT_LENGTH = 1.948
DEFAULT_WIDTH = 1.038
DEFAULT_GOAL_WIDTH = 0.25
DEFAULT_PUCK_RADIUS = 0.03165
DEFAULT_MALLET_RADIUS = 0.04815
EE_HEIGHT_BAND = 0.02


@dataclass(frozen=True)
class TableGeometry:
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH
    goal_width: float = DEFAULT_GOAL_WIDTH
    z_table: float = Z_TABLE
    puck_radius: float = DEFAULT_PUCK_RADIUS
    mallet_radius: float = DEFAULT_MALLET_RADIUS
    # End-effector workspace bounds (world frame). l_x keeps the mallet on the
    # table; the y band keeps it away from the rails.
    l_x: float = DEFAULT_MALLET_RADIUS
    l_y: float = -(DEFAULT_WIDTH / 2 - DEFAULT_MALLET_RADIUS)
    u_y: float = DEFAULT_WIDTH / 2 - DEFAULT_MALLET_RADIUS

    def __post_init__(self):
        if min(self.length, self.width, self.goal_width, self.puck_radius, self.mallet_radius) <= 0:
            raise ValueError("geometry lengths must be positive")
        if self.goal_width >= self.width:
            raise ValueError("goal_width must be smaller than width")

    @property
    def half_width(self) -> float:
        return self.width / 2

    @property
    def wall_y(self) -> float:
        """y coordinate of the puck center when touching a side rail."""
        return self.width / 2 - self.puck_radius

    def to_centered(self, x: float) -> float:
        return x - self.length / 2

    def from_centered(self, x: float) -> float:
        return x + self.length / 2

    def inside_goal_mouth(self, y: float) -> bool:
        return abs(y) <= self.goal_width / 2


@dataclass
class PuckState:
    x: float = DEFAULT_LENGTH / 2
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def vel(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    @property
    def speed(self) -> float:
        return float(np.hypot(self.vx, self.vy))

    def copy(self) -> "PuckState":
        return replace(self)


@dataclass(frozen=True)
class PuckParams:
    """Sliding decay, restitutions, spin coupling and airflow disturbance."""

    slide_friction: float = 0.06  # 1/s exponential speed decay
    wall_restitution: float = 0.85
    mallet_restitution: float = 0.90
    spin_coupling: float = 0.0
    disturbance_std: float = 0.0  # m/s^2, Gaussian acceleration when > 0

    def __post_init__(self):
        if not (0 < self.wall_restitution <= 1 and 0 < self.mallet_restitution <= 1):
            raise ValueError("restitutions must be in (0, 1]")
        if self.slide_friction < 0 or self.disturbance_std < 0:
            raise ValueError("friction and disturbance must be non-negative")


@dataclass(frozen=True)
class MalletState:
    """Kinematic mallet disc on the table plane."""

    pos: np.ndarray
    vel: np.ndarray

    @staticmethod
    def at(x: float, y: float, vx: float = 0.0, vy: float = 0.0) -> "MalletState":
        return MalletState(pos=np.array([x, y]), vel=np.array([vx, vy]))
