"""Published reward functions of the three reference agent families.

All positions are centered table coordinates (own goal toward -x). Each
function is a pure, total map from a TransitionRecord; case expressions
follow the published forms exactly, with scoring cases taking precedence
over contact cases over approach shaping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..policies import Strategy
from ..simcore.table import TableGeometry

AIRHOCKIT_TASKS = ("hit", "defend_slow", "defend_fast", "prepare_close", "prepare_far")


@dataclass(frozen=True)
class TransitionRecord:
    """Carrier for reward inputs: puck/EE kinematics plus event flags."""

    puck_pos: np.ndarray
    puck_vel: np.ndarray
    ee_pos: np.ndarray
    ee_vel: np.ndarray
    hit: bool = False            # EE-puck contact at this step
    touched_before: bool = False  # contact happened at an earlier step
    scored: bool = False
    conceded: bool = False
    own_fault: bool = False
    terminal: bool = False
    t: int = 0
    T: int = 500

    def __post_init__(self):
        for name in ("puck_pos", "puck_vel", "ee_pos", "ee_vel"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if (self.scored or self.conceded) and not self.terminal:
            raise ValueError("a goal ends the episode")

    @property
    def first_touch(self) -> bool:
        return self.hit and not self.touched_before

    @property
    def puck_speed(self) -> float:
        return float(np.linalg.norm(self.puck_vel))


def _approach_reward(tr: TransitionRecord) -> float:
    """max(0, unit(p_p - p_ee) . v_ee): move the end-effector at the puck."""
    d = tr.puck_pos - tr.ee_pos
    norm = np.linalg.norm(d)
    if norm < 1e-9:
        return 0.0
    return max(0.0, float(d @ tr.ee_vel) / norm)


def reward_airhockit(task: str, tr: TransitionRecord,
                     geom: TableGeometry = TableGeometry()) -> float:
    """Per-task shaped rewards of the five specialized agents."""
    if task == "hit":
        if tr.scored:
            return 2000.0 + 5000.0 * tr.puck_speed
        if tr.hit:
            return 10.0 * tr.puck_speed
        if tr.puck_speed < 0.25 and tr.puck_pos[0] < 0:
            return _approach_reward(tr)
        return 0.0

    if task == "defend_slow":
        total = 0.0
        matched = False
        if tr.first_touch and tr.puck_vel[0] > -0.2:
            total += 30.0 + 100.0 ** (1.0 - 0.25 * tr.puck_speed)
            matched = True
        if (tr.t == tr.T and tr.puck_speed < 0.1
                and -0.7 < tr.puck_pos[0] < -0.2):
            total += 70.0
            matched = True
        return total if matched else 0.01

    if task == "defend_fast":
        return -100.0 if tr.conceded else 0.0

    if task == "prepare_close":
        proximity = 0.0
        if tr.puck_speed < 0.25 and tr.puck_pos[0] < 0:
            proximity = _approach_reward(tr)
        bonus = 0.0
        if (tr.puck_speed < 0.5 and -0.65 < tr.puck_pos[0] < -0.35
                and -0.4 < tr.puck_pos[1] < 0.4):
            bonus = 2000.0
        target = np.array([-0.5, 0.0]) - tr.puck_pos
        norm = np.linalg.norm(target)
        toward = float(target @ tr.puck_vel) / norm if norm > 1e-9 else 0.0
        return proximity + bonus + 10.0 * max(0.0, min(0.5, toward))

    if task == "prepare_far":
        if tr.puck_speed < 0.25 and tr.puck_pos[0] < 0:
            return _approach_reward(tr)
        if tr.puck_pos[0] > 0.2:
            return 3000.0
        return 10.0 * tr.puck_speed

    raise ValueError(f"unknown task {task!r}")


# sparse event rewards per strategy: (score, concede, own fault)
SPACER_REWARD_TABLE = {
    Strategy.BALANCED: {"score": 2.0 / 3.0, "concede": -1.0, "own_fault": -1.0 / 3.0},
    Strategy.AGGRESSIVE: {"score": 1.0, "concede": -1.0, "own_fault": -1.0 / 3.0},
    Strategy.DEFENSIVE: {"score": 0.0, "concede": -1.0, "own_fault": -1.0 / 3.0},
}


def reward_spacer(event: str, strategy: Strategy = Strategy.BALANCED) -> float:
    if event == "none":
        return 0.0
    table = SPACER_REWARD_TABLE[Strategy(strategy)]
    if event not in table:
        raise ValueError(f"unknown event {event!r}")
    return table[event]


@dataclass(frozen=True)
class TriangleRewardParams:
    A: float = 100.0
    B: float = 10.0
    gamma: float = 0.99
    table_diag: float = math.hypot(1.948, 1.038)
    max_vel: float = 2.5

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")


@dataclass(frozen=True)
class HitTriangle:
    """Triangle from the hit-time puck position to the opponent goal posts."""

    apex: np.ndarray
    post_lo: np.ndarray
    post_hi: np.ndarray

    @staticmethod
    def at_hit(puck_pos: np.ndarray, geom: TableGeometry = TableGeometry()) -> "HitTriangle":
        gx = geom.length / 2   # opponent goal line, centered coordinates
        return HitTriangle(apex=np.asarray(puck_pos, dtype=float).copy(),
                           post_lo=np.array([gx, -geom.goal_width / 2]),
                           post_hi=np.array([gx, geom.goal_width / 2]))

    @property
    def degenerate(self) -> bool:
        area2 = abs(np.cross(self.post_lo - self.apex, self.post_hi - self.apex))
        return area2 < 1e-12

    def contains(self, p: np.ndarray) -> bool:
        if self.degenerate:
            return True
        p = np.asarray(p, dtype=float)
        verts = (self.apex, self.post_lo, self.post_hi)
        signs = []
        for i in range(3):
            a, b = verts[i], verts[(i + 1) % 3]
            signs.append(float(np.cross(b - a, p - a)))
        return all(s >= -1e-12 for s in signs) or all(s <= 1e-12 for s in signs)

    def border_angles(self) -> tuple[float, float]:
        lo = self.post_lo - self.apex
        hi = self.post_hi - self.apex
        return (math.atan2(lo[1], lo[0]), math.atan2(hi[1], hi[0]))


def _wrap_angle(a: float) -> float:
    return math.remainder(a, 2 * math.pi)


def reward_rl3_hit(tr: TransitionRecord, params: TriangleRewardParams,
                   triangle: Optional[HitTriangle] = None,
                   geom: TableGeometry = TableGeometry()) -> float:
    """Triangle-shaped hit reward.

    Before contact the agent is pulled toward the puck; the contact step pays
    a bonus favoring straight, fast strikes; afterwards the puck is rewarded
    inside the puck-to-goal triangle and penalized by its angular distance to
    the nearest border outside it. A goal pays the discounted-return bound.
    """
    if tr.scored:
        return 1.0 / (1.0 - params.gamma)
    if tr.hit and not tr.touched_before:
        alpha = math.atan2(tr.ee_vel[1], tr.ee_vel[0])
        straightness = 1.0 - (2.0 * alpha / math.pi) ** 2
        return params.A + params.B * straightness * float(np.linalg.norm(tr.ee_vel)) / params.max_vel
    if not (tr.hit or tr.touched_before):
        return -float(np.linalg.norm(tr.ee_pos - tr.puck_pos)) / (0.5 * params.table_diag)
    tri = triangle or HitTriangle.at_hit(tr.puck_pos, geom)
    if tri.contains(tr.puck_pos):
        return params.B + tr.puck_speed
    vel_angle = math.atan2(tr.puck_vel[1], tr.puck_vel[0])
    diff = min(abs(_wrap_angle(vel_angle - b)) for b in tri.border_angles())
    return -diff
