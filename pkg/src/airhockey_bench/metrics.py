"""Evaluation stack: constraint checks, penalties, deployability, scoring.

Constraint violations are checked per commanded step and each metric group
charges its penalty weight at most once per episode. The deployability score
(DS) is the sum of episode penalties; thresholds split it into Deployable /
Improvable / Non-Deployable bands, with tighter bands for tournament games
(90 equivalent episodes) than for qualifying runs (1000 episodes per task).
Qualifying leaderboards group by deployability level first and rank by the
weighted task score within each level.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .kinematics import FramePoses, RobotSpec
from .simcore.puck import GoalEvent
from .simcore.table import EE_HEIGHT_BAND, TableGeometry
from .simcore.world import FaultEvent

MAX_EPISODE_STEPS = 500
COMPUTE_BUDGET_S = 0.02


class Deployability(str, enum.Enum):
    DEPLOYABLE = "Deployable"
    IMPROVABLE = "Improvable"
    NON_DEPLOYABLE = "NonDeployable"


# (deployable, improvable) upper bounds per stage
STAGE_THRESHOLDS = {
    "qualifying": (500.0, 1500.0),
    "tournament": (45.0, 135.0),
}


@dataclass(frozen=True)
class ConstraintSet:
    """Joint, end-effector and link constraints (strict inequalities)."""

    q_upper: np.ndarray
    q_lower: np.ndarray
    qdot_limit: np.ndarray
    l_x: float
    l_y: float
    u_y: float
    z_table: float
    z_band: float = EE_HEIGHT_BAND
    link_min_z: float = 0.25

    @staticmethod
    def from_specs(spec: RobotSpec, geom: TableGeometry) -> "ConstraintSet":
        return ConstraintSet(q_upper=spec.q_upper, q_lower=spec.q_lower,
                             qdot_limit=spec.qdot_limit, l_x=geom.l_x,
                             l_y=geom.l_y, u_y=geom.u_y, z_table=geom.z_table)


class ViolationFlags(NamedTuple):
    joint_pos: bool
    joint_vel: bool
    ee: bool
    link: bool

    def any(self) -> bool:
        return self.joint_pos or self.joint_vel or self.ee or self.link


def check_constraints(q_cmd: np.ndarray, qdot_cmd: np.ndarray, poses: FramePoses,
                      cset: ConstraintSet) -> ViolationFlags:
    q_cmd = np.asarray(q_cmd, dtype=float)
    qdot_cmd = np.asarray(qdot_cmd, dtype=float)
    joint_pos = bool(np.any(q_cmd <= cset.q_lower) or np.any(q_cmd >= cset.q_upper))
    joint_vel = bool(np.any(np.abs(qdot_cmd) >= cset.qdot_limit))
    x, y, z = poses.ee
    ee = not (x > cset.l_x and cset.l_y < y < cset.u_y
              and abs(z - cset.z_table) < cset.z_band)
    link = not (poses.elbow_z > cset.link_min_z and poses.wrist_z > cset.link_min_z)
    return ViolationFlags(joint_pos=joint_pos, joint_vel=joint_vel, ee=ee, link=link)


@dataclass(frozen=True)
class PenaltyWeights:
    """Penalty points per violated metric, charged once per episode.

    Link-height violations score under the end-effector metric, so the
    per-episode cap stays at ee + joint_pos + joint_vel + max compute band.
    """

    ee_position: float = 3.0
    joint_position: float = 2.0
    joint_velocity: float = 1.0
    compute_avg: float = 2.0     # average step time over budget
    compute_max_high: float = 1.0   # max step time over 2x budget
    compute_max_low: float = 0.5    # max step time over budget
    compute_budget_s: float = COMPUTE_BUDGET_S

    @property
    def episode_cap(self) -> float:
        return self.ee_position + self.joint_position + self.joint_velocity + self.compute_avg


def compute_time_penalty(compute_times: Sequence[float], weights: PenaltyWeights) -> float:
    times = np.asarray(list(compute_times), dtype=float)
    if times.size == 0:
        return 0.0
    budget = weights.compute_budget_s
    if times.mean() > budget:
        return weights.compute_avg
    if times.max() > 2 * budget:
        return weights.compute_max_high
    if times.max() > budget:
        return weights.compute_max_low
    return 0.0


def accumulate_episode(flags_per_step: Sequence[ViolationFlags],
                       compute_times: Sequence[float],
                       weights: PenaltyWeights = PenaltyWeights()) -> float:
    """Episode penalty: each violated metric charges its weight once."""
    flags = list(flags_per_step)
    if len(flags) > MAX_EPISODE_STEPS:
        raise ValueError(f"an episode has at most {MAX_EPISODE_STEPS} steps")
    total = 0.0
    if any(f.ee or f.link for f in flags):
        total += weights.ee_position
    if any(f.joint_pos for f in flags):
        total += weights.joint_position
    if any(f.joint_vel for f in flags):
        total += weights.joint_velocity
    total += compute_time_penalty(compute_times, weights)
    return total


@dataclass
class PenaltyLedger:
    """Per-match penalty accumulation over 500-step episodes."""

    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    score: float = 0.0
    episodes: int = 0
    _flags: list = field(default_factory=list)
    _times: list = field(default_factory=list)

    def record_step(self, flags: ViolationFlags, compute_time: Optional[float] = None):
        self._flags.append(flags)
        if compute_time is not None:
            self._times.append(compute_time)
        if len(self._flags) >= MAX_EPISODE_STEPS:
            self.end_episode()

    def end_episode(self) -> float:
        if not self._flags and not self._times:
            return 0.0
        pts = accumulate_episode(self._flags, self._times, self.weights)
        self.score += pts
        self.episodes += 1
        self._flags.clear()
        self._times.clear()
        return pts

    def charge_forfeit_episodes(self, n: int):
        """Charge n episodes at the per-episode cap (agent failure rule)."""
        self.score += n * self.weights.episode_cap
        self.episodes += n


def classify_deployability(ds: float, stage: str) -> Deployability:
    if ds < 0:
        raise ValueError("deployability score must be non-negative")
    try:
        deployable, improvable = STAGE_THRESHOLDS[stage]
    except KeyError:
        raise ValueError(f"unknown stage {stage!r}") from None
    if ds <= deployable:
        return Deployability.DEPLOYABLE
    if ds <= improvable:
        return Deployability.IMPROVABLE
    return Deployability.NON_DEPLOYABLE


@dataclass(frozen=True)
class SuccessCriteria:
    """Task success thresholds. Region coordinates are centered on the table."""

    hit_min_speed: float = 0.25
    defend_max_speed: float = 0.10
    prepare_max_speed: float = 0.10
    prepare_region_x: tuple[float, float] = (-0.7, -0.3)
    prepare_region_y: tuple[float, float] = (-0.4, 0.4)


@dataclass
class EpisodeTrace:
    """What judge_task needs: per-step puck snapshots in centered coordinates
    plus the episode's events."""

    puck_x: list = field(default_factory=list)      # centered x
    puck_y: list = field(default_factory=list)
    puck_speed: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, x_centered: float, y: float, speed: float):
        self.puck_x.append(x_centered)
        self.puck_y.append(y)
        self.puck_speed.append(speed)


def judge_task(task: str, trace: EpisodeTrace,
               criteria: SuccessCriteria = SuccessCriteria()) -> bool:
    """Task success per the qualifying rules.

    hit: the opponent goal was crossed at or above the speed threshold.
    defend: the final puck is slow, on the agent's half, no goal conceded,
    and the puck never returned to the opponent half after first reaching
    the agent's side. prepare: the final puck rests inside the target region
    below the speed threshold.
    """
    if not trace.puck_x:
        return False
    if task == "hit":
        return any(isinstance(e, GoalEvent) and e.scoring_side == 0
                   and e.speed >= criteria.hit_min_speed for e in trace.events)
    if task == "defend":
        if any(isinstance(e, GoalEvent) for e in trace.events):
            return False
        xs = np.asarray(trace.puck_x)
        arrived = np.nonzero(xs < 0)[0]
        if arrived.size == 0:
            return False
        if np.any(xs[arrived[0]:] > 0):
            return False  # bounced back to the opponent half
        return trace.puck_speed[-1] <= criteria.defend_max_speed
    if task == "prepare":
        x, y = trace.puck_x[-1], trace.puck_y[-1]
        (x0, x1), (y0, y1) = criteria.prepare_region_x, criteria.prepare_region_y
        return (x0 <= x <= x1 and y0 <= y <= y1
                and trace.puck_speed[-1] <= criteria.prepare_max_speed)
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class FaultRule:
    faults_per_point: int = 3


@dataclass
class MatchScore:
    goals: tuple[int, int]
    faults: tuple[int, int]
    fault_points: tuple[int, int]
    final: tuple[int, int]
    outcome: tuple[str, str]
    points: tuple[int, int]


def score_match(events: Iterable, fault_rule: FaultRule = FaultRule(),
                outcome_points: tuple[int, int, int] = (3, 1, 0)) -> MatchScore:
    """Count goals and faults into the final match score.

    Every `faults_per_point` faults by one side award a point to the other;
    the higher final score wins and win/draw/loss map to outcome_points.
    """
    goals = [0, 0]
    faults = [0, 0]
    for e in events:
        if isinstance(e, GoalEvent):
            goals[e.scoring_side] += 1
        elif isinstance(e, FaultEvent):
            faults[e.side] += 1
    fault_pts = [faults[1] // fault_rule.faults_per_point,
                 faults[0] // fault_rule.faults_per_point]
    final = [goals[0] + fault_pts[0], goals[1] + fault_pts[1]]
    win, draw, loss = outcome_points
    if final[0] > final[1]:
        outcome, points = ("win", "loss"), (win, loss)
    elif final[0] < final[1]:
        outcome, points = ("loss", "win"), (loss, win)
    else:
        outcome, points = ("draw", "draw"), (draw, draw)
    return MatchScore(goals=tuple(goals), faults=tuple(faults),
                      fault_points=tuple(fault_pts), final=tuple(final),
                      outcome=outcome, points=points)


# Qualifying task score weights; reproduce the published score column.
DEFAULT_TASK_WEIGHTS = {"hit": 0.4, "defend": 0.4, "prepare": 0.2}


@dataclass(frozen=True)
class ScoreRow:
    name: str
    hit_success: float       # fractions in [0, 1]
    defend_success: float
    prepare_success: float
    penalty_points: float

    def score(self, weights: Optional[dict] = None) -> float:
        w = weights or DEFAULT_TASK_WEIGHTS
        return 100.0 * (w["hit"] * self.hit_success
                        + w["defend"] * self.defend_success
                        + w["prepare"] * self.prepare_success)


_LEVEL_ORDER = {Deployability.DEPLOYABLE: 0, Deployability.IMPROVABLE: 1,
                Deployability.NON_DEPLOYABLE: 2}


def qualifying_rank(rows: Sequence[ScoreRow], stage: str = "qualifying",
                    weights: Optional[dict] = None) -> list[tuple[ScoreRow, Deployability, float]]:
    """Leaderboard: group by deployability level, rank by score within group."""
    ranked = [(row, classify_deployability(row.penalty_points, stage), row.score(weights))
              for row in rows]
    ranked.sort(key=lambda item: (_LEVEL_ORDER[item[1]], -item[2], item[0].name))
    return ranked


# ---------------------------------------------------------------------------
# table emitters

LEADERBOARD_COLUMNS = ["team", "hit_success", "defend_success", "prepare_success",
                       "penalty_points", "score", "level"]


def _leaderboard_records(ranked) -> list[dict]:
    return [{
        "team": row.name,
        "hit_success": round(100 * row.hit_success, 1),
        "defend_success": round(100 * row.defend_success, 1),
        "prepare_success": round(100 * row.prepare_success, 1),
        "penalty_points": row.penalty_points,
        "score": round(score, 1),
        "level": level.value,
    } for row, level, score in ranked]


def leaderboard_text(ranked) -> str:
    recs = _leaderboard_records(ranked)
    header = f"{'Team':20s} {'Hit%':>6s} {'Def%':>6s} {'Prep%':>6s} {'Penalty':>8s} {'Score':>6s}  Level"
    lines = [header, "-" * len(header)]
    level = None
    for r in recs:
        if r["level"] != level:
            level = r["level"]
            lines.append(f"-- {level} --")
        lines.append(f"{r['team']:20s} {r['hit_success']:6.1f} {r['defend_success']:6.1f} "
                     f"{r['prepare_success']:6.1f} {r['penalty_points']:8.1f} {r['score']:6.1f}  {r['level']}")
    return "\n".join(lines)


def leaderboard_csv(ranked) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=LEADERBOARD_COLUMNS)
    writer.writeheader()
    writer.writerows(_leaderboard_records(ranked))
    return buf.getvalue()


def leaderboard_json(ranked) -> str:
    return json.dumps(_leaderboard_records(ranked), indent=2)


def match_score_record(names: tuple[str, str], score: MatchScore) -> dict:
    return {
        "match": f"{names[0]} x {names[1]}",
        "final": f"{score.final[0]}-{score.final[1]}",
        "goals": f"{score.goals[0]}-{score.goals[1]}",
        "faults": f"{score.faults[0]}-{score.faults[1]}",
        "points": list(score.points),
    }


def standings_text(order: Sequence[tuple[str, dict]]) -> str:
    header = f"{'Team':20s} {'W':>3s} {'L':>3s} {'D':>3s} {'GS':>4s} {'GR':>4s} {'Pen':>8s} {'Pts':>4s}"
    lines = [header, "-" * len(header)]
    for name, s in order:
        lines.append(f"{name:20s} {s['wins']:3d} {s['losses']:3d} {s['draws']:3d} "
                     f"{s['goals_scored']:4d} {s['goals_received']:4d} {s['penalty']:8.1f} {s['points']:4d}")
    return "\n".join(lines)
