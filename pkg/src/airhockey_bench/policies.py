"""Reactive agent machinery: task-space action mapping, the four-state
composite state machine with its numbered transition conditions, polar-step
rule controllers with phase logic, the home-gated task FSM, and score-based
strategy selection.

Observation conventions: `AgentObs` positions are world frame (own goal at
x=0). The state-machine conditions operate on an x axis whose table center
sits at `x_offset` (the published conditions subtract that constant), so
`ah_obs_from` shifts accordingly; rule controllers and the FSM use centered
coordinates.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .kinematics import RobotSpec, forward_kinematics, ik_step
from .simcore.commands import Command, InterpolationMode
from .simcore.table import TableGeometry

CONTROL_DT = 0.02


# ---------------------------------------------------------------------------
# task-space action mapping


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned rectangle reachable by the mallet (world frame)."""

    x_lo: float = 0.08
    x_hi: float = 0.90
    y_lo: float = -0.46
    y_hi: float = 0.46

    def denormalize(self, a: np.ndarray) -> np.ndarray:
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        return np.array([
            self.x_lo + (a[0] + 1) / 2 * (self.x_hi - self.x_lo),
            self.y_lo + (a[1] + 1) / 2 * (self.y_hi - self.y_lo),
        ])

    def normalize(self, p: np.ndarray) -> np.ndarray:
        return np.clip(np.array([
            2 * (p[0] - self.x_lo) / (self.x_hi - self.x_lo) - 1,
            2 * (p[1] - self.y_lo) / (self.y_hi - self.y_lo) - 1,
        ]), -1.0, 1.0)

    def clamp(self, p: np.ndarray) -> np.ndarray:
        return np.array([min(max(p[0], self.x_lo), self.x_hi),
                         min(max(p[1], self.y_lo), self.y_hi)])


VELOCITY_MARGIN = 0.995  # strict velocity constraint: command inside the limit


def map_task_action(action: np.ndarray, q: np.ndarray, spec: RobotSpec,
                    geom: TableGeometry, workspace: Workspace = Workspace(),
                    z_weight: float = 10.0) -> Command:
    """Map a normalized 2D mallet target into a joint command.

    The displacement from the current end-effector to the target (z pinned to
    the table plane) goes through one z-weighted, velocity-clipped IK step;
    the resulting joint positions and velocities interpolate linearly over
    the control cycle. Velocities stay strictly inside the limits so the
    command passes the strict constraint check by construction.
    """
    target = workspace.denormalize(action)
    poses = forward_kinematics(spec, q)
    dx = np.array([target[0] - poses.ee[0], target[1] - poses.ee[1],
                   geom.z_table - poses.ee[2]])
    step = ik_step(spec, q, dx, CONTROL_DT, z_weight=z_weight)
    cap = spec.qdot_limit * CONTROL_DT * VELOCITY_MARGIN
    dq = np.clip(step.dq, -cap, cap)
    lo = spec.q_lower + (1 - VELOCITY_MARGIN) * (spec.q_upper - spec.q_lower)
    hi = spec.q_upper - (1 - VELOCITY_MARGIN) * (spec.q_upper - spec.q_lower)
    q_des = np.clip(q + dq, lo, hi)
    return Command(mode=InterpolationMode.POSVEL_LINEAR, q_des=q_des,
                   qdot_des=(q_des - q) / CONTROL_DT)


def ee_target_command(target_xy: np.ndarray, q: np.ndarray, spec: RobotSpec,
                      geom: TableGeometry, workspace: Workspace = Workspace(),
                      z_weight: float = 10.0) -> Command:
    """Convenience wrapper: absolute world-frame mallet target to command."""
    return map_task_action(workspace.normalize(workspace.clamp(target_xy)),
                           q, spec, geom, workspace, z_weight)


# ---------------------------------------------------------------------------
# composite state machine (hit / defend / prepare / ik-reset)


@dataclass(frozen=True)
class AHConditionParams:
    """Constants of the numbered transition conditions.

    x comparisons against absolute thresholds use the value recentered by
    `x_offset` (the table center in the native frame of the conditions).
    """

    x_offset: float = 1.51
    y_margin: float = 1.038 / 2 - 0.04815   # half width minus mallet radius
    approach_x: float = -0.2
    halfstep_lead: float = 0.5
    y_lead: float = 0.75
    prepare_exit_y: float = 0.41
    prepare_exit_x: float = -0.2
    still_speed: float = 0.05
    deep_x: float = -0.8
    defend_x: float = 0.3
    defend_vx: float = -0.5
    defend_vx_fast: float = -1.5
    hit_vx: float = 0.5
    hit_vy: float = 0.5
    x_lead: float = 0.75


@dataclass(frozen=True)
class AHObs:
    """Observation for the condition table: puck and EE positions with the
    table center at x_offset, velocities unchanged."""

    puck_x: float
    puck_y: float
    puck_vx: float
    puck_vy: float
    ee_x: float


def ah_obs_from(puck_pos, puck_vel, ee_pos, geom: TableGeometry,
                params: AHConditionParams = AHConditionParams()) -> AHObs:
    """Build the condition-table observation from world-frame positions."""
    shift = params.x_offset - geom.length / 2
    return AHObs(puck_x=float(puck_pos[0]) + shift, puck_y=float(puck_pos[1]),
                 puck_vx=float(puck_vel[0]), puck_vy=float(puck_vel[1]),
                 ee_x=float(ee_pos[0]) + shift)


def ah_condition(cond_id: int, obs: AHObs,
                 params: AHConditionParams = AHConditionParams()) -> bool:
    """Evaluate one numbered transition condition."""
    p = params
    dpx = obs.puck_x - p.x_offset
    dex = obs.ee_x - p.x_offset
    y, vy, vx = obs.puck_y, obs.puck_vy, obs.puck_vx
    if cond_id == 1:
        return (dpx > p.approach_x
                or dpx + p.halfstep_lead * vx > p.approach_x
                or obs.puck_x <= obs.ee_x
                or abs(y) > p.y_margin
                or abs(y + p.y_lead * vy) > p.y_margin)
    if cond_id == 2:
        return vx > p.approach_x or obs.puck_x < obs.ee_x
    if cond_id == 3:
        return abs(y) < p.prepare_exit_y or dpx > p.prepare_exit_x
    if cond_id == 4:
        return ((dpx < p.approach_x and max(abs(vx), abs(vy)) < p.still_speed)
                and (dpx <= p.deep_x or abs(y) > p.y_margin))
    if cond_id == 5:
        return ((dpx < p.defend_x and vx < p.defend_vx) or vx < p.defend_vx_fast) \
            and dex < dpx
    if cond_id == 6:
        return (dpx < p.approach_x and dpx + vx < p.approach_x
                and vx < p.hit_vx and abs(vy) < p.hit_vy
                and not (abs(y) > p.y_margin or abs(y + p.y_lead * vy) > p.y_margin)
                and dpx + p.x_lead * vx > p.deep_x)
    raise ValueError(f"unknown condition id {cond_id}")


class AHState(str, enum.Enum):
    HIT = "hit"
    DEFEND = "defend"
    PREPARE = "prepare"
    IK = "ik"


# skill emitted while in each state; the ik state runs a reset-to-home motion
AH_SKILLS = {AHState.HIT: "hit", AHState.DEFEND: "defend",
             AHState.PREPARE: "prepare", AHState.IK: "reset-to-home"}

# published transition graph: (from, condition id) -> to
AH_EDGES = {
    (AHState.HIT, 1): AHState.IK,
    (AHState.DEFEND, 2): AHState.IK,
    (AHState.PREPARE, 3): AHState.IK,
    (AHState.IK, 4): AHState.PREPARE,
    (AHState.IK, 5): AHState.DEFEND,
    (AHState.IK, 6): AHState.HIT,
}
# simultaneous ik exits resolve conservatively: defend, then prepare, then hit
AH_IK_EXIT_ORDER = (5, 4, 6)


@dataclass
class AHStateMachine:
    state: AHState = AHState.IK
    params: AHConditionParams = field(default_factory=AHConditionParams)


def ah_step(sm: AHStateMachine, obs: AHObs) -> tuple[AHStateMachine, str]:
    """Advance the state machine one observation; returns the active skill."""
    state = sm.state
    if state is AHState.IK:
        for cond_id in AH_IK_EXIT_ORDER:
            if ah_condition(cond_id, obs, sm.params):
                state = AH_EDGES[(AHState.IK, cond_id)]
                break
    else:
        cond_id = {AHState.HIT: 1, AHState.DEFEND: 2, AHState.PREPARE: 3}[state]
        if ah_condition(cond_id, obs, sm.params):
            state = AHState.IK
    sm = AHStateMachine(state=state, params=sm.params)
    return sm, AH_SKILLS[state]


# ---------------------------------------------------------------------------
# polar-step rule controllers (hit / prepare)


class RulePhase(str, enum.Enum):
    ADJUSTMENT = "adjustment"
    ACCELERATION = "acceleration"
    FINAL = "final"


@dataclass(frozen=True)
class RuleControllerParams:
    """Tunable gains of the polar-step controllers.

    theta[0:2] shape the angular step, theta[2:4] the radial step. dt is the
    control period; alignment/budget fields govern phase advancement.
    """

    theta: tuple[float, float, float, float] = (0.01, 0.03, 3e-4, 1e-4)
    dt: float = CONTROL_DT
    prepare_adjust_ds: float = 5e-3
    slowdown_ds: float = 2e-3
    align_tolerance_deg: float = 4.0
    adjust_budget_steps: int = 120
    accel_budget_steps: int = 60


@dataclass
class RuleClock:
    phase: RulePhase = RulePhase.ADJUSTMENT
    t_phase: int = 0
    ds_prev: float = 0.0

    def advanced(self, phase: Optional[RulePhase] = None) -> "RuleClock":
        if phase is not None and phase != self.phase:
            return RuleClock(phase=phase, t_phase=0, ds_prev=self.ds_prev)
        return RuleClock(phase=self.phase, t_phase=self.t_phase + 1,
                         ds_prev=self.ds_prev)


class RuleStep(NamedTuple):
    target: np.ndarray
    clock: RuleClock
    degenerate: bool


def _hit_correction(beta_deg: float, puck_y: float) -> float:
    # below the centerline the approach wraps one way around the puck,
    # above it the other
    return 180.0 - beta_deg if puck_y <= 0 else beta_deg - 180.0


def _prepare_correction(beta_deg: float, puck_y: float) -> float:
    return beta_deg - 90.0 if puck_y <= 0 else 270.0 - beta_deg


def rl3_rule_step(policy: str, puck_pos_c: np.ndarray, ee_pos_c: np.ndarray,
                  params: RuleControllerParams, clock: RuleClock,
                  geom: TableGeometry) -> RuleStep:
    """One polar step (d_beta, ds) of the hit or prepare controller.

    Coordinates are centered on the table. beta is the angle of the mallet
    around the puck; the next target sits at beta + d_beta on the circle of
    radius (current distance - ds), never inside the puck disc.
    """
    delta = np.asarray(ee_pos_c, dtype=float) - np.asarray(puck_pos_c, dtype=float)
    radius = float(np.linalg.norm(delta))
    if radius < 1e-9:
        return RuleStep(target=np.asarray(ee_pos_c, dtype=float).copy(),
                        clock=clock.advanced(), degenerate=True)
    beta = math.degrees(math.atan2(delta[1], delta[0])) % 360.0
    t0, t1, t2, t3 = params.theta
    tp, dt = clock.t_phase, params.dt
    r_mallet = geom.mallet_radius
    puck_y = float(puck_pos_c[1])

    if policy == "hit":
        corr = _hit_correction(beta, puck_y)
        if clock.phase is RulePhase.ADJUSTMENT:
            d_beta = (t0 + t1 * tp * dt) * corr
            ds = t2
        elif clock.phase is RulePhase.ACCELERATION:
            d_beta = corr / 2
            ds = (clock.ds_prev + t3 * tp * dt) / (radius + r_mallet)
        else:
            d_beta = (t0 + t1 * dt) * corr
            ds = params.slowdown_ds
    elif policy == "prepare":
        corr = _prepare_correction(beta, puck_y)
        if clock.phase is RulePhase.ADJUSTMENT:
            d_beta = t0 * tp + t1 * corr
            ds = params.prepare_adjust_ds
        else:
            d_beta = corr
            ds = t2
    else:
        raise ValueError(f"unknown rule policy {policy!r}")

    new_radius = max(geom.puck_radius, radius - ds)
    angle = math.radians(beta + d_beta)
    target = np.asarray(puck_pos_c, dtype=float) + new_radius * np.array(
        [math.cos(angle), math.sin(angle)])

    next_phase = clock.phase
    if clock.phase is RulePhase.ADJUSTMENT:
        if abs(corr) <= params.align_tolerance_deg or clock.t_phase >= params.adjust_budget_steps:
            next_phase = RulePhase.ACCELERATION
    elif clock.phase is RulePhase.ACCELERATION:
        if policy == "hit" and clock.t_phase >= params.accel_budget_steps:
            next_phase = RulePhase.FINAL
    new_clock = clock.advanced(next_phase)
    new_clock.ds_prev = ds
    return RuleStep(target=target, clock=new_clock, degenerate=False)


# ---------------------------------------------------------------------------
# home-gated task FSM with geometric switcher


class RL3Task(str, enum.Enum):
    HOME = "home"
    HIT = "hit"
    PREPARE = "prepare"
    DEFEND = "defend"
    COUNTER_ATTACK = "counter-attack"


@dataclass(frozen=True)
class SwitcherParams:
    defend_vx: float = -0.3
    wall_y: float = 0.41
    deep_x: float = -0.8
    slow_speed: float = 0.15
    allow_counter_attack: bool = False


@dataclass
class RL3FSM:
    state: RL3Task = RL3Task.HOME
    params: SwitcherParams = field(default_factory=SwitcherParams)


def _switch_task(puck_pos_c: np.ndarray, puck_vel: np.ndarray, p: SwitcherParams) -> RL3Task:
    x, y = float(puck_pos_c[0]), float(puck_pos_c[1])
    vx = float(puck_vel[0])
    speed = float(np.linalg.norm(puck_vel))
    if vx < p.defend_vx:
        if p.allow_counter_attack and x > 0:
            return RL3Task.COUNTER_ATTACK
        return RL3Task.DEFEND
    if x >= 0:
        return RL3Task.HOME    # puck out of reach on the opponent half
    if speed < p.slow_speed and (abs(y) > p.wall_y or x < p.deep_x):
        return RL3Task.PREPARE
    return RL3Task.HIT


def rl3_fsm_step(fsm: RL3FSM, puck_pos_c: np.ndarray, puck_vel: np.ndarray,
                 completed: bool) -> tuple[RL3FSM, RL3Task]:
    """Advance the task FSM: tasks return to home on completion; a new task
    is only ever selected from home. Direct task-to-task requests are denied
    by construction."""
    if fsm.state is not RL3Task.HOME:
        if completed:
            fsm = RL3FSM(state=RL3Task.HOME, params=fsm.params)
        return fsm, fsm.state
    task = _switch_task(puck_pos_c, puck_vel, fsm.params)
    fsm = RL3FSM(state=task, params=fsm.params)
    return fsm, fsm.state


# ---------------------------------------------------------------------------
# strategy ensemble


class Strategy(str, enum.Enum):
    BALANCED = "balanced"
    AGGRESSIVE = "aggressive"
    DEFENSIVE = "defensive"


@dataclass(frozen=True)
class EnsembleMargins:
    defensive_lead: int = 2


def ensemble_select(score_diff: int, margins: EnsembleMargins = EnsembleMargins()) -> Strategy:
    """Trailing plays aggressive, a comfortable lead plays defensive."""
    if score_diff < 0:
        return Strategy.AGGRESSIVE
    if score_diff >= margins.defensive_lead:
        return Strategy.DEFENSIVE
    return Strategy.BALANCED
