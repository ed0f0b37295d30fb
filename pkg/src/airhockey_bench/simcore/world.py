"""The 1 kHz world: two tracked arms, the puck, fault timers and match stepping.

`step_match` advances one 20 ms control tick: both commands are interpolated
into per-ms setpoints, then 20 substeps run arm tracking followed by puck
integration against both mallets. Side B lives in its own mirrored frame (own
goal at x=0); its end-effector is mirrored into the world frame for contacts.
Given the same (world, commands, config, rng state) the step is reproducible
bit for bit; `state_hash` digests the full state for determinism checks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..kinematics import RobotSpec, default_robot_spec, ee_position
from .arm import ArmTrackingModel, step_arm
from .commands import (Boundary, Command, CommandError, SetpointSegment,
                       hold_command, interpolate_command, CONTROL_PERIOD_MS)
from .puck import GoalEvent, step_puck
from .table import MalletState, PuckParams, PuckState, TableGeometry

SIM_DT = 1e-3


@dataclass(frozen=True)
class FaultEvent:
    side: int              # side charged with the fault
    time_ms: int


@dataclass(frozen=True)
class MalformedCommandEvent:
    side: int
    reason: str
    time_ms: int


@dataclass
class ArmState:
    q: np.ndarray
    qdot: np.ndarray
    cmd_q: np.ndarray          # boundary of the command stream (may differ from
    cmd_qdot: np.ndarray       # tracked state when the tracking model lags)
    cmd_qddot: np.ndarray
    ee_pos: np.ndarray         # world-frame mallet center, cached per substep
    ee_vel: np.ndarray

    @staticmethod
    def from_rest(spec: RobotSpec, ee_pos: np.ndarray) -> "ArmState":
        n = spec.dof
        return ArmState(q=spec.q_init.copy(), qdot=np.zeros(n),
                        cmd_q=spec.q_init.copy(), cmd_qdot=np.zeros(n),
                        cmd_qddot=np.zeros(n), ee_pos=ee_pos.copy(),
                        ee_vel=np.zeros(2))


@dataclass(frozen=True)
class MatchConfig:
    geom: TableGeometry = TableGeometry()
    puck_params: PuckParams = PuckParams()
    specs: tuple[RobotSpec, RobotSpec] = None
    tracking: tuple[ArmTrackingModel, ArmTrackingModel] = (ArmTrackingModel(), ArmTrackingModel())
    fault_limit_s: float = 15.0
    respawn_offset: float = 0.25   # distance from center after goals/faults

    def __post_init__(self):
        if self.specs is None:
            spec = default_robot_spec()
            object.__setattr__(self, "specs", (spec, spec))


def mirror_xy(geom: TableGeometry, pos: np.ndarray) -> np.ndarray:
    """Map a planar point between the world frame and side B's own frame."""
    return np.array([geom.length - pos[0], -pos[1]])


def _ee_world(cfg: MatchConfig, side: int, q: np.ndarray) -> np.ndarray:
    ee = ee_position(cfg.specs[side], q)[:2]
    if side == 1:
        ee = mirror_xy(cfg.geom, ee)
    return ee


@dataclass
class WorldState:
    puck: PuckState
    arms: list
    time_ms: int = 0
    dwell_s: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @staticmethod
    def initial(cfg: MatchConfig, puck: Optional[PuckState] = None) -> "WorldState":
        arms = [ArmState.from_rest(cfg.specs[s], _ee_world(cfg, s, cfg.specs[s].q_init))
                for s in (0, 1)]
        return WorldState(puck=puck.copy() if puck else PuckState(x=cfg.geom.length / 2),
                          arms=arms)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        p = self.puck
        h.update(np.array([p.x, p.y, p.theta, p.vx, p.vy, p.omega]).tobytes())
        for arm in self.arms:
            for v in (arm.q, arm.qdot, arm.cmd_q, arm.cmd_qdot, arm.cmd_qddot,
                      arm.ee_pos, arm.ee_vel):
                h.update(np.ascontiguousarray(v).tobytes())
        h.update(np.array([self.time_ms]).tobytes())
        h.update(self.dwell_s.tobytes())
        return h.hexdigest()


def _respawn_puck(world: WorldState, cfg: MatchConfig, half: int):
    """Place the puck at rest near the center of the given half."""
    x = cfg.geom.length / 2 + (cfg.respawn_offset if half == 1 else -cfg.respawn_offset)
    world.puck = PuckState(x=x, y=0.0)
    world.dwell_s[:] = 0.0


def step_match(world: WorldState, commands: Sequence[Optional[Command]],
               cfg: MatchConfig, rng: Optional[np.random.Generator] = None) -> tuple[WorldState, list]:
    """Advance one control tick (20 ms). Mutates and returns `world`.

    Malformed commands raise a MalformedCommandEvent and the arm holds its
    last commanded position. Goals and faults respawn the puck: after a goal
    on the conceding side's half, after a fault on the opposite half.
    """
    events: list = []
    segments: list[SetpointSegment] = []
    for side in (0, 1):
        arm = world.arms[side]
        boundary = Boundary(arm.cmd_q, arm.cmd_qdot, arm.cmd_qddot)
        cmd = commands[side]
        if cmd is None:
            cmd = hold_command(arm.cmd_q)
        try:
            seg = interpolate_command(boundary, cmd)
        except CommandError as err:
            events.append(MalformedCommandEvent(side=side, reason=str(err),
                                                time_ms=world.time_ms))
            seg = interpolate_command(boundary, hold_command(arm.cmd_q))
        segments.append(seg)

    geom = cfg.geom
    # an arm needs per-substep end-effector tracking only when the puck could
    # reach it this tick (puck travel + bounded mallet travel + touch radius)
    touch = geom.puck_radius + geom.mallet_radius
    reach = world.puck.speed * CONTROL_PERIOD_MS * SIM_DT + 0.12 + touch
    near = [float(np.hypot(world.puck.x - world.arms[s].ee_pos[0],
                           world.puck.y - world.arms[s].ee_pos[1])) <= reach
            for s in (0, 1)]
    for k in range(CONTROL_PERIOD_MS):
        last = k == CONTROL_PERIOD_MS - 1
        mallets = []
        for side in (0, 1):
            arm = world.arms[side]
            seg = segments[side]
            arm.q, arm.qdot = step_arm(cfg.tracking[side], arm.q, arm.qdot,
                                       seg.q[k], seg.qdot[k], SIM_DT)
            if near[side] or last:
                ee = _ee_world(cfg, side, arm.q)
                dt_ee = SIM_DT if near[side] else CONTROL_PERIOD_MS * SIM_DT
                arm.ee_vel = (ee - arm.ee_pos) / dt_ee
                arm.ee_pos = ee
            mallets.append(MalletState(pos=arm.ee_pos, vel=arm.ee_vel))

        world.puck, puck_events = step_puck(world.puck, mallets, cfg.puck_params,
                                            geom, SIM_DT, rng, time_ms=world.time_ms)
        events.extend(puck_events)
        goal = next((e for e in puck_events if isinstance(e, GoalEvent)), None)
        if goal is not None:
            _respawn_puck(world, cfg, half=1 - goal.scoring_side)
        else:
            half = 0 if world.puck.x < geom.length / 2 else 1
            other = 1 - half
            world.dwell_s[half] += SIM_DT
            world.dwell_s[other] = 0.0
            if world.dwell_s[half] > cfg.fault_limit_s:
                events.append(FaultEvent(side=half, time_ms=world.time_ms))
                _respawn_puck(world, cfg, half=other)
        world.time_ms += 1

    for side in (0, 1):
        arm = world.arms[side]
        seg = segments[side]
        arm.cmd_q = seg.q[-1].copy()
        arm.cmd_qdot = seg.qdot[-1].copy()
        arm.cmd_qddot = seg.end_qddot.copy()
    return world, events
