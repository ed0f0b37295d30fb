"""Episode lifecycle: initial conditions, stepping, judging, penalties.

Episodes run at the 50 Hz control rate for at most `max_steps` ticks (500 by
default), ending early once the outcome is decided (goal scored, puck dead on
the deciding half). Compute time is measured with a monotonic clock around
the agent call only; with timing disabled nothing is measured and replays
are byte-reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace as dc_replace
from typing import Optional

import numpy as np

from ..estimation import ObservationCorruptor
from ..kinematics import default_robot_spec, forward_kinematics
from ..metrics import (EpisodeTrace, PenaltyLedger, PenaltyWeights,
                       SuccessCriteria, ViolationFlags, check_constraints,
                       ConstraintSet, judge_task)
from ..simcore.commands import Command, InterpolationMode
from ..simcore.puck import GoalEvent, MalletContact, WallContact
from ..simcore.table import PuckState
from ..simcore.world import (FaultEvent, MalformedCommandEvent, MatchConfig,
                             WorldState, step_match)
from .config import EnvConfig, make_match_config

TASKS = ("hit", "defend", "prepare")
CONTROL_DT = 0.02


@dataclass
class Observation:
    """What one agent sees, in its own frame (own goal line at x = 0)."""

    time_s: float
    puck_pos: np.ndarray
    puck_theta: float
    puck_vel: np.ndarray
    puck_omega: float
    q: np.ndarray
    qdot: np.ndarray
    ee_pos: np.ndarray
    opp_mallet: Optional[np.ndarray] = None
    dwell_own: float = 0.0
    dwell_opp: float = 0.0
    tracking_lost: bool = False


@dataclass
class EpisodeResult:
    task: str
    success: bool
    penalty_points: float
    steps: int
    events: list
    compute_time_max: float
    compute_time_avg: float
    seed: int
    agent_error: bool = False


def initial_puck(task: str, env: EnvConfig, rng: np.random.Generator) -> PuckState:
    """Task-specific initial condition (drawn in centered coordinates)."""
    geom = env.geometry
    if task == "hit":
        x = rng.uniform(-0.65, -0.25)
        y = rng.uniform(-0.35, 0.35)
        speed = rng.uniform(0.0, 0.15)
        ang = rng.uniform(-math.pi, math.pi)
        vx, vy = speed * math.cos(ang), speed * math.sin(ang)
    elif task == "defend":
        x = rng.uniform(0.25, 0.65)
        y = rng.uniform(-0.35, 0.35)
        vx = rng.uniform(-1.6, -0.8)
        vy = rng.uniform(-0.4, 0.4)
    elif task == "prepare":
        x = rng.uniform(-0.85, -0.25)
        side = 1.0 if rng.random() < 0.5 else -1.0
        y = side * rng.uniform(geom.wall_y - 0.08, geom.wall_y - 0.01)
        vx = vy = 0.0
    else:
        raise ValueError(f"unknown task {task!r}")
    return PuckState(x=geom.from_centered(x), y=y, vx=vx, vy=vy)


def _build_observation(world: WorldState, cfg: MatchConfig, time_s: float) -> Observation:
    arm = world.arms[0]
    p = world.puck
    opp = world.arms[1].ee_pos
    return Observation(time_s=time_s,
                       puck_pos=np.array([p.x, p.y]), puck_theta=p.theta,
                       puck_vel=np.array([p.vx, p.vy]), puck_omega=p.omega,
                       q=arm.q.copy(), qdot=arm.qdot.copy(),
                       ee_pos=arm.ee_pos.copy(),
                       opp_mallet=opp.copy(),
                       dwell_own=float(world.dwell_s[0]),
                       dwell_opp=float(world.dwell_s[1]))


class PatternOpponent:
    """Scripted opponent for the hit task: sways its base joint predictably."""

    def __init__(self, spec, amplitude: float = 0.3, period_s: float = 4.0):
        self.spec = spec
        self.amplitude = amplitude
        self.omega = 2 * math.pi / period_s

    def command(self, t: float) -> Command:
        q = self.spec.q_init.copy()
        q[0] += self.amplitude * math.sin(self.omega * t)
        return Command(mode=InterpolationMode.POS_LINEAR, q_des=q)


def _episode_over(task: str, world: WorldState, cfg: MatchConfig,
                  events: list, arrived_own: bool, touched: bool) -> bool:
    if any(isinstance(e, GoalEvent) for e in events):
        return True
    x_c = cfg.geom.to_centered(world.puck.x)
    speed = world.puck.speed
    if task == "hit":
        return x_c > 0.1 and speed < 0.05
    if task == "defend":
        if arrived_own and x_c > 0.05:
            return True     # bounced back: outcome decided
        return (arrived_own and touched and speed <= 0.095
                and world.puck.vx <= 0.02)
    if task == "prepare":
        return touched and world.time_ms > 1000 and speed <= 0.05
    return False


def event_to_dict(e) -> dict:
    if isinstance(e, GoalEvent):
        return {"type": "goal", "scoring_side": e.scoring_side, "speed": e.speed,
                "y": e.y, "time_ms": e.time_ms}
    if isinstance(e, FaultEvent):
        return {"type": "fault", "side": e.side, "time_ms": e.time_ms}
    if isinstance(e, WallContact):
        return {"type": "wall", "axis": e.axis, "time_ms": e.time_ms}
    if isinstance(e, MalletContact):
        return {"type": "mallet", "side": e.side, "degenerate": e.degenerate,
                "time_ms": e.time_ms}
    if isinstance(e, MalformedCommandEvent):
        return {"type": "malformed-command", "side": e.side, "reason": e.reason,
                "time_ms": e.time_ms}
    return {"type": "unknown", "repr": repr(e)}


def _world_snapshot(world: WorldState) -> dict:
    p = world.puck
    return {
        "time_ms": world.time_ms,
        "puck": [p.x, p.y, p.theta, p.vx, p.vy, p.omega],
        "arms": [{"q": a.q.tolist(), "qdot": a.qdot.tolist()} for a in world.arms],
        "dwell_s": world.dwell_s.tolist(),
    }


def run_episode(task: str, agent, env: EnvConfig, seed: int,
                criteria: SuccessCriteria = SuccessCriteria(),
                weights: PenaltyWeights = PenaltyWeights(),
                replay_writer=None) -> EpisodeResult:
    """Run one episode of a qualifying task with the given agent.

    Fully determined by (task, env, seed) and the agent's behavior. An agent
    exception marks the episode failed at the per-episode penalty cap and the
    caller's run continues.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    ss = np.random.SeedSequence((env.master_seed, TASKS.index(task), seed))
    env_rng, sim_rng, noise_rng, agent_rng = [np.random.default_rng(s)
                                              for s in ss.spawn(4)]
    cfg = make_match_config(env, env_rng)
    spec = cfg.specs[0]
    world = WorldState.initial(cfg, initial_puck(task, env, env_rng))
    cset = ConstraintSet.from_specs(spec, cfg.geom)
    corruptor = ObservationCorruptor(env.effective_noise())
    ledger = PenaltyLedger(weights=weights)
    trace = EpisodeTrace()
    opponent = PatternOpponent(cfg.specs[1]) if task == "hit" else None

    events: list = []
    times: list = []
    agent_error = False
    arrived_own = False
    touched = False
    step = 0

    obs = corruptor.corrupt(_build_observation(world, cfg, 0.0), noise_rng)
    try:
        agent.reset(obs, agent_rng, task)
    except Exception:
        agent_error = True

    while step < env.max_steps and not agent_error:
        t_draw0 = time.perf_counter() if env.timing_enabled else 0.0
        try:
            cmd = agent.draw_action(obs)
        except Exception:
            agent_error = True
            break
        compute_time = (time.perf_counter() - t_draw0) if env.timing_enabled else 0.0
        times.append(compute_time)

        flags = ViolationFlags(False, False, False, False)
        if cmd is not None and cmd.q_des is not None:
            poses = forward_kinematics(spec, cmd.q_des)
            qdot_cmd = cmd.qdot_des if cmd.qdot_des is not None else np.zeros(spec.dof)
            flags = check_constraints(cmd.q_des, qdot_cmd, poses, cset)
        ledger.record_step(flags, compute_time if env.timing_enabled else None)

        opp_cmd = opponent.command(world.time_ms * 1e-3) if opponent else None
        world, tick_events = step_match(world, [cmd, opp_cmd], cfg, sim_rng)
        events.extend(tick_events)
        step += 1

        x_c = cfg.geom.to_centered(world.puck.x)
        arrived_own = arrived_own or x_c < 0
        touched = touched or any(isinstance(e, MalletContact) and e.side == 0
                                 for e in tick_events)
        trace.append(x_c, world.puck.y, world.puck.speed)
        trace.events = events

        if replay_writer is not None:
            replay_writer.write_record({
                "step": step,
                "world": _world_snapshot(world),
                "command_mode": cmd.mode.value if cmd is not None else None,
                "compute_time": compute_time,
                "flags": list(flags),
                "events": [event_to_dict(e) for e in tick_events],
            })

        if _episode_over(task, world, cfg, tick_events, arrived_own, touched):
            break
        obs = corruptor.corrupt(_build_observation(world, cfg, world.time_ms * 1e-3),
                                noise_rng)

    if agent_error:
        penalty = weights.episode_cap
        success = False
    else:
        penalty = ledger.end_episode()
        success = judge_task(task, trace, criteria)
    return EpisodeResult(task=task, success=success, penalty_points=penalty,
                         steps=step, events=events,
                         compute_time_max=max(times) if times else 0.0,
                         compute_time_avg=float(np.mean(times)) if times else 0.0,
                         seed=seed, agent_error=agent_error)
