"""Shipped agents.

`hold` keeps the home configuration. `chase` is a simple scripted task-space
policy (the pluggable stand-in for a trained flat policy): it blocks incoming
pucks and pushes slow ones toward the opponent goal. `rl3` drives the
polar-step rule controllers, through the home-gated FSM in full games. The
`composite` agent is the planner stack: a Kalman belief feeds either the
task-specific skill (qualifying episodes announce their task, as the
challenge environments do) or the four-state machine in full games. Skills:
shooting plans an angle by sampling rollouts and strikes along a planned
mallet trajectory (with rail-bank fallback), defending absorbs the puck with
a velocity-matched retreating catch, preparation taps rail-hugging pucks off
the rail and catches them near the center of the agent's half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..estimation import (EKFBelief, KalmanState, analytic_puck_model,
                          classify_contact_mode, kalman_step)
from ..kinematics import (RobotSpec, default_robot_spec, forward_kinematics,
                          jacobian)
from ..planning import (ContactPlan, PlanningError, SamplerConfig,
                        ShotCostWeights, TrajectoryParams,
                        contact_state_for_angle, plan_deflection,
                        plan_mallet_trajectory, plan_shot)
from ..policies import (AHState, AHStateMachine, RuleClock, RuleControllerParams,
                        RL3FSM, RL3Task, Workspace, ah_obs_from, ah_step,
                        ee_target_command, map_task_action, rl3_fsm_step,
                        rl3_rule_step)
from ..simcore.commands import Command, InterpolationMode
from ..simcore.safety import safety_height_correct
from ..simcore.table import PuckParams, TableGeometry
from .episode import Observation

CONTROL_DT = 0.02


class Agent:
    """Draw-action interface: observation in, joint command out.

    reset() receives the qualifying task name when one is being evaluated
    (None for full games), mirroring how the challenge environments announce
    the active sub-task.
    """

    name = "agent"

    def __init__(self, spec: Optional[RobotSpec] = None,
                 geom: Optional[TableGeometry] = None):
        self.spec = spec or default_robot_spec()
        self.geom = geom or TableGeometry()
        self.workspace = Workspace()
        self.home_xy = forward_kinematics(self.spec, self.spec.q_init).ee[:2]
        self.task: Optional[str] = None

    def reset(self, obs: Observation, rng: np.random.Generator,
              task: Optional[str] = None):
        self.rng = rng
        self.task = task

    def draw_action(self, obs: Observation) -> Command:
        raise NotImplementedError

    # shared helpers ------------------------------------------------------

    def _goto(self, obs: Observation, target_xy: np.ndarray) -> Command:
        cmd = ee_target_command(np.asarray(target_xy, dtype=float), obs.q,
                                self.spec, self.geom, self.workspace)
        cmd, _ = safety_height_correct(self.spec, cmd, self.geom)
        return cmd

    def _goto_avoiding(self, obs: Observation, target_xy: np.ndarray,
                       puck_est: Optional[np.ndarray]) -> Command:
        """Go to a point, detouring around the puck instead of through it."""
        if puck_est is None:
            return self._goto(obs, target_xy)
        ee = obs.ee_pos[:2]
        p = np.asarray(puck_est[:2], dtype=float)
        v = np.asarray(puck_est[2:4], dtype=float) if len(puck_est) > 2 else np.zeros(2)
        clearance = (self.geom.puck_radius + self.geom.mallet_radius + 0.05
                     + 0.4 * float(np.linalg.norm(v)))
        to_ee = ee - p
        d_ee = float(np.linalg.norm(to_ee))
        if d_ee < clearance:
            away = to_ee / d_ee if d_ee > 1e-9 else np.array([-1.0, 0.0])
            return self._goto(obs, self.workspace.clamp(p + away * (clearance + 0.04)))
        seg = np.asarray(target_xy, dtype=float) - ee
        seg_len2 = float(seg @ seg)
        if seg_len2 < 1e-12:
            return self._goto(obs, target_xy)
        t = float(np.clip((p - ee) @ seg / seg_len2, 0.0, 1.0))
        closest = ee + t * seg
        away = closest - p
        dist = float(np.linalg.norm(away))
        if dist >= clearance:
            return self._goto(obs, target_xy)
        if dist < 1e-9:
            away = np.array([-seg[1], seg[0]]) / math.sqrt(seg_len2)
            dist = 1.0
        waypoint = self.workspace.clamp(p + away / dist * (clearance + 0.04))
        return self._goto(obs, waypoint)

    def _goto_home(self, obs: Observation,
                   puck_est: Optional[np.ndarray] = None) -> Command:
        return self._goto_avoiding(obs, self.home_xy, puck_est)

    def _ee_velocity(self, obs: Observation) -> np.ndarray:
        return (jacobian(self.spec, obs.q) @ obs.qdot)[:2]


class PuckCatcher:
    """Pursue the puck along its predicted path and absorb it.

    The mallet is steered ahead of the puck on its line of travel; once the
    puck is about to reach it, the mallet retreats slightly faster than the
    e/(1+e) velocity match, so each contact under-reflects and the puck is
    absorbed over a few soft touches even with estimate errors. With
    stay_behind_x the mallet never leads the puck in x (required while the
    full-game state machine is in charge).
    """

    def __init__(self, agent: Agent, model, restitution: float,
                 pocket_window: float = 0.06):
        self.agent = agent
        self.model = model
        self.k_catch = restitution / (1.0 + restitution) + 0.05
        self.pocket_window = pocket_window
        self.touch = agent.geom.puck_radius + agent.geom.mallet_radius

    def step(self, obs: Observation, puck_est: np.ndarray,
             prefer: Optional[np.ndarray] = None,
             stay_behind_x: bool = False):
        """Command toward a catch, or None when there is nothing to catch."""
        p, v = puck_est[:2], puck_est[2:4]
        speed = float(np.linalg.norm(v))
        if speed < 0.03:
            return None
        ee = obs.ee_pos[:2]
        vhat = v / speed
        d = ee - p
        along = float(d @ vhat)
        lateral = float(np.linalg.norm(d - along * vhat))
        window = max(self.pocket_window, 0.05 * speed)
        on_line = along > 0 and lateral < 0.05
        # when a catch zone is preferred and the puck is still far from it,
        # step off the line and re-intercept further down the path
        if on_line and prefer is not None and float(np.linalg.norm(p - prefer)) > 0.2:
            on_line = False
        if on_line:
            if along < self.touch + window:
                retreat = self.k_catch * v
                return self.agent._goto(obs, ee + retreat * CONTROL_DT)
            # on the path with the puck incoming: stand fast on the line
            line_pt = p + vhat * along
            if stay_behind_x:
                line_pt[0] = min(line_pt[0], p[0] - 0.005)
            return self.agent._goto(obs, line_pt)
        # not on the path yet: move to an interception point ahead of the
        # predicted puck; prefer points near `prefer` when one is given
        s = np.asarray(puck_est[:4], dtype=float).copy()
        mallet_speed = 0.9
        target = None
        best_pref = math.inf
        for k in range(1, 60):
            mode = classify_contact_mode(s, [], self.agent.geom)
            s = self.model.predict(mode, s)
            t = k * self.model.dt
            sv = s[2:]
            svn = float(np.linalg.norm(sv))
            if svn < 1e-9:
                break
            ahead = s[:2] + sv / svn * (self.touch + window)
            if stay_behind_x:
                ahead[0] = min(ahead[0], s[0] - 0.005, p[0] - 0.005)
            ahead = self.agent.workspace.clamp(ahead)
            if np.linalg.norm(ahead - ee) <= mallet_speed * t:
                if prefer is None:
                    target = ahead
                    break
                score = float(np.linalg.norm(ahead - prefer))
                if score < best_pref:
                    best_pref = score
                    target = ahead
        if target is None:
            ahead = p + vhat * (self.touch + window)
            if stay_behind_x:
                ahead[0] = min(ahead[0], p[0] - 0.005)
            target = self.agent.workspace.clamp(ahead)
        return self.agent._goto(obs, target)


class HoldAgent(Agent):
    name = "hold"

    def draw_action(self, obs: Observation) -> Command:
        return Command(mode=InterpolationMode.POSVEL_LINEAR,
                       q_des=self.spec.q_init.copy(),
                       qdot_des=np.zeros(self.spec.dof))


class ChaseAgent(Agent):
    """Scripted chase-and-block heuristic over the task-space action map."""

    name = "chase"
    block_x = 0.22

    def draw_action(self, obs: Observation) -> Command:
        puck, vel = obs.puck_pos, obs.puck_vel
        half = self.geom.length / 2
        if puck[0] > half:
            target = np.array([self.block_x, 0.0])
        elif vel[0] < -0.15:
            t_hit = max(0.0, (puck[0] - self.block_x) / max(-vel[0], 1e-6))
            y_pred = float(np.clip(puck[1] + vel[1] * t_hit, -0.4, 0.4))
            target = np.array([self.block_x, y_pred])
        else:
            goal = np.array([self.geom.length, 0.0])
            u = goal - puck
            u = u / np.linalg.norm(u)
            target = puck + 0.03 * u
        action = self.workspace.normalize(self.workspace.clamp(target))
        cmd = map_task_action(action, obs.q, self.spec, self.geom, self.workspace)
        cmd, _ = safety_height_correct(self.spec, cmd, self.geom)
        return cmd


class CompositeAgent(Agent):
    """Planner-backed skills, task-locked in qualifying or coordinated by
    the four-state machine in full games."""

    name = "composite"

    def __init__(self, spec=None, geom=None,
                 puck_params: PuckParams = PuckParams(),
                 shot_speed: float = 1.35,
                 sampler: SamplerConfig = SamplerConfig(iterations=6, population=16),
                 weights: ShotCostWeights = ShotCostWeights()):
        super().__init__(spec, geom)
        self.assumed_params = puck_params
        self.model = analytic_puck_model(puck_params)
        self.shot_speed = shot_speed
        self.sampler = sampler
        self.weights = weights

    def reset(self, obs: Observation, rng: np.random.Generator,
              task: Optional[str] = None):
        super().reset(obs, rng, task)
        self.sm = AHStateMachine()
        self.kf = KalmanState.initial(obs.puck_pos)
        self.vel_est = np.asarray(obs.puck_vel, dtype=float).copy()
        self.catcher = PuckCatcher(self, self.model,
                                   self.assumed_params.mallet_restitution)
        self._clear_plan()
        self.prepare_phase = "stage"

    # belief --------------------------------------------------------------

    def _update_belief(self, obs: Observation):
        z = None if obs.tracking_lost else obs.puck_pos
        self.kf = kalman_step(self.kf, z, CONTROL_DT)
        if obs.tracking_lost:
            self.vel_est = self.kf.mean[2:].copy()
        else:
            # contacts change the velocity faster than the position filter
            # adapts; blend the reported velocity in directly
            self.vel_est = 0.4 * self.vel_est + 0.6 * np.asarray(obs.puck_vel, dtype=float)

    @property
    def puck_est(self) -> np.ndarray:
        est = self.kf.mean.copy()
        est[2:] = self.vel_est
        return est

    # hit ------------------------------------------------------------------

    def _clear_plan(self):
        self.traj = None
        self.traj_step = 0
        self.staged = False
        self.planned_for = None

    def _follow_trajectory(self, obs: Observation) -> Optional[Command]:
        if self.traj is None or self.traj_step >= len(self.traj.times):
            return None
        target = self.traj.pos[self.traj_step]
        self.traj_step += 1
        return self._goto(obs, target)

    def _contact_feasible(self, mallet_pos: np.ndarray) -> bool:
        ws = self.workspace
        return (ws.x_lo - 1e-9 <= mallet_pos[0] <= ws.x_hi + 1e-9
                and ws.y_lo - 1e-9 <= mallet_pos[1] <= ws.y_hi + 1e-9)

    def _bank_angle(self, puck: np.ndarray) -> float:
        """Aim at the goal center mirrored across the puck's near rail."""
        side = 1.0 if puck[1] >= 0 else -1.0
        mirror_y = 2 * side * self.geom.wall_y
        return math.atan2(mirror_y - puck[1], self.geom.length - puck[0])

    def _skill_hit(self, obs: Observation, gated: bool) -> Command:
        cmd = self._follow_trajectory(obs)
        if cmd is not None:
            return cmd
        puck = self.puck_est
        speed = float(np.hypot(puck[2], puck[3]))
        # settle a moving puck before lining up: strikes start from rest
        if self.traj is None and 0.03 <= speed <= 0.55:
            catch_cmd = self.catcher.step(obs, puck, stay_behind_x=gated)
            if catch_cmd is not None:
                return catch_cmd
        moved = (self.planned_for is not None
                 and np.linalg.norm(puck[:2] - self.planned_for) > 0.08)
        if self.traj is not None and not moved:
            self._clear_plan()     # strike finished; wait for the outcome
            return self._goto_home(obs, puck)
        if moved:
            self._clear_plan()

        belief = EKFBelief(mean=puck, cov=np.zeros((4, 4)))
        angle, _ = plan_shot(belief, self.model, 0.0, self.sampler, self.weights,
                             self.rng, self.geom, self.assumed_params,
                             shot_speed=self.shot_speed)
        contact_mallet = contact_state_for_angle(angle, puck, self.geom,
                                                 self.shot_speed)
        if not self._contact_feasible(contact_mallet.pos):
            bank = self._bank_angle(puck)
            contact_mallet = contact_state_for_angle(bank, puck, self.geom,
                                                     self.shot_speed)
            if not self._contact_feasible(contact_mallet.pos):
                # hugging the rail too tightly even for a bank shot
                return self._reposition_step(obs, gated)
        u = contact_mallet.vel / max(np.linalg.norm(contact_mallet.vel), 1e-9)
        staging = self.workspace.clamp(contact_mallet.pos - 0.12 * u)
        ee = obs.ee_pos[:2]
        ee_vel = self._ee_velocity(obs)
        if not self.staged:
            if np.linalg.norm(ee - staging) > 0.025 or np.linalg.norm(ee_vel) > 0.12:
                return self._goto_avoiding(obs, staging, puck)
            self.staged = True
        t_c = max(0.12, np.linalg.norm(contact_mallet.pos - ee) / (0.6 * self.shot_speed))
        params = TrajectoryParams(horizon_s=t_c + 0.24)
        try:
            self.traj = plan_mallet_trajectory(
                ee, ee_vel,
                ContactPlan(t_contact=t_c, mallet_pos=contact_mallet.pos,
                            mallet_vel=contact_mallet.vel, intent="shoot"),
                params, self.sampler, self.geom, self.rng, self.workspace)
        except PlanningError:
            self._clear_plan()
            return self._goto_avoiding(obs, staging, puck)
        self.traj_step = 0
        self.planned_for = puck[:2].copy()
        return self._follow_trajectory(obs) or self._goto_avoiding(obs, staging, puck)

    # defend ----------------------------------------------------------------

    def _skill_defend(self, obs: Observation, gated: bool) -> Command:
        cmd = self.catcher.step(obs, self.puck_est, stay_behind_x=gated)
        if cmd is not None:
            return cmd
        # puck is dead: hold position and let the play move on
        return self._goto(obs, obs.ee_pos[:2])

    # prepare ----------------------------------------------------------------

    def _reposition_step(self, obs: Observation, gated: bool) -> Command:
        """Tap the puck off the side rail, then chase and absorb it near the
        center of the agent's half."""
        puck = self.puck_est
        speed = float(np.hypot(puck[2], puck[3]))
        ee = obs.ee_pos[:2]
        if puck[0] > self.geom.length / 2 and speed < 0.3:
            # out of reach on the opponent half; nothing to reposition
            return self._goto_home(obs, puck)
        if speed > 0.1:
            self.prepare_phase = "catch"
        if self.prepare_phase == "catch":
            prefer = np.array([self.geom.from_centered(-0.5), 0.0])
            cmd = self.catcher.step(obs, puck, prefer=prefer, stay_behind_x=gated)
            if cmd is not None:
                return cmd
            self.prepare_phase = "stage"   # puck settled; ready for the next move
            return self._goto(obs, obs.ee_pos[:2])
        target_x = self.geom.from_centered(-0.5)
        side = 1.0 if puck[1] >= 0 else -1.0
        wall = side * self.geom.wall_y
        mirrored = np.array([target_x, 2 * wall])
        d = mirrored - puck[:2]
        d = d / max(np.linalg.norm(d), 1e-9)
        if gated and d[0] < 0.03:
            # backward launches would put the mallet ahead of the puck, which
            # the state machine's hit-abort condition forbids
            d = np.array([0.0, side])
        touch = self.geom.puck_radius + self.geom.mallet_radius
        staging = puck[:2] - (touch + 0.10) * d
        if gated:
            staging[0] = min(staging[0], puck[0] - 0.005)
        staging = self.workspace.clamp(staging)
        if self.prepare_phase == "stage":
            if np.linalg.norm(ee - staging) > 0.03:
                return self._goto_avoiding(obs, staging, puck)
            self.prepare_phase = "tap"
        drive = puck[:2] - ee
        drive = drive / max(np.linalg.norm(drive), 1e-9)
        return self._goto(obs, ee + drive * (0.25 * CONTROL_DT))

    # dispatch ----------------------------------------------------------------

    def draw_action(self, obs: Observation) -> Command:
        self._update_belief(obs)
        puck = self.puck_est
        if self.task == "hit":
            return self._skill_hit(obs, gated=False)
        if self.task == "defend":
            return self._skill_defend(obs, gated=False)
        if self.task == "prepare":
            return self._reposition_step(obs, gated=False)
        # full game: the state machine decides
        ah = ah_obs_from(puck[:2], puck[2:], obs.ee_pos[:2], self.geom,
                         self.sm.params)
        prev_state = self.sm.state
        self.sm, skill = ah_step(self.sm, ah)
        if self.sm.state is not prev_state:
            self._clear_plan()
            self.prepare_phase = "stage"
        if skill == "hit":
            return self._skill_hit(obs, gated=True)
        if skill == "defend":
            return self._skill_defend(obs, gated=True)
        if skill == "prepare":
            return self._reposition_step(obs, gated=True)
        return self._goto_home(obs, puck)


class RuleBasedAgent(Agent):
    """Polar-step rule controllers, selected by the home-gated FSM in full
    games or locked to the announced qualifying task."""

    name = "rl3"

    def __init__(self, spec=None, geom=None,
                 params: RuleControllerParams = RuleControllerParams(),
                 task_budget_steps: int = 200):
        super().__init__(spec, geom)
        self.params = params
        self.task_budget = task_budget_steps

    def reset(self, obs: Observation, rng: np.random.Generator,
              task: Optional[str] = None):
        super().reset(obs, rng, task)
        self.fsm = RL3FSM()
        self.clock = RuleClock()
        self.task_steps = 0
        self.kf = KalmanState.initial(obs.puck_pos)
        self.vel_est = np.asarray(obs.puck_vel, dtype=float).copy()
        self.model = analytic_puck_model(PuckParams())
        self.catcher = PuckCatcher(self, self.model,
                                   PuckParams().mallet_restitution)

    def _completed(self, task: RL3Task, obs: Observation, puck: np.ndarray) -> bool:
        if self.task_steps >= self.task_budget:
            return True
        x_c = self.geom.to_centered(puck[0])
        vx = puck[2]
        if task is RL3Task.HIT:
            return vx > 0.35 or x_c > 0.1
        if task is RL3Task.PREPARE:
            return abs(puck[1]) < 0.25 and np.hypot(puck[2], puck[3]) < 0.1
        if task in (RL3Task.DEFEND, RL3Task.COUNTER_ATTACK):
            return abs(vx) < 0.05 or x_c > 0.2
        return True

    def _run_task(self, obs: Observation, task: RL3Task, puck: np.ndarray) -> Command:
        puck_c = np.array([self.geom.to_centered(puck[0]), puck[1]])
        if task in (RL3Task.DEFEND, RL3Task.COUNTER_ATTACK):
            cmd = self.catcher.step(obs, puck)
            if cmd is not None:
                return cmd
            t_hit = max(0.0, (puck[0] - 0.2) / max(-puck[2], 1e-6))
            y_pred = float(np.clip(puck[1] + puck[3] * t_hit, -0.4, 0.4))
            return self._goto(obs, np.array([0.2, y_pred]))
        policy = "hit" if task is RL3Task.HIT else "prepare"
        ee_c = np.array([self.geom.to_centered(obs.ee_pos[0]), obs.ee_pos[1]])
        step = rl3_rule_step(policy, puck_c, ee_c, self.params, self.clock,
                             self.geom)
        self.clock = step.clock
        target = np.array([self.geom.from_centered(step.target[0]), step.target[1]])
        return self._goto(obs, target)

    def draw_action(self, obs: Observation) -> Command:
        z = None if obs.tracking_lost else obs.puck_pos
        self.kf = kalman_step(self.kf, z, CONTROL_DT)
        if obs.tracking_lost:
            self.vel_est = self.kf.mean[2:].copy()
        else:
            self.vel_est = 0.4 * self.vel_est + 0.6 * np.asarray(obs.puck_vel, dtype=float)
        puck = self.kf.mean.copy()
        puck[2:] = self.vel_est

        if self.task is not None:
            locked = {"hit": RL3Task.HIT, "prepare": RL3Task.PREPARE,
                      "defend": RL3Task.DEFEND}[self.task]
            self.task_steps += 1
            return self._run_task(obs, locked, puck)

        puck_c = np.array([self.geom.to_centered(puck[0]), puck[1]])
        if self.fsm.state is RL3Task.HOME:
            at_home = np.linalg.norm(obs.ee_pos[:2] - self.home_xy) < 0.08
            if not at_home:
                return self._goto_home(obs, puck)
            completed = False
        else:
            completed = self._completed(self.fsm.state, obs, puck)
        prev = self.fsm.state
        self.fsm, task = rl3_fsm_step(self.fsm, puck_c, puck[2:], completed)
        if task is not prev:
            self.clock = RuleClock()
            self.task_steps = 0
        self.task_steps += 1
        if task is RL3Task.HOME:
            return self._goto_home(obs, puck)
        return self._run_task(obs, task, puck)


class SleepyAgent(HoldAgent):
    """Test agent that burns wall-clock time per step."""

    name = "sleepy"

    def __init__(self, spec=None, geom=None, sleep_s: float = 0.03):
        super().__init__(spec, geom)
        self.sleep_s = sleep_s

    def draw_action(self, obs: Observation) -> Command:
        import time
        time.sleep(self.sleep_s)
        return super().draw_action(obs)


AGENT_REGISTRY: dict[str, Callable[..., Agent]] = {
    "hold": HoldAgent,
    "chase": ChaseAgent,
    "composite": CompositeAgent,
    "rl3": RuleBasedAgent,
}


class AgentError(ValueError):
    pass


def make_agent(name: str, spec: Optional[RobotSpec] = None,
               geom: Optional[TableGeometry] = None, **kwargs) -> Agent:
    try:
        factory = AGENT_REGISTRY[name]
    except KeyError:
        raise AgentError(f"unknown agent {name!r}; available: "
                         f"{sorted(AGENT_REGISTRY)}") from None
    return factory(spec=spec, geom=geom, **kwargs)
