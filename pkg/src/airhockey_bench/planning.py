"""Sampling-based contact and trajectory planning for the striking mallet.

Shooting is reduced to a single decision variable, the shooting angle around
the puck; candidate angles are scored by Monte-Carlo rollouts of the
piecewise-linear puck model from the implied contact state, and refined by
iterative resampling with recentering and variance reduction. Deflection and
preparation contacts are planned the same way over (contact angle, approach
speed). Mallet trajectories reconstruct an acceleration-minimizing two-cubic
basis through the contact position, with the final velocity as decision
variable and the contact-velocity error as objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .estimation import EKFBelief, PiecewiseLinearPuckModel, classify_contact_mode
from .simcore.puck import resolve_mallet_contact
from .simcore.table import MalletState, PuckParams, PuckState, TableGeometry
from .policies import Workspace

DEFAULT_SHOT_SPEED = 1.8   # m/s, mallet speed at contact in the shot direction
CONTACT_EPS = 1e-6


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShotCostWeights:
    w_goal: float = 1.0
    w_vel: float = 0.5
    low_prob_threshold: float = 0.2
    low_prob_penalty: float = 5.0

    def __post_init__(self):
        if self.w_goal < 0 or self.w_vel < 0 or self.low_prob_penalty < 0:
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 8
    population: int = 24
    init_std: float = 0.35
    shrink: float = 0.7
    rollouts: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")


@dataclass(frozen=True)
class ContactPlan:
    t_contact: float
    mallet_pos: np.ndarray
    mallet_vel: np.ndarray
    intent: str
    cost: float = math.inf


@dataclass(frozen=True)
class TrajectoryParams:
    horizon_s: float = 0.5
    dt: float = 0.02
    max_final_speed: float = 2.0


# ---------------------------------------------------------------------------
# model rollouts


def rollout_to_goal_line(model: PiecewiseLinearPuckModel, state: np.ndarray,
                         geom: TableGeometry, max_steps: int = 200,
                         rng: Optional[np.random.Generator] = None,
                         noise_chol: Optional[dict] = None):
    """Roll a puck state until it crosses either end of the table.

    Returns (crossed_goal: bool, crossing_speed: float) for the opponent goal
    line; crossing values are interpolated inside the crossing step so they
    vary continuously with the initial state.
    """
    s = np.asarray(state, dtype=float).copy()
    for _ in range(max_steps):
        mode = classify_contact_mode(s, [], geom)
        s_next = model.predict(mode, s)
        if rng is not None and noise_chol is not None and noise_chol[mode] is not None:
            s_next = s_next + noise_chol[mode] @ rng.standard_normal(4)
        if s_next[0] >= geom.length:
            frac = (geom.length - s[0]) / (s_next[0] - s[0])
            y = s[1] + frac * (s_next[1] - s[1])
            v = s[2:] + frac * (s_next[2:] - s[2:])
            return geom.inside_goal_mouth(y), float(np.linalg.norm(v))
        if s_next[0] <= 0.0:
            return False, 0.0
        s = s_next
    return False, 0.0


def _noise_chol(model: PiecewiseLinearPuckModel) -> dict:
    chol = {}
    for mode, sig in model.Sigma.items():
        if np.any(sig):
            # tiny jitter keeps the factorization defined for PSD matrices
            chol[mode] = np.linalg.cholesky(sig + 1e-15 * np.eye(4))
        else:
            chol[mode] = None
    return chol


def _belief_sample(belief: EKFBelief, rng: Optional[np.random.Generator]):
    if rng is None or not np.any(belief.cov):
        return belief.mean.copy()
    chol = np.linalg.cholesky(belief.cov + 1e-15 * np.eye(4))
    return belief.mean + chol @ rng.standard_normal(4)


def contact_state_for_angle(angle: float, puck: np.ndarray, geom: TableGeometry,
                            shot_speed: float = DEFAULT_SHOT_SPEED) -> MalletState:
    """Mallet state implied by a shooting angle: touching the puck from
    behind the shot direction, moving at full speed along it."""
    u = np.array([math.cos(angle), math.sin(angle)])
    touch = geom.puck_radius + geom.mallet_radius
    pos = puck[:2] - (touch - CONTACT_EPS) * u
    return MalletState(pos=pos, vel=shot_speed * u)


def apply_contact(puck_state: np.ndarray, mallet: MalletState,
                  contact_params: PuckParams, geom: TableGeometry) -> np.ndarray:
    puck = PuckState(x=puck_state[0], y=puck_state[1],
                     vx=puck_state[2], vy=puck_state[3])
    out, _ = resolve_mallet_contact(puck, mallet, contact_params, geom)
    return np.array([out.x, out.y, out.vx, out.vy])


def shot_cost(angle: float, belief: EKFBelief, model: PiecewiseLinearPuckModel,
              weights: ShotCostWeights, geom: TableGeometry, rollouts: int = 1,
              rng: Optional[np.random.Generator] = None,
              contact_params: PuckParams = PuckParams(),
              shot_speed: float = DEFAULT_SHOT_SPEED) -> float:
    """Monte-Carlo shot cost: -w_goal*P(goal) - w_vel*E[speed | goal] plus a
    penalty when the scoring probability is low. Deterministic when the
    belief and process covariances are zero."""
    if rollouts < 1:
        raise ValueError("rollouts must be >= 1")
    chol = _noise_chol(model)
    goals = 0
    speed_sum = 0.0
    for _ in range(rollouts):
        s0 = _belief_sample(belief, rng)
        mallet = contact_state_for_angle(angle, s0, geom, shot_speed)
        s_hit = apply_contact(s0, mallet, contact_params, geom)
        scored, speed = rollout_to_goal_line(model, s_hit, geom, rng=rng,
                                             noise_chol=chol)
        if scored:
            goals += 1
            speed_sum += speed
    p_goal = goals / rollouts
    exp_speed = speed_sum / goals if goals else 0.0
    cost = -weights.w_goal * p_goal - weights.w_vel * exp_speed
    if p_goal < weights.low_prob_threshold:
        cost += weights.low_prob_penalty
    return float(cost)


# ---------------------------------------------------------------------------
# sampling loop (recenter on the best candidate, shrink the variance)


def _sample_minimize(eval_fn: Callable[[np.ndarray], float], mean0: np.ndarray,
                     std0: np.ndarray, cfg: SamplerConfig,
                     rng: np.random.Generator,
                     clip: Optional[Callable[[np.ndarray], np.ndarray]] = None):
    mean = np.atleast_1d(np.asarray(mean0, dtype=float)).copy()
    std = np.atleast_1d(np.asarray(std0, dtype=float)).copy()
    best_x, best_cost = None, math.inf
    for _ in range(cfg.iterations):
        cands = mean[None, :] + std[None, :] * rng.standard_normal((cfg.population, mean.size))
        if clip is not None:
            cands = np.array([clip(c) for c in cands])
        for cand in cands:
            cost = eval_fn(cand)
            if math.isfinite(cost) and cost < best_cost:
                best_cost = cost
                best_x = cand.copy()
        if best_x is not None:
            mean = best_x.copy()
        std = std * cfg.shrink
    if best_x is None:
        raise PlanningError("no finite-cost candidate found")
    return best_x, best_cost


def plan_shot(belief: EKFBelief, model: PiecewiseLinearPuckModel, t_contact: float,
              sampler: SamplerConfig, weights: ShotCostWeights,
              rng: np.random.Generator, geom: TableGeometry = TableGeometry(),
              contact_params: PuckParams = PuckParams(),
              shot_speed: float = DEFAULT_SHOT_SPEED) -> tuple[float, float]:
    """Optimize the shooting angle; returns (angle, cost).

    The initial mean aims at the goal center from the puck's predicted
    contact position; iterations resample around the best candidate so far
    with shrinking variance. Bit-deterministic for a given generator state.
    """
    puck = belief.mean
    aim0 = math.atan2(-puck[1], geom.length - puck[0])

    def eval_angle(x: np.ndarray) -> float:
        return shot_cost(float(x[0]), belief, model, weights, geom,
                         rollouts=sampler.rollouts, rng=rng,
                         contact_params=contact_params, shot_speed=shot_speed)

    best, cost = _sample_minimize(eval_angle, np.array([aim0]),
                                  np.array([sampler.init_std]), sampler, rng)
    return float(best[0]), float(cost)


# ---------------------------------------------------------------------------
# deflection / preparation contact planning


def predict_contact_time(belief: EKFBelief, model: PiecewiseLinearPuckModel,
                         geom: TableGeometry, reach_x: float,
                         max_steps: int = 150) -> tuple[float, np.ndarray]:
    """Earliest model time at which the predicted puck enters the reachable
    band x <= reach_x. Raises PlanningError when it never does."""
    s = belief.mean.copy()
    if s[0] <= reach_x:
        return 0.0, s
    for k in range(1, max_steps + 1):
        mode = classify_contact_mode(s, [], geom)
        s = model.predict(mode, s)
        if s[0] <= 0.0:
            break
        if s[0] <= reach_x:
            return k * model.dt, s
    raise PlanningError("puck is not predicted to reach the contact band")


def prepare_target_vy(puck_pos: np.ndarray, geom: TableGeometry,
                      speed: float = 0.6) -> float:
    """Heuristic preparation target: bounce the puck off the nearest side
    rail toward a point on the table's long axis."""
    wall = geom.wall_y if puck_pos[1] >= 0 else -geom.wall_y
    aim = np.array([min(puck_pos[0] + 0.3, geom.length / 2), 0.0])
    mirrored = np.array([aim[0], 2 * wall - aim[1]])
    d = mirrored - puck_pos[:2]
    norm = np.linalg.norm(d)
    if norm < 1e-9:
        return 0.0
    return float(speed * d[1] / norm)


def plan_deflection(belief: EKFBelief, target_vy: float, intent: str,
                    sampler: SamplerConfig, rng: np.random.Generator,
                    model: PiecewiseLinearPuckModel,
                    geom: TableGeometry = TableGeometry(),
                    contact_params: PuckParams = PuckParams(),
                    reach_x: float = 0.45,
                    max_speed: float = 1.5) -> ContactPlan:
    """Plan a mallet contact achieving a desired post-contact lateral puck
    velocity. Decision variables: contact angle around the predicted puck and
    approach speed. The preparation intent overrides target_vy with the
    rail-reflection heuristic."""
    if intent not in ("shoot", "deflect", "prepare"):
        raise ValueError(f"unknown intent {intent!r}")
    t_contact, s_c = predict_contact_time(belief, model, geom, reach_x)
    if intent == "prepare":
        target_vy = prepare_target_vy(s_c[:2], geom)
    touch = geom.puck_radius + geom.mallet_radius

    speed_c = float(np.linalg.norm(s_c[2:]))
    if speed_c > 1e-6:
        phi0 = math.atan2(s_c[3], s_c[2])   # place the mallet on the puck's path
    else:
        phi0 = math.atan2(s_c[1], s_c[0] - geom.length)  # between puck and own goal

    def eval_cand(x: np.ndarray) -> float:
        # negative speed = mallet receding from the puck (soft contact)
        phi, speed = float(x[0]), float(np.clip(x[1], -max_speed, max_speed))
        u = np.array([math.cos(phi), math.sin(phi)])
        mallet = MalletState(pos=s_c[:2] + (touch - CONTACT_EPS) * u,
                             vel=-speed * u)
        s_after = apply_contact(s_c, mallet, contact_params, geom)
        return abs(s_after[3] - target_vy)

    best, cost = _sample_minimize(
        eval_cand, np.array([phi0, 0.3 * max_speed]),
        np.array([sampler.init_std, 0.4 * max_speed]), sampler, rng)
    phi, speed = float(best[0]), float(np.clip(best[1], -max_speed, max_speed))
    u = np.array([math.cos(phi), math.sin(phi)])
    return ContactPlan(t_contact=t_contact,
                       mallet_pos=s_c[:2] + (touch - CONTACT_EPS) * u,
                       mallet_vel=-speed * u, intent=intent, cost=cost)


# ---------------------------------------------------------------------------
# basis-function mallet trajectory


@dataclass
class MalletTrajectory:
    times: np.ndarray        # (N,) control-period sample times
    pos: np.ndarray          # (N, 2)
    vel: np.ndarray          # (N, 2)
    final_vel: np.ndarray    # the decision variable
    contact_error: float     # | v(t_contact) - desired contact velocity |
    coeffs: np.ndarray       # (2 segments, 4 coefficients, 2 axes)
    t_contact: float
    horizon_s: float

    @property
    def first_action(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pos[0], self.vel[0]


def _min_accel_two_cubics(p0, v0, pc, vf, tc, T):
    """Per-axis acceleration-minimizing pair of cubics through the contact.

    Hard constraints: start position/velocity, contact position, C1 and C2
    continuity at the knot, final velocity. The remaining freedom minimizes
    the integrated squared acceleration.
    """
    h2 = T - tc
    n = 8  # a0..a3, b0..b3

    def acc_quad(h):
        # integral of (2 c2 + 6 c3 t)^2 over [0, h] as a quadratic form in (c2, c3)
        return np.array([[4 * h, 6 * h**2], [6 * h**2, 12 * h**3]])

    Q = np.zeros((n, n))
    Q[2:4, 2:4] = acc_quad(tc)
    Q[6:8, 6:8] = acc_quad(h2)

    A = np.zeros((7, n))
    b = np.zeros(7)
    A[0, 0] = 1.0;                      b[0] = p0          # p1(0)
    A[1, 1] = 1.0;                      b[1] = v0          # p1'(0)
    A[2, 0:4] = [1, tc, tc**2, tc**3];  b[2] = pc          # p1(tc)
    A[3, 4] = 1.0;                      b[3] = pc          # p2(0)
    A[4, 1:4] = [1, 2 * tc, 3 * tc**2]; A[4, 5] = -1.0     # C1 at knot
    A[5, 2:4] = [2, 6 * tc];            A[5, 6] = -2.0     # C2 at knot
    A[6, 5:8] = [1, 2 * h2, 3 * h2**2]; b[6] = vf          # p2'(T - tc)

    K = np.zeros((n + 7, n + 7))
    K[:n, :n] = Q + 1e-12 * np.eye(n)
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([np.zeros(n), b])
    sol = np.linalg.solve(K, rhs)
    return sol[:4], sol[4:8]


def _eval_cubic(c, t):
    t = np.asarray(t)
    pos = c[0] + c[1] * t + c[2] * t**2 + c[3] * t**3
    vel = c[1] + 2 * c[2] * t + 3 * c[3] * t**2
    return pos, vel


def _build_trajectory(p0, v0, contact: ContactPlan, vf, params: TrajectoryParams):
    tc, T = contact.t_contact, params.horizon_s
    seg1 = np.zeros((4, 2))
    seg2 = np.zeros((4, 2))
    for axis in range(2):
        seg1[:, axis], seg2[:, axis] = _min_accel_two_cubics(
            p0[axis], v0[axis], contact.mallet_pos[axis], vf[axis], tc, T)
    times = np.arange(1, int(round(T / params.dt)) + 1) * params.dt
    pos = np.empty((times.size, 2))
    vel = np.empty((times.size, 2))
    for axis in range(2):
        in1 = times <= tc
        pos[in1, axis], vel[in1, axis] = _eval_cubic(seg1[:, axis], times[in1])
        pos[~in1, axis], vel[~in1, axis] = _eval_cubic(seg2[:, axis], times[~in1] - tc)
    _, v_at_contact = zip(*(_eval_cubic(seg1[:, ax], np.array([tc])) for ax in range(2)))
    v_contact = np.array([v[0] for v in v_at_contact])
    err = float(np.linalg.norm(v_contact - contact.mallet_vel))
    return MalletTrajectory(times=times, pos=pos, vel=vel,
                            final_vel=np.asarray(vf, dtype=float),
                            contact_error=err,
                            coeffs=np.stack([seg1.T, seg2.T]).transpose(0, 2, 1),
                            t_contact=tc, horizon_s=T)


def _in_bounds(traj: MalletTrajectory, workspace: Workspace, dense_dt: float = 1e-3) -> bool:
    t_dense = np.arange(0.0, traj.horizon_s + dense_dt / 2, dense_dt)
    for axis in range(2):
        seg1 = traj.coeffs[0, :, axis]
        seg2 = traj.coeffs[1, :, axis]
        in1 = t_dense <= traj.t_contact
        p = np.empty_like(t_dense)
        p[in1] = _eval_cubic(seg1, t_dense[in1])[0]
        p[~in1] = _eval_cubic(seg2, t_dense[~in1] - traj.t_contact)[0]
        lo = workspace.x_lo if axis == 0 else workspace.y_lo
        hi = workspace.x_hi if axis == 0 else workspace.y_hi
        if p.min() < lo - 1e-9 or p.max() > hi + 1e-9:
            return False
    return True


def plan_mallet_trajectory(current_pos: np.ndarray, current_vel: np.ndarray,
                           contact: ContactPlan, params: TrajectoryParams,
                           sampler: SamplerConfig, geom: TableGeometry,
                           rng: np.random.Generator,
                           workspace: Workspace = Workspace()) -> MalletTrajectory:
    """Sample candidate final velocities and return the in-bounds trajectory
    with the smallest contact-velocity error."""
    if not 0 < contact.t_contact < params.horizon_s:
        raise PlanningError("contact time must lie inside the planning horizon")
    p0 = np.asarray(current_pos, dtype=float)
    v0 = np.asarray(current_vel, dtype=float)

    def eval_vf(x: np.ndarray) -> float:
        speed = np.linalg.norm(x)
        if speed > params.max_final_speed:
            x = x * (params.max_final_speed / speed)
        traj = _build_trajectory(p0, v0, contact, x, params)
        if not _in_bounds(traj, workspace):
            return math.inf
        return traj.contact_error

    vf0 = 0.25 * np.asarray(contact.mallet_vel, dtype=float)
    try:
        best, _ = _sample_minimize(eval_vf, vf0,
                                   np.full(2, 0.5 * params.max_final_speed),
                                   sampler, rng)
    except PlanningError:
        raise PlanningError("no in-bounds trajectory candidate found") from None
    speed = np.linalg.norm(best)
    if speed > params.max_final_speed:
        best = best * (params.max_final_speed / speed)
    return _build_trajectory(p0, v0, contact, best, params)
