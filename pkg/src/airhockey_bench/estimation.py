"""Sim-to-sim gap machinery and puck state estimation.

Observation corruption adds Gaussian noise to the puck pose and models
tracking loss as a two-state Markov process during which the reported puck
position freezes and the reported velocity is zero. A constant-velocity
Kalman filter smooths puck observations; the piecewise-linear puck model
carries one (A, B, Sigma) triple per contact mode (free / wall / mallet) and
is fitted from data by per-mode least squares. `ekf_rollout` propagates a
belief through the model, switching mode matrices at contact discontinuities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .simcore.arm import ArmTrackingModel, TrackingMode
from .simcore.table import MalletState, PuckParams, PuckState, TableGeometry

MODES = ("free", "wall", "mallet")
CONTACT_MARGIN = 0.005  # m, wall/mallet proximity margin for mode labels
MODEL_DT = 0.02         # the model operates at the 50 Hz replanning rate


class FittingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# observation corruption


@dataclass(frozen=True)
class NoiseConfig:
    puck_pos_std: float = 0.003
    puck_angle_std: float = 0.01
    joint_pos_std: float = 0.0
    loss_enter_prob: float = 0.01   # per observation step
    loss_mean_duration: int = 10    # steps
    noise_enabled: bool = True
    loss_enabled: bool = True

    def __post_init__(self):
        if min(self.puck_pos_std, self.puck_angle_std, self.joint_pos_std) < 0:
            raise ValueError("noise stds must be non-negative")
        if not 0 <= self.loss_enter_prob <= 1:
            raise ValueError("loss_enter_prob must be a probability")
        if self.loss_mean_duration < 1:
            raise ValueError("loss_mean_duration must be >= 1 step")


class ObservationCorruptor:
    """Stateful corruption pipeline for one agent's observation stream."""

    def __init__(self, cfg: NoiseConfig):
        self.cfg = cfg
        self.in_loss = False
        self.frozen_pos: Optional[np.ndarray] = None
        self.frozen_theta = 0.0

    def reset(self):
        self.in_loss = False
        self.frozen_pos = None

    def corrupt(self, obs, rng: np.random.Generator):
        """Return a corrupted copy of an Observation-like object.

        The object must expose puck_pos (2,), puck_theta, puck_vel (2,),
        puck_omega and q; a shallow dataclass replace is performed.
        """
        cfg = self.cfg
        if cfg.loss_enabled:
            if self.in_loss:
                if rng.random() < 1.0 / cfg.loss_mean_duration:
                    self.in_loss = False
            elif rng.random() < cfg.loss_enter_prob:
                self.in_loss = True
                pos = np.array(obs.puck_pos, dtype=float)
                if cfg.noise_enabled and cfg.puck_pos_std > 0:
                    pos = pos + rng.normal(0.0, cfg.puck_pos_std, 2)
                self.frozen_pos = pos
                self.frozen_theta = float(obs.puck_theta)
        if self.in_loss and self.frozen_pos is not None:
            return replace(obs, puck_pos=self.frozen_pos.copy(),
                           puck_theta=self.frozen_theta,
                           puck_vel=np.zeros(2), puck_omega=0.0,
                           tracking_lost=True)
        out = obs
        if cfg.noise_enabled:
            pos = np.array(obs.puck_pos, dtype=float)
            theta = float(obs.puck_theta)
            if cfg.puck_pos_std > 0:
                pos = pos + rng.normal(0.0, cfg.puck_pos_std, 2)
            if cfg.puck_angle_std > 0:
                theta = theta + rng.normal(0.0, cfg.puck_angle_std)
            q = np.array(obs.q, dtype=float)
            if cfg.joint_pos_std > 0:
                q = q + rng.normal(0.0, cfg.joint_pos_std, q.shape)
            out = replace(obs, puck_pos=pos, puck_theta=theta, q=q)
        return out


# ---------------------------------------------------------------------------
# model mismatch


@dataclass(frozen=True)
class MismatchConfig:
    """Multiplicative perturbation ranges; (1, 1) leaves a knob untouched."""

    gain_scale_range: tuple[float, float] = (1.0, 1.0)
    tau_range: tuple[float, float] = (1.0, 1.0)
    friction_range: tuple[float, float] = (1.0, 1.0)
    restitution_range: tuple[float, float] = (1.0, 1.0)
    lag_tau_s: float = 0.02   # ideal arms switch to lag mode with this tau


def _draw(rng: np.random.Generator, lo_hi: tuple[float, float]) -> float:
    lo, hi = lo_hi
    if lo == hi:
        return lo
    return float(rng.uniform(lo, hi))


def perturb_model(tracking: ArmTrackingModel, puck_params: PuckParams,
                  cfg: MismatchConfig, rng: np.random.Generator
                  ) -> tuple[ArmTrackingModel, PuckParams]:
    """Scale arm tracking and puck parameters by sampled factors."""
    g = _draw(rng, cfg.gain_scale_range)
    t = _draw(rng, cfg.tau_range)
    f = _draw(rng, cfg.friction_range)
    r = _draw(rng, cfg.restitution_range)
    if (g, t, f, r) == (1.0, 1.0, 1.0, 1.0):
        return tracking, puck_params
    base_tau = tracking.tau if tracking.mode is TrackingMode.FIRST_ORDER_LAG else cfg.lag_tau_s
    new_tracking = ArmTrackingModel(mode=TrackingMode.FIRST_ORDER_LAG,
                                    tau=base_tau * t,
                                    gain_scale=tracking.gain_scale * g)
    new_puck = replace(puck_params,
                       slide_friction=puck_params.slide_friction * f,
                       wall_restitution=min(1.0, puck_params.wall_restitution * r),
                       mallet_restitution=min(1.0, puck_params.mallet_restitution * r))
    return new_tracking, new_puck


# ---------------------------------------------------------------------------
# constant-velocity Kalman filter


def _check_psd(P: np.ndarray):
    if not np.allclose(P, P.T, atol=1e-9):
        raise ValueError("covariance must be symmetric")
    if np.linalg.eigvalsh(P).min() < -1e-10:
        raise ValueError("covariance must be positive semi-definite")


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def cv_process_noise(dt: float, accel_psd: float) -> np.ndarray:
    """White-noise-acceleration process covariance for the CV model."""
    q11 = accel_psd * dt**3 / 3
    q12 = accel_psd * dt**2 / 2
    q22 = accel_psd * dt
    Q = np.zeros((4, 4))
    Q[0, 0] = Q[1, 1] = q11
    Q[0, 2] = Q[2, 0] = Q[1, 3] = Q[3, 1] = q12
    Q[2, 2] = Q[3, 3] = q22
    return Q


@dataclass
class KalmanState:
    """Belief over (x, y, vx, vy) with CV process and position measurements."""

    mean: np.ndarray
    cov: np.ndarray
    process_noise: np.ndarray
    obs_noise: np.ndarray

    @staticmethod
    def initial(pos: Sequence[float], pos_var: float = 1e-2, vel_var: float = 1.0,
                dt: float = 0.02, accel_psd: float = 0.3,
                obs_std: float = 0.003) -> "KalmanState":
        mean = np.array([pos[0], pos[1], 0.0, 0.0])
        cov = np.diag([pos_var, pos_var, vel_var, vel_var])
        return KalmanState(mean=mean, cov=cov,
                           process_noise=cv_process_noise(dt, accel_psd),
                           obs_noise=np.eye(2) * obs_std**2)


def kalman_step(kf: KalmanState, z: Optional[Sequence[float]], dt: float) -> KalmanState:
    """Constant-velocity predict plus position update; z=None predicts only
    (tracking loss)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_psd(kf.cov)
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    mean = F @ kf.mean
    cov = _symmetrize(F @ kf.cov @ F.T + kf.process_noise)
    if z is None:
        return KalmanState(mean=mean, cov=cov, process_noise=kf.process_noise,
                           obs_noise=kf.obs_noise)
    z = np.asarray(z, dtype=float)
    H = np.zeros((2, 4))
    H[0, 0] = H[1, 1] = 1.0
    S = H @ cov @ H.T + kf.obs_noise
    K = cov @ H.T @ np.linalg.inv(S)
    mean = mean + K @ (z - H @ mean)
    cov = _symmetrize((np.eye(4) - K @ H) @ cov)
    return KalmanState(mean=mean, cov=cov, process_noise=kf.process_noise,
                       obs_noise=kf.obs_noise)


# ---------------------------------------------------------------------------
# piecewise-linear puck model


def classify_contact_mode(puck_state: Sequence[float], mallets: Sequence[MalletState],
                          geom: TableGeometry, margin: float = CONTACT_MARGIN) -> str:
    """Label the dynamics mode: mallet beats wall beats free."""
    x, y = float(puck_state[0]), float(puck_state[1])
    touch = geom.puck_radius + geom.mallet_radius + margin
    for m in mallets:
        if np.hypot(x - m.pos[0], y - m.pos[1]) <= touch:
            return "mallet"
    near_side = abs(y) >= geom.wall_y - margin
    near_end = (x <= geom.puck_radius + margin or x >= geom.length - geom.puck_radius - margin) \
        and not geom.inside_goal_mouth(y)
    if near_side or near_end:
        return "wall"
    return "free"


@dataclass
class PiecewiseLinearPuckModel:
    """Per-mode linear dynamics s' = A s_p + B s_m with process covariance."""

    A: dict
    B: dict
    Sigma: dict
    dt: float = MODEL_DT

    def __post_init__(self):
        for mode in MODES:
            if mode not in self.A or mode not in self.B or mode not in self.Sigma:
                raise ValueError(f"mode {mode!r} missing from the model")
            _check_psd(np.asarray(self.Sigma[mode]))

    def predict(self, mode: str, s_p: np.ndarray, s_m: Optional[np.ndarray] = None) -> np.ndarray:
        out = self.A[mode] @ s_p
        if s_m is not None:
            out = out + self.B[mode] @ s_m
        return out

    def to_dict(self) -> dict:
        return {"dt": self.dt, "modes": {m: {"A": self.A[m].tolist(),
                                             "B": self.B[m].tolist(),
                                             "Sigma": self.Sigma[m].tolist()}
                                         for m in MODES}}

    @staticmethod
    def from_dict(data: dict) -> "PiecewiseLinearPuckModel":
        modes = data["modes"]
        return PiecewiseLinearPuckModel(
            A={m: np.asarray(modes[m]["A"], dtype=float) for m in MODES},
            B={m: np.asarray(modes[m]["B"], dtype=float) for m in MODES},
            Sigma={m: np.asarray(modes[m]["Sigma"], dtype=float) for m in MODES},
            dt=float(data.get("dt", MODEL_DT)))

    def save(self, path):
        with open(path, "w") as f:
            json.dump({"schema": 1, **self.to_dict()}, f)

    @staticmethod
    def load(path) -> "PiecewiseLinearPuckModel":
        with open(path) as f:
            data = json.load(f)
        if data.get("schema") != 1:
            raise ValueError(f"unsupported model schema {data.get('schema')!r}")
        return PiecewiseLinearPuckModel.from_dict(data)


def analytic_puck_model(params: PuckParams, dt: float = MODEL_DT) -> PiecewiseLinearPuckModel:
    """Closed-form model matching the simulator's free-slide decay law.

    The wall mode reflects the lateral velocity with the wall restitution;
    the mallet mode reuses the free matrices (contact impulses are applied
    explicitly by the planners, not through B).
    """
    decay = float(np.exp(-params.slide_friction * dt))
    A_free = np.array([[1.0, 0.0, decay * dt, 0.0],
                       [0.0, 1.0, 0.0, decay * dt],
                       [0.0, 0.0, decay, 0.0],
                       [0.0, 0.0, 0.0, decay]])
    A_wall = A_free.copy()
    A_wall[1, 3] = 0.0
    A_wall[3, 3] = -params.wall_restitution * decay
    zero = np.zeros((4, 4))
    return PiecewiseLinearPuckModel(
        A={"free": A_free, "wall": A_wall, "mallet": A_free.copy()},
        B={m: zero.copy() for m in MODES},
        Sigma={m: zero.copy() for m in MODES},
        dt=dt)


def fit_piecewise_model(dataset: Sequence[tuple], dt: float = MODEL_DT,
                        min_samples: int = 20) -> PiecewiseLinearPuckModel:
    """Least-squares fit of (A_i, B_i) per mode, Sigma_i from residuals.

    dataset rows are (s_p, s_m, s_p_next, mode) with 4-vector states.
    """
    by_mode = {m: [] for m in MODES}
    for s_p, s_m, s_next, mode in dataset:
        if mode not in by_mode:
            raise FittingError(f"unknown mode label {mode!r}")
        by_mode[mode].append((np.asarray(s_p, dtype=float),
                              np.asarray(s_m, dtype=float),
                              np.asarray(s_next, dtype=float)))
    A, B, Sigma = {}, {}, {}
    for mode, rows in by_mode.items():
        if len(rows) < min_samples:
            raise FittingError(f"mode {mode!r} has {len(rows)} samples; "
                               f"need at least {min_samples}")
        X = np.array([np.concatenate([sp, sm]) for sp, sm, _ in rows])
        Y = np.array([sn for _, _, sn in rows])
        theta, *_ = np.linalg.lstsq(X, Y, rcond=None)
        A[mode] = theta[:4].T.copy()
        B[mode] = theta[4:].T.copy()
        resid = Y - X @ theta
        Sigma[mode] = _symmetrize(resid.T @ resid / len(rows))
    return PiecewiseLinearPuckModel(A=A, B=B, Sigma=Sigma, dt=dt)


@dataclass
class EKFBelief:
    mean: np.ndarray
    cov: np.ndarray
    mode: str = "free"

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        _check_psd(self.cov)

    @staticmethod
    def from_kalman(kf: KalmanState) -> "EKFBelief":
        return EKFBelief(mean=kf.mean.copy(), cov=kf.cov.copy())


def ekf_rollout(model: PiecewiseLinearPuckModel, belief: EKFBelief,
                mallet_plan: Sequence[Optional[MalletState]], steps: int,
                geom: TableGeometry) -> list[tuple[np.ndarray, np.ndarray, str]]:
    """Propagate (mean, cov) through the piecewise model for `steps` steps.

    The mode is classified from the current mean and the planned mallet state;
    covariance propagates as A P A^T + Sigma. Returns per-step
    (mean, cov, mode) tuples.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    mean = belief.mean.copy()
    cov = belief.cov.copy()
    out = []
    for k in range(steps):
        mallet = mallet_plan[k] if k < len(mallet_plan) else None
        mallets = [mallet] if mallet is not None else []
        mode = classify_contact_mode(mean, mallets, geom)
        s_m = None
        if mallet is not None:
            s_m = np.concatenate([mallet.pos, mallet.vel])
        mean = model.predict(mode, mean, s_m if mode == "mallet" else None)
        A = model.A[mode]
        cov = _symmetrize(A @ cov @ A.T + model.Sigma[mode])
        out.append((mean.copy(), cov.copy(), mode))
    return out
