"""Parameter-space optimizers: PGPE and a diagonal evolution strategy.

PGPE performs baseline-subtracted likelihood-ratio ascent on the mean and
spread of a Gaussian search distribution over controller parameters. The
evolution strategy is a separable CMA variant (diagonal covariance, rank-mu
update, cumulative step-size adaptation) used for black-box system
identification and rule tuning; it returns the best point it evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass
class PGPEState:
    mu: np.ndarray
    sigma: np.ndarray
    step_mu: float = 0.2
    step_sigma: float = 0.1
    sigma_min: float = 0.05
    baseline: Optional[float] = None

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mu[None, :] + self.sigma[None, :] * rng.standard_normal((n, self.mu.size))


def pgpe_update(state: PGPEState, thetas: Sequence[np.ndarray],
                returns: Sequence[float]) -> PGPEState:
    """One ascent step on (mu, sigma) from sampled parameters and returns.

    The mean return is the baseline, so adding a constant to all returns
    leaves the update unchanged and equal returns leave mu in place.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    returns = np.asarray(returns, dtype=float)
    if thetas.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if thetas.shape[0] != returns.size:
        raise ValueError("one return per sampled parameter vector")
    baseline = float(returns.mean())
    adv = returns - baseline
    diff = thetas - state.mu[None, :]
    grad_mu = (adv[:, None] * diff).mean(axis=0)
    grad_sigma = (adv[:, None] * (diff**2 - state.sigma[None, :]**2) / state.sigma[None, :]).mean(axis=0)
    new_mu = state.mu + state.step_mu * grad_mu
    new_sigma = np.maximum(state.sigma + state.step_sigma * grad_sigma, state.sigma_min)
    return PGPEState(mu=new_mu, sigma=new_sigma, step_mu=state.step_mu,
                     step_sigma=state.step_sigma, sigma_min=state.sigma_min,
                     baseline=baseline)


@dataclass
class BlackboxResult:
    x: np.ndarray
    fun: float
    evaluations: int
    history: list  # (iteration, best_so_far, population_mean_objective)


def blackbox_fit(objective: Callable[[np.ndarray], float], x0: Sequence[float],
                 budget: int, rng: np.random.Generator, sigma0: float = 0.3,
                 population: Optional[int] = None,
                 bounds: Optional[Sequence[tuple[float, float]]] = None) -> BlackboxResult:
    """Minimize a black-box objective with a separable-CMA evolution strategy.

    budget caps objective evaluations; budget 0 returns x0 unevaluated. The
    best evaluated point is returned, so best-so-far is non-increasing.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    if budget <= 0:
        return BlackboxResult(x=x0.copy(), fun=math.inf, evaluations=0, history=[])

    lam = population or (4 + int(3 * math.log(d)))
    lam = max(lam, 4)
    mu = lam // 2
    weights = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    mu_eff = 1.0 / np.sum(weights**2)

    c_sigma = (mu_eff + 2) / (d + mu_eff + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (d + 1)) - 1) + c_sigma
    c_c = (4 + mu_eff / d) / (d + 4 + 2 * mu_eff / d)
    # separable variant: larger learning rates than full CMA
    c_1 = 2.0 / ((d + 1.3) ** 2 + mu_eff) * (d + 2) / 3
    c_mu = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((d + 2) ** 2 + mu_eff) * (d + 2) / 3)
    chi_n = math.sqrt(d) * (1 - 1 / (4 * d) + 1 / (21 * d * d))

    m = x0.copy()
    sigma = float(sigma0)
    C = np.ones(d)
    p_sigma = np.zeros(d)
    p_c = np.zeros(d)

    lo = hi = None
    if bounds is not None:
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)

    best_x, best_f = x0.copy(), math.inf
    evals = 0
    history = []
    iteration = 0
    while evals + lam <= budget or (evals == 0 and budget > 0):
        n = min(lam, budget - evals)
        if n < 2:
            break
        z = rng.standard_normal((n, d))
        y = z * np.sqrt(C)[None, :]
        xs = m[None, :] + sigma * y
        if lo is not None:
            xs = np.clip(xs, lo, hi)
            y = (xs - m[None, :]) / sigma
            z = y / np.sqrt(C)[None, :]
        fs = np.array([objective(x) for x in xs])
        evals += n
        order = np.argsort(fs)
        if fs[order[0]] < best_f:
            best_f = float(fs[order[0]])
            best_x = xs[order[0]].copy()
        k = min(mu, n)
        w = weights[:k] / weights[:k].sum()
        sel_y = y[order[:k]]
        sel_z = z[order[:k]]
        y_w = w @ sel_y
        z_w = w @ sel_z
        m = m + sigma * y_w

        p_sigma = (1 - c_sigma) * p_sigma + math.sqrt(c_sigma * (2 - c_sigma) * mu_eff) * z_w
        sigma *= math.exp((c_sigma / d_sigma) * (np.linalg.norm(p_sigma) / chi_n - 1))
        h_sigma = float(np.linalg.norm(p_sigma) / math.sqrt(
            1 - (1 - c_sigma) ** (2 * (iteration + 1))) < (1.4 + 2 / (d + 1)) * chi_n)
        p_c = (1 - c_c) * p_c + h_sigma * math.sqrt(c_c * (2 - c_c) * mu_eff) * y_w
        C = (1 - c_1 - c_mu) * C + c_1 * p_c**2 + c_mu * (w @ sel_y**2)
        C = np.maximum(C, 1e-20)
        history.append((iteration, best_f, float(fs.mean())))
        iteration += 1
    if evals == 0:
        f0 = float(objective(x0))
        return BlackboxResult(x=x0.copy(), fun=f0, evaluations=1, history=[(0, f0, f0)])
    return BlackboxResult(x=best_x, fun=best_f, evaluations=evals, history=history)
