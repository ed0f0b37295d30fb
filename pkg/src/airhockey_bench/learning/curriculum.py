"""Staged easy/medium/hard initial-condition sampling.

Level weights follow two sigmoids over a progress scalar in [0, 1],
normalized so progress 0 is exactly all-easy and progress 1 all-hard. The
default centers and steepness encode the reference epoch schedule (easy until
3/8 of training, a soft switch over ~1/8, medium, another soft switch, hard).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

LEVELS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class PuckRange:
    """Uniform ranges for the initial puck state (centered coordinates)."""

    x: tuple[float, float]
    y: tuple[float, float]
    vx: tuple[float, float]
    vy: tuple[float, float]


# incoming-puck curriculum: the easy puck starts at the far end with low,
# mostly axial speed; the hard puck starts mid-table and fast
DEFAULT_LEVEL_RANGES = {
    "easy": PuckRange(x=(0.5, 0.8), y=(-0.3, 0.3), vx=(-0.8, -0.3), vy=(-0.05, 0.05)),
    "medium": PuckRange(x=(0.2, 0.6), y=(-0.35, 0.35), vx=(-1.2, -0.5), vy=(-0.3, 0.3)),
    "hard": PuckRange(x=(-0.2, 0.2), y=(-0.4, 0.4), vx=(-1.8, -0.8), vy=(-0.6, 0.6)),
}


def _norm_sigmoid(p: float, center: float, k: float) -> float:
    """Sigmoid rescaled so that it is exactly 0 at p=0 and 1 at p=1."""
    s = 1.0 / (1.0 + math.exp(-k * (p - center)))
    s0 = 1.0 / (1.0 + math.exp(k * center))
    s1 = 1.0 / (1.0 + math.exp(-k * (1.0 - center)))
    return (s - s0) / (s1 - s0)


@dataclass(frozen=True)
class CurriculumState:
    progress: float = 0.0
    steepness: float = 48.0
    center_easy_medium: float = 0.4375   # 3500/8000 epochs
    center_medium_hard: float = 0.8125   # 6500/8000 epochs
    level_ranges: dict = field(default_factory=lambda: dict(DEFAULT_LEVEL_RANGES))
    task_ranges: dict = field(default_factory=dict)  # task -> {level -> PuckRange}

    def __post_init__(self):
        if not 0 <= self.progress <= 1:
            raise ValueError("progress must be in [0, 1]")
        if self.center_easy_medium >= self.center_medium_hard:
            raise ValueError("level centers must be ordered")

    def weights(self) -> np.ndarray:
        s1 = _norm_sigmoid(self.progress, self.center_easy_medium, self.steepness)
        s2 = _norm_sigmoid(self.progress, self.center_medium_hard, self.steepness)
        w = np.array([1.0 - s1, s1 - s2, s2])
        w = np.maximum(w, 0.0)
        return w / w.sum()

    def advanced(self, dprogress: float) -> "CurriculumState":
        return replace(self, progress=min(1.0, max(0.0, self.progress + dprogress)))


@dataclass(frozen=True)
class InitialCondition:
    level: str
    x: float
    y: float
    vx: float
    vy: float


def curriculum_sample(state: CurriculumState, task: str,
                      rng: np.random.Generator) -> InitialCondition:
    """Draw a level by the current weights, then an initial puck state from
    that level's ranges (per-task overrides win over the defaults)."""
    w = state.weights()
    level = LEVELS[rng.choice(3, p=w)]
    ranges = state.task_ranges.get(task, state.level_ranges)
    r: PuckRange = ranges[level]
    return InitialCondition(
        level=level,
        x=float(rng.uniform(*r.x)),
        y=float(rng.uniform(*r.y)),
        vx=float(rng.uniform(*r.vx)),
        vy=float(rng.uniform(*r.vy)),
    )
