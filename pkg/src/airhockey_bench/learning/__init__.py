from .curriculum import (CurriculumState, InitialCondition, PuckRange,
                         curriculum_sample, DEFAULT_LEVEL_RANGES, LEVELS)
from .optimizers import BlackboxResult, PGPEState, blackbox_fit, pgpe_update
from .rewards import (AIRHOCKIT_TASKS, HitTriangle, SPACER_REWARD_TABLE,
                      TransitionRecord, TriangleRewardParams, reward_airhockit,
                      reward_rl3_hit, reward_spacer)

__all__ = [
    "CurriculumState", "InitialCondition", "PuckRange", "curriculum_sample",
    "DEFAULT_LEVEL_RANGES", "LEVELS",
    "BlackboxResult", "PGPEState", "blackbox_fit", "pgpe_update",
    "AIRHOCKIT_TASKS", "HitTriangle", "SPACER_REWARD_TABLE", "TransitionRecord",
    "TriangleRewardParams", "reward_airhockit", "reward_rl3_hit", "reward_spacer",
]
