"""
Step rewards and the UCH time-varying coefficient.

The raw reward of a step is minus its length under the chosen metric. With
UCH enabled the raw reward is scaled by

    mu(t) = mu0 / (pi + pi * exp(-t))

where t is the episode index, so the penalty grows from mu0/(2 pi) towards
mu0/pi as training goes on.
"""

import math
from dataclasses import dataclass
from enum import StrEnum

from gridiql.errors import GridDomainError
from gridiql.geometry import Metric, distance
from gridiql.grid_env import Outcome


class CollisionPenalty(StrEnum):
    # a blocked move costs what the attempted step would have cost
    ATTEMPTED_STEP = "attempted_step"


@dataclass(frozen=True)
class RewardConfig:
    metric: Metric = Metric.CHEBYSHEV
    mu0: float = 0.016
    uch_enabled: bool = False
    goal_reward: float = 0.0
    collision_penalty_mode: CollisionPenalty = CollisionPenalty.ATTEMPTED_STEP

    def __post_init__(self):
        if self.uch_enabled and not self.mu0 > 0:
            raise GridDomainError(f"mu0 must be positive when UCH is on, got {self.mu0}", name="mu0")
        if not math.isfinite(self.mu0):
            raise GridDomainError(f"mu0 must be finite, got {self.mu0}", name="mu0")
        if not math.isfinite(self.goal_reward):
            raise GridDomainError(f"goal_reward must be finite, got {self.goal_reward}", name="goal_reward")


def raw_reward(metric, prev_xy, xy):
    """Minus the distance travelled from `prev_xy` to `xy` (never positive)."""
    return -distance(metric, xy, prev_xy)


def uch_coefficient(t, mu0):
    if t < 0:
        raise GridDomainError(f"episode index must be >= 0, got {t}", name="t")
    if not mu0 > 0:
        raise GridDomainError(f"mu0 must be positive, got {mu0}", name="mu0")
    return mu0 / (math.pi + math.pi * math.exp(-t))


def reward_scale(cfg, t):
    """Factor between a raw step cost and the reward the agent sees at episode `t`."""
    return uch_coefficient(t, cfg.mu0) if cfg.uch_enabled else 1.0


def shaped_reward(cfg, t, transition):
    """Reward for one transition at episode `t`.

    A blocked move is charged the length of the step it attempted, so
    bumping into a wall is never free.
    """
    if transition.outcome is Outcome.BLOCKED_STAY:
        base = raw_reward(cfg.metric, transition.from_xy, transition.attempted_xy)
    else:
        base = raw_reward(cfg.metric, transition.from_xy, transition.to_xy)
    reward = reward_scale(cfg, t) * base
    if transition.outcome is Outcome.REACHED_GOAL:
        reward += cfg.goal_reward
    return reward
