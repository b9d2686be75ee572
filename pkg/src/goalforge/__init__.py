"""Multi-goal RL environments and a DDPG+HER benchmark harness."""

from goalforge.core import (
    ContractError,
    EnvSpec,
    GoalEnv,
    GoalObservation,
    StepResult,
    compute_reward,
    flatten_observation,
    is_success,
    make,
    registered_ids,
)

__version__ = "0.1.0"
