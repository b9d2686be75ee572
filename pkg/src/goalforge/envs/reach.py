"""Point reaching: move a kinematic gripper to a target position."""

from __future__ import annotations

import numpy as np

from goalforge.core import SUBSTEP_DT, SUBSTEPS, EnvSpec, GoalEnv

HALF_EXTENT = 0.2  # workspace is a 0.4 m cube centred at the origin
GOAL_RANGE = 0.15  # goals lie in a 0.3 m cube around the start
V_MAX = 1.0  # m/s


def command_velocity(action, v_max: float = V_MAX) -> np.ndarray:
    """Map a clipped action to a velocity whose norm is at most ``v_max``."""
    vel = v_max * np.asarray(action, dtype=np.float64)
    speed = np.linalg.norm(vel)
    if speed > v_max:
        vel *= v_max / speed
    return vel


def move_in_box(position, velocity, low, high, substeps=SUBSTEPS, dt=SUBSTEP_DT):
    """Integrate a held velocity over ``substeps``, clamping at the box walls.

    Velocity components pushing into a wall are zeroed once the wall is hit.
    """
    pos = [float(c) for c in position]
    vel = [float(c) for c in velocity]
    for i in range(len(pos)):
        p, v, lo, hi = pos[i], vel[i], float(low[i]), float(high[i])
        if v == 0.0:
            continue
        for _ in range(substeps):
            p += v * dt
            if p < lo or p > hi:
                p = lo if p < lo else hi
                v = 0.0
                break
        pos[i], vel[i] = p, v
    return np.array(pos), np.array(vel)


class PointReach(GoalEnv):
    def __init__(self, reward_mode: str = "sparse", seed: int | None = None, horizon: int = 50):
        super().__init__(reward_mode, seed)
        self.spec = EnvSpec(
            obs_dim=6,
            goal_dim=3,
            action_dim=3,
            action_low=-np.ones(3),
            action_high=np.ones(3),
            horizon=horizon,
            position_threshold=0.05,
            reward_mode=reward_mode,
            goal_space="position",
        )
        self.low = -HALF_EXTENT * np.ones(3)
        self.high = HALF_EXTENT * np.ones(3)
        self.position = np.zeros(3)
        self.velocity = np.zeros(3)

    def _reset_state(self):
        self.position = np.zeros(3)
        self.velocity = np.zeros(3)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-GOAL_RANGE, GOAL_RANGE, size=3)

    def _sample_goal(self):
        return self.sample_goal(self.rng)

    def _simulate(self, action):
        self.position, self.velocity = move_in_box(
            self.position, command_velocity(action), self.low, self.high
        )

    def _observation(self):
        return np.concatenate([self.position, self.velocity])

    def _achieved_goal(self):
        return self.position.copy()
