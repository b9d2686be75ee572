"""Pick and place with a kinematic two-state gripper."""

from __future__ import annotations

import numpy as np

from goalforge.core import SUBSTEP_DT, SUBSTEPS, EnvSpec, GoalEnv
from goalforge.envs.reach import V_MAX, command_velocity

GRAVITY = 9.81
TABLE_Z = 0.0
GRASP_RADIUS = 0.03
AIRBORNE_PROB = 0.5


def ballistic_substep(z: float, vz: float, dt: float = SUBSTEP_DT, floor: float = TABLE_Z):
    """Exact free fall over ``dt``; comes to rest on contact with ``floor``."""
    z_new = z + vz * dt - 0.5 * GRAVITY * dt * dt
    if z_new <= floor:
        return floor, 0.0
    return z_new, vz - GRAVITY * dt


class GraspPlace(GoalEnv):
    """Move a box to a target on the table or in the air above it.

    The last action channel closes the gripper when positive. A closed gripper
    within ``GRASP_RADIUS`` of the box holds it; while held the box follows
    the gripper, and opening drops it straight down onto the table.
    """

    low = np.array([-0.2, -0.2, TABLE_Z])
    high = np.array([0.2, 0.2, 0.4])
    object_range = 0.15
    goal_range = 0.15
    goal_height = (0.05, 0.25)
    min_goal_separation = 0.1

    def __init__(self, reward_mode: str = "sparse", seed: int | None = None, horizon: int = 50):
        super().__init__(reward_mode, seed)
        self.spec = EnvSpec(
            obs_dim=17,
            goal_dim=3,
            action_dim=4,
            action_low=-np.ones(4),
            action_high=np.ones(4),
            horizon=horizon,
            position_threshold=0.05,
            reward_mode=reward_mode,
            goal_space="position",
        )
        self.gripper = np.zeros(3)
        self.gripper_vel = np.zeros(3)
        self.grip_closed = False
        self.object = np.zeros(3)
        self.object_vel = np.zeros(3)
        self.held = False

    def _reset_state(self):
        self.gripper = np.array([0.0, 0.0, 0.1])
        self.gripper_vel = np.zeros(3)
        self.grip_closed = False
        self.held = False
        xy = self.rng.uniform(-self.object_range, self.object_range, size=2)
        self.object = np.array([xy[0], xy[1], TABLE_Z])
        self.object_vel = np.zeros(3)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        airborne = rng.random() < AIRBORNE_PROB
        while True:
            xy = rng.uniform(-self.goal_range, self.goal_range, size=2)
            if np.linalg.norm(xy - self.object[:2]) >= self.min_goal_separation:
                break
        z = rng.uniform(*self.goal_height) if airborne else TABLE_Z
        return np.array([xy[0], xy[1], z])

    def _sample_goal(self):
        return self.sample_goal(self.rng)

    def _substep(self, command, close: bool):
        prev = self.gripper
        self.gripper = np.clip(prev + command * SUBSTEP_DT, self.low, self.high)
        self.gripper_vel = (self.gripper - prev) / SUBSTEP_DT
        self.grip_closed = close
        if not close:
            if self.held:
                self.object_vel = np.array([0.0, 0.0, self.object_vel[2]])
            self.held = False
        elif not self.held and np.linalg.norm(self.gripper - self.object) < GRASP_RADIUS:
            self.held = True
        if self.held:
            self.object = self.gripper.copy()
            self.object_vel = self.gripper_vel.copy()
        elif self.object[2] > TABLE_Z or self.object_vel[2] != 0.0:
            z, vz = ballistic_substep(self.object[2], self.object_vel[2])
            self.object = np.array([self.object[0], self.object[1], z])
            self.object_vel = np.array([0.0, 0.0, vz])

    def _simulate(self, action):
        command = command_velocity(action[:3], V_MAX)
        close = bool(action[3] > 0)
        for _ in range(SUBSTEPS):
            self._substep(command, close)

    def _observation(self):
        return np.concatenate(
            [
                self.gripper,
                self.gripper_vel,
                [1.0 if self.grip_closed else 0.0],
                self.object,
                self.object_vel,
                self.object - self.gripper,
                [1.0 if self.held else 0.0],
            ]
        )

    def _achieved_goal(self):
        return self.object.copy()
