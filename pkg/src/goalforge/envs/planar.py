"""Tabletop pushing and sliding with a kinematic disc effector.

The effector moves with the commanded velocity. When it overlaps the object
the object is projected out along the contact normal and picks up the
effector's normal velocity (transfer coefficient 1). A free object
decelerates at a constant rate (Coulomb friction), integrated in closed form
so the stopping distance is exactly ``v**2 / (2 * decel)``.
"""

from __future__ import annotations

import math

import numpy as np

from goalforge.core import SUBSTEP_DT, SUBSTEPS, EnvSpec, GoalEnv
from goalforge.envs.reach import command_velocity

EFFECTOR_RADIUS = 0.02
OBJECT_RADIUS = 0.025
CONTACT_DISTANCE = EFFECTOR_RADIUS + OBJECT_RADIUS
PUSH_HALF_EXTENT = 0.2


def friction_substep(pos, vel, decel: float, dt: float = SUBSTEP_DT):
    """Advance a sliding object by ``dt`` under constant deceleration."""
    (px, py), (vx, vy) = _slide(pos[0], pos[1], vel[0], vel[1], decel, dt)
    return np.array([px, py]), np.array([vx, vy])


def _slide(px, py, vx, vy, decel, dt):
    speed = math.hypot(vx, vy)
    if speed == 0.0:
        return (px, py), (vx, vy)
    ux, uy = vx / speed, vy / speed
    if speed > decel * dt:
        travelled = speed * dt - 0.5 * decel * dt * dt
        speed -= decel * dt
    else:
        travelled = speed * speed / (2.0 * decel)
        speed = 0.0
    return (px + travelled * ux, py + travelled * uy), (ux * speed, uy * speed)


def resolve_contact(effector, effector_vel, obj, obj_vel, motion_dir=None):
    """Push ``obj`` out of the effector footprint along the contact normal.

    Returns ``(obj, obj_vel, touched)``.
    """
    md = (0.0, 0.0) if motion_dir is None else (float(motion_dir[0]), float(motion_dir[1]))
    o, v, touched = _contact(
        float(effector[0]), float(effector[1]), float(effector_vel[0]), float(effector_vel[1]),
        float(obj[0]), float(obj[1]), float(obj_vel[0]), float(obj_vel[1]), md,
    )
    return np.array(o), np.array(v), touched


def _contact(ex, ey, evx, evy, ox, oy, ovx, ovy, motion_dir):
    dx, dy = ox - ex, oy - ey
    dist = math.hypot(dx, dy)
    if dist >= CONTACT_DISTANCE:
        return (ox, oy), (ovx, ovy), False
    if dist > 1e-12:
        nx, ny = dx / dist, dy / dist
    elif motion_dir != (0.0, 0.0):
        m = math.hypot(*motion_dir)
        nx, ny = motion_dir[0] / m, motion_dir[1] / m
    else:
        nx, ny = 1.0, 0.0
    ox, oy = ex + CONTACT_DISTANCE * nx, ey + CONTACT_DISTANCE * ny
    vn_obj = ovx * nx + ovy * ny
    vn_eff = evx * nx + evy * ny
    if vn_eff > vn_obj:
        ovx += (vn_eff - vn_obj) * nx
        ovy += (vn_eff - vn_obj) * ny
    return (ox, oy), (ovx, ovy), True


def _embed(xy) -> np.ndarray:
    return np.array([xy[0], xy[1], 0.0])


class _PlanarEnv(GoalEnv):
    """Shared machinery for the push and slide tables."""

    v_max: float
    decel: float
    table_low: np.ndarray
    table_high: np.ndarray

    def __init__(self, reward_mode: str = "sparse", seed: int | None = None, horizon: int = 50):
        super().__init__(reward_mode, seed)
        self.spec = EnvSpec(
            obs_dim=10,
            goal_dim=3,
            action_dim=3,
            action_low=-np.ones(3),
            action_high=np.ones(3),
            horizon=horizon,
            position_threshold=0.05,
            reward_mode=reward_mode,
            goal_space="position",
        )
        self.effector = np.zeros(2)
        self.effector_vel = np.zeros(2)
        self.object = np.zeros(2)
        self.object_vel = np.zeros(2)

    def _constrain_effector(self, x: float, y: float) -> tuple[float, float]:
        raise NotImplementedError

    def _simulate(self, action):
        cx, cy = command_velocity(action[:2], self.v_max)
        cx, cy = float(cx), float(cy)
        ex, ey = float(self.effector[0]), float(self.effector[1])
        evx = evy = 0.0
        ox, oy = float(self.object[0]), float(self.object[1])
        ovx, ovy = float(self.object_vel[0]), float(self.object_vel[1])
        (lox, loy), (hix, hiy) = self.table_low, self.table_high
        dt = SUBSTEP_DT
        for _ in range(SUBSTEPS):
            nx, ny = self._constrain_effector(ex + cx * dt, ey + cy * dt)
            evx, evy = (nx - ex) / dt, (ny - ey) / dt
            ex, ey = nx, ny
            (ox, oy), (ovx, ovy), _ = _contact(ex, ey, evx, evy, ox, oy, ovx, ovy, (cx, cy))
            (ox, oy), (ovx, ovy) = _slide(ox, oy, ovx, ovy, self.decel, dt)
            if ox < lox or ox > hix:
                ox, ovx = min(max(ox, lox), hix), 0.0
            if oy < loy or oy > hiy:
                oy, ovy = min(max(oy, loy), hiy), 0.0
            dx, dy = ox - ex, oy - ey
            dist = math.hypot(dx, dy)
            if dist < CONTACT_DISTANCE:
                # object pinned at the table edge: back the effector off instead
                ux, uy = (dx / dist, dy / dist) if dist > 1e-12 else (1.0, 0.0)
                ex, ey = ox - CONTACT_DISTANCE * ux, oy - CONTACT_DISTANCE * uy
        self.effector = np.array([ex, ey])
        self.effector_vel = np.array([evx, evy])
        self.object = np.array([ox, oy])
        self.object_vel = np.array([ovx, ovy])

    def _observation(self):
        return np.concatenate(
            [
                self.effector,
                self.effector_vel,
                self.object,
                self.object_vel,
                self.object - self.effector,
            ]
        )

    def _achieved_goal(self):
        return _embed(self.object)

    def _sample_goal(self):
        return self.sample_goal(self.rng)


class PlanarPush(_PlanarEnv):
    """Push a puck to a target on a 0.4 m square table. No grasping."""

    v_max = 1.0
    decel = 10.0
    table_low = np.array([-PUSH_HALF_EXTENT, -PUSH_HALF_EXTENT])
    table_high = np.array([PUSH_HALF_EXTENT, PUSH_HALF_EXTENT])
    object_range = 0.1
    goal_range = 0.15
    min_goal_separation = 0.1

    def _constrain_effector(self, x, y):
        h = PUSH_HALF_EXTENT
        return min(max(x, -h), h), min(max(y, -h), h)

    def _reset_state(self):
        self.effector = np.zeros(2)
        self.effector_vel = np.zeros(2)
        while True:
            obj = self.rng.uniform(-self.object_range, self.object_range, size=2)
            if np.linalg.norm(obj) > CONTACT_DISTANCE + 0.03:
                break
        self.object = obj
        self.object_vel = np.zeros(2)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        while True:
            xy = rng.uniform(-self.goal_range, self.goal_range, size=2)
            if np.linalg.norm(xy - self.object) >= self.min_goal_separation:
                return _embed(xy)


class Slide(_PlanarEnv):
    """Strike a puck so it slides to a target beyond the striker's reach."""

    v_max = 2.0
    decel = 1.5
    reach = 0.4  # striker confined to a disc of this radius about the origin
    table_low = np.array([-0.1, -0.3])
    table_high = np.array([1.4, 0.3])  # 1.5 m long
    goal_x = (0.85, 1.3)
    goal_y = (-0.15, 0.15)

    def _constrain_effector(self, x, y):
        r = math.hypot(x, y)
        if r > self.reach:
            x, y = x * self.reach / r, y * self.reach / r
        return max(x, self.table_low[0]), y

    def _reset_state(self):
        self.effector = np.zeros(2)
        self.effector_vel = np.zeros(2)
        self.object = np.array([0.15, 0.0]) + self.rng.uniform(-0.05, 0.05, size=2)
        self.object_vel = np.zeros(2)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        x = rng.uniform(*self.goal_x)
        y = rng.uniform(*self.goal_y)
        return _embed((x, y))
