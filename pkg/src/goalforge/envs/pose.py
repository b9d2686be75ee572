"""In-hand reorientation analogs: a free body driven by damped torque control.

Goals are ``[x, y, z, qw, qx, qy, qz]``. Rotation-only variants keep the body
at the origin and ignore the position part of the goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from goalforge import quaternion as quat
from goalforge.core import SUBSTEP_DT, SUBSTEPS, EnvSpec, GoalEnv
from goalforge.errors import ContractError

TORQUE_GAIN = 30.0  # rad/s^2 per unit action
ANGULAR_DAMPING = 10.0  # 1/s
FORCE_GAIN = 2.0  # m/s^2 per unit action
LINEAR_DAMPING = 10.0  # 1/s
POSITION_RANGE = 0.05
POSITION_LIMIT = 0.1

# identity, quarter turns about x and y, and their composition
PARALLEL_STATES = np.stack(
    [
        quat.IDENTITY,
        quat.rot_x(np.pi / 2),
        quat.rot_y(np.pi / 2),
        quat.multiply(quat.rot_x(np.pi / 2), quat.rot_y(np.pi / 2)),
    ]
)


@dataclass(frozen=True)
class VariantConfig:
    kind: str
    includes_position: bool
    ignore_z_rotation: bool

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ContractError(f"unknown variant {self.kind!r}")
        if self.kind.startswith("pen") and not self.ignore_z_rotation:
            raise ContractError("pen variants ignore rotation about the body z axis")
        if self.kind in ("full", "pen_full") and not self.includes_position:
            raise ContractError("full variants include a target position")


VARIANTS = ("rotate_z", "rotate_parallel", "rotate_xyz", "full", "pen_rotate", "pen_full")


def variant(kind: str) -> VariantConfig:
    return VariantConfig(
        kind=kind,
        includes_position=kind in ("full", "pen_full"),
        ignore_z_rotation=kind.startswith("pen"),
    )


def canonical(q) -> np.ndarray:
    """Pick the representative of ``+-q`` with non-negative w."""
    q = np.asarray(q, dtype=np.float64)
    return np.where(q[..., :1] < 0, -q, q)


def sample_orientation(kind: str, rng: np.random.Generator) -> np.ndarray:
    if kind == "rotate_z":
        return quat.rot_z(rng.uniform(-np.pi, np.pi))
    if kind == "rotate_parallel":
        k = rng.integers(len(PARALLEL_STATES))
        return quat.multiply(quat.rot_z(rng.uniform(-np.pi, np.pi)), PARALLEL_STATES[k])
    if kind in ("rotate_xyz", "full"):
        return quat.random_uniform(rng)
    if kind in ("pen_rotate", "pen_full"):
        # body z axis uniform on the sphere, reached by a tilt about a horizontal axis
        cos_tilt = rng.uniform(-1.0, 1.0)
        tilt = np.arccos(cos_tilt)
        phi = rng.uniform(-np.pi, np.pi)
        axis = np.array([np.cos(phi), np.sin(phi), 0.0])
        return quat.from_axis_angle(axis, tilt)
    raise ContractError(f"unknown variant {kind!r}")


def integrate_rotation(q, omega, torque, damping=ANGULAR_DAMPING, gain=TORQUE_GAIN,
                       substeps=SUBSTEPS, dt=SUBSTEP_DT):
    """Semi-implicit Euler on angular velocity, exponential map on orientation.

    World-frame angular velocity: ``q <- exp(omega * dt) * q``, renormalized
    after every substep. Scalar arithmetic keeps the per-substep cost low.
    """
    w, x, y, z = (float(c) for c in q)
    ox, oy, oz = (float(c) for c in omega)
    ax, ay, az = (gain * float(c) for c in torque)
    for _ in range(substeps):
        ox += (ax - damping * ox) * dt
        oy += (ay - damping * oy) * dt
        oz += (az - damping * oz) * dt
        angle = math.sqrt(ox * ox + oy * oy + oz * oz) * dt
        if angle > 0.0:
            c = math.cos(0.5 * angle)
            k = math.sin(0.5 * angle) * dt / angle
            dw, dx, dy, dz = c, k * ox, k * oy, k * oz
            w, x, y, z = (
                dw * w - dx * x - dy * y - dz * z,
                dw * x + dx * w + dy * z - dz * y,
                dw * y - dx * z + dy * w + dz * x,
                dw * z + dx * y - dy * x + dz * w,
            )
        n = math.sqrt(w * w + x * x + y * y + z * z)
        w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([w, x, y, z]), np.array([ox, oy, oz])


class PoseEnv(GoalEnv):
    def __init__(self, kind: str, reward_mode: str = "sparse", seed: int | None = None,
                 horizon: int = 50):
        super().__init__(reward_mode, seed)
        self.variant = variant(kind)
        action_dim = 6 if self.variant.includes_position else 3
        if self.variant.ignore_z_rotation:
            pos_thr = 0.05 if self.variant.includes_position else None
            goal_space = "pose_ignore_z"
        else:
            pos_thr = 0.01 if self.variant.includes_position else None
            goal_space = "pose"
        self.spec = EnvSpec(
            obs_dim=13,
            goal_dim=7,
            action_dim=action_dim,
            action_low=-np.ones(action_dim),
            action_high=np.ones(action_dim),
            horizon=horizon,
            position_threshold=pos_thr,
            rotation_threshold=0.1,
            reward_mode=reward_mode,
            goal_space=goal_space,
        )
        self.orientation = quat.IDENTITY.copy()
        self.angular_velocity = np.zeros(3)
        self.position = np.zeros(3)
        self.velocity = np.zeros(3)

    def _reset_state(self):
        self.orientation = sample_orientation(self.variant.kind, self.rng)
        self.angular_velocity = np.zeros(3)
        self.position = np.zeros(3)
        self.velocity = np.zeros(3)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        q = canonical(sample_orientation(self.variant.kind, rng))
        if self.variant.includes_position:
            pos = rng.uniform(-POSITION_RANGE, POSITION_RANGE, size=3)
        else:
            pos = np.zeros(3)
        return np.concatenate([pos, q])

    def _sample_goal(self):
        return self.sample_goal(self.rng)

    def _simulate(self, action):
        self.orientation, self.angular_velocity = integrate_rotation(
            self.orientation, self.angular_velocity, action[:3]
        )
        if self.variant.includes_position:
            accel_in = FORCE_GAIN * action[3:]
            for _ in range(SUBSTEPS):
                self.velocity = self.velocity + (accel_in - LINEAR_DAMPING * self.velocity) * SUBSTEP_DT
                self.position = self.position + self.velocity * SUBSTEP_DT
                hit = np.abs(self.position) > POSITION_LIMIT
                if hit.any():
                    self.position = np.clip(self.position, -POSITION_LIMIT, POSITION_LIMIT)
                    self.velocity[hit] = 0.0

    def _observation(self):
        return np.concatenate(
            [canonical(self.orientation), self.angular_velocity, self.position, self.velocity]
        )

    def _achieved_goal(self):
        return np.concatenate([self.position, canonical(self.orientation)])
