"""Multi-goal environment protocol.

Every environment emits a :class:`GoalObservation` and exposes its reward as
a pure function of ``(achieved_goal, desired_goal, info)`` so that replay code
can recompute rewards for substituted goals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from goalforge import quaternion as quat
from goalforge.errors import ContractError

SUBSTEPS = 20
SUBSTEP_DT = 0.002
AGENT_DT = SUBSTEPS * SUBSTEP_DT  # 0.04 s, i.e. 25 Hz

OBS_KEYS = ("observation", "desired_goal", "achieved_goal")
REWARD_MODES = ("sparse", "dense")
GOAL_SPACES = ("position", "pose", "pose_ignore_z")


@dataclass(frozen=True)
class GoalObservation:
    observation: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray

    def __getitem__(self, key: str) -> np.ndarray:
        if key not in OBS_KEYS:
            raise KeyError(key)
        return getattr(self, key)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in OBS_KEYS}


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment.

    Pose goals are laid out as ``[x, y, z, qw, qx, qy, qz]``. When
    ``position_threshold`` is None on a pose space the position part is
    ignored by both the success test and the dense distance.
    """

    obs_dim: int
    goal_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    horizon: int = 50
    position_threshold: float | None = 0.05
    rotation_threshold: float | None = None
    reward_mode: str = "sparse"
    goal_space: str = "position"

    def __post_init__(self):
        low = np.asarray(self.action_low, dtype=np.float64)
        high = np.asarray(self.action_high, dtype=np.float64)
        object.__setattr__(self, "action_low", low)
        object.__setattr__(self, "action_high", high)
        if low.shape != (self.action_dim,) or high.shape != (self.action_dim,):
            raise ContractError("action bounds must have length action_dim")
        if not np.all(low < high):
            raise ContractError("action_low must be < action_high componentwise")
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        for thr in (self.position_threshold, self.rotation_threshold):
            if thr is not None and thr <= 0:
                raise ContractError("thresholds must be positive")
        if self.reward_mode not in REWARD_MODES:
            raise ContractError(f"unknown reward_mode {self.reward_mode!r}")
        if self.goal_space not in GOAL_SPACES:
            raise ContractError(f"unknown goal_space {self.goal_space!r}")
        if self.goal_space != "position" and self.goal_dim != 7:
            raise ContractError("pose goals are 7-dimensional")
        if self.goal_space != "position" and self.rotation_threshold is None:
            raise ContractError("pose goal spaces need a rotation threshold")


@dataclass
class StepResult:
    obs: GoalObservation
    reward: float
    done: bool
    info: dict[str, Any] = field(default_factory=dict)


def _check_goals(achieved, desired, spec: EnvSpec):
    a = np.asarray(achieved, dtype=np.float64)
    d = np.asarray(desired, dtype=np.float64)
    if a.shape != d.shape or a.shape[-1] != spec.goal_dim:
        raise ContractError(
            f"goal shapes {a.shape} and {d.shape} do not match goal_dim {spec.goal_dim}"
        )
    return a, d


def _position_distance(a, d):
    diff = a - d
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _goal_parts(achieved, desired, spec: EnvSpec):
    """Return (position distance or None, rotation distance or None)."""
    if spec.goal_space == "position":
        return _position_distance(achieved, desired), None
    pos = None
    if spec.position_threshold is not None:
        pos = _position_distance(achieved[..., :3], desired[..., :3])
    qa, qd = achieved[..., 3:], desired[..., 3:]
    if spec.goal_space == "pose_ignore_z":
        rot = quat.distance_ignore_z(qa, qd, check=False)
    else:
        rot = quat.distance(qa, qd, check=False)
    return pos, rot


def goal_distance(achieved, desired, spec: EnvSpec):
    """Distance in goal space: meters plus radians for pose goals (unweighted)."""
    a, d = _check_goals(achieved, desired, spec)
    pos, rot = _goal_parts(a, d, spec)
    if rot is None:
        return pos
    return rot if pos is None else pos + rot


def is_success(achieved, desired, spec: EnvSpec):
    a, d = _check_goals(achieved, desired, spec)
    pos, rot = _goal_parts(a, d, spec)
    ok = np.ones(a.shape[:-1], dtype=bool)
    if pos is not None:
        ok &= pos < spec.position_threshold
    if rot is not None:
        ok &= rot < spec.rotation_threshold
    return ok if ok.ndim else bool(ok)


def compute_reward(achieved, desired, info, spec: EnvSpec):
    """Reward for ``achieved`` under goal ``desired``; batched over leading axes.

    Sparse: 0 on success, -1 otherwise. Dense: negative goal distance. ``info``
    only ever carries goal-independent data and is unused by the built-in
    environments.
    """
    if spec.reward_mode == "sparse":
        ok = is_success(achieved, desired, spec)
        return np.where(ok, 0.0, -1.0) if np.ndim(ok) else (0.0 if ok else -1.0)
    dist = goal_distance(achieved, desired, spec)
    return -dist if np.ndim(dist) else -float(dist)


def flatten_observation(obs: GoalObservation, keys: Sequence[str]) -> np.ndarray:
    keys = list(keys)
    if not keys:
        raise ContractError("keys must be non-empty")
    if len(set(keys)) != len(keys):
        raise ContractError(f"duplicate keys in {keys}")
    for k in keys:
        if k not in OBS_KEYS:
            raise ContractError(f"unknown observation key {k!r}")
    return np.concatenate([np.asarray(obs[k], dtype=np.float64).ravel() for k in keys])


class GoalEnv:
    """Fixed-horizon goal-conditioned environment.

    Subclasses set ``self.spec`` and implement ``_reset_state``,
    ``_simulate(action)`` (advance SUBSTEPS substeps), ``_observation``,
    ``_achieved_goal`` and ``_sample_goal``.
    """

    spec: EnvSpec

    def __init__(self, reward_mode: str = "sparse", seed=None):
        self._reward_mode = reward_mode
        self.rng = np.random.default_rng(seed)
        self.goal = None
        self._t = 0
        self._needs_reset = True

    # -- protocol -------------------------------------------------------
    def reset(self, seed=None) -> GoalObservation:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self._t = 0
        self._reset_state()
        self.goal = np.asarray(self._sample_goal(), dtype=np.float64)
        self._needs_reset = False
        return self._get_obs()

    def step(self, action) -> StepResult:
        if self._needs_reset:
            raise ContractError("step() called on a finished or un-reset episode")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.spec.action_dim,):
            raise ContractError(
                f"action has shape {action.shape}, expected ({self.spec.action_dim},)"
            )
        action = np.clip(action, self.spec.action_low, self.spec.action_high)
        self._simulate(action)
        self._t += 1
        obs = self._get_obs()
        info = self._info()
        reward = self.compute_reward(obs.achieved_goal, obs.desired_goal, info)
        info["is_success"] = bool(is_success(obs.achieved_goal, obs.desired_goal, self.spec))
        done = self._t == self.spec.horizon
        if done:
            self._needs_reset = True
        return StepResult(obs=obs, reward=reward, done=done, info=info)

    def compute_reward(self, achieved_goal, desired_goal, info=None):
        return compute_reward(achieved_goal, desired_goal, info, self.spec)

    @property
    def t(self) -> int:
        return self._t

    # -- helpers --------------------------------------------------------
    def _get_obs(self) -> GoalObservation:
        return GoalObservation(
            observation=np.asarray(self._observation(), dtype=np.float64),
            achieved_goal=np.asarray(self._achieved_goal(), dtype=np.float64),
            desired_goal=self.goal.copy(),
        )

    def _info(self) -> dict[str, Any]:
        return {}

    def _reset_state(self):
        raise NotImplementedError

    def _simulate(self, action: np.ndarray):
        raise NotImplementedError

    def _observation(self):
        raise NotImplementedError

    def _achieved_goal(self):
        raise NotImplementedError

    def _sample_goal(self):
        raise NotImplementedError


_REGISTRY: dict[str, Callable[..., GoalEnv]] = {}


def register(env_id: str, factory: Callable[..., GoalEnv]) -> None:
    if env_id in _REGISTRY:
        raise ContractError(f"environment {env_id!r} already registered")
    _REGISTRY[env_id] = factory


def registered_ids() -> list[str]:
    import goalforge.envs  # noqa: F401  (populates the registry)

    return sorted(_REGISTRY)


def make(env_id: str, seed=None, **kwargs) -> GoalEnv:
    """Instantiate ``env_id`` (e.g. ``"PointReach-sparse"``).

    Extra keyword arguments (``horizon``) go to the environment constructor.
    """
    ids = registered_ids()
    if env_id not in _REGISTRY:
        raise KeyError(f"unknown environment {env_id!r}; registered: {', '.join(ids)}")
    return _REGISTRY[env_id](seed=seed, **kwargs)
