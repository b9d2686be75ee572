"""Episode replay with hindsight goal substitution ("future" strategy)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from goalforge.errors import ContractError

RewardFn = Callable[[np.ndarray, np.ndarray, dict], np.ndarray]


@dataclass
class EpisodeRecord:
    """One fixed-horizon episode.

    ``obs`` and ``achieved_goal`` have ``T + 1`` rows (the last is the state
    after the final action); ``actions`` has ``T`` rows.
    """

    obs: np.ndarray
    achieved_goal: np.ndarray
    actions: np.ndarray
    desired_goal: np.ndarray

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float64)
        self.achieved_goal = np.asarray(self.achieved_goal, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.desired_goal = np.asarray(self.desired_goal, dtype=np.float64)
        T = len(self.actions)
        if T < 1 or self.actions.ndim != 2:
            raise ContractError("an episode needs at least one action")
        if self.obs.ndim != 2 or len(self.obs) != T + 1:
            raise ContractError(f"expected {T + 1} observations, got {len(self.obs)}")
        if self.achieved_goal.ndim != 2 or len(self.achieved_goal) != T + 1:
            raise ContractError(f"expected {T + 1} achieved goals, got {len(self.achieved_goal)}")
        if self.desired_goal.shape != (self.achieved_goal.shape[1],):
            raise ContractError("desired goal does not match the goal dimension")

    @property
    def T(self) -> int:
        return len(self.actions)


@dataclass
class TrainingBatch:
    obs: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    achieved_next: np.ndarray
    substituted: np.ndarray
    episode_index: np.ndarray
    t: np.ndarray
    future_t: np.ndarray

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    """Ring of whole episodes with a capacity counted in transitions.

    When full, the oldest episode is overwritten, so evicted transitions can
    never be sampled again.
    """

    def __init__(self, obs_dim: int, goal_dim: int, action_dim: int, horizon: int,
                 capacity: int = 10**6, seed=None):
        if capacity < horizon:
            raise ContractError("capacity must hold at least one episode")
        self.horizon = int(horizon)
        self.capacity = int(capacity)
        self.max_episodes = self.capacity // self.horizon
        self.rng = np.random.default_rng(seed)
        E, T = self.max_episodes, self.horizon
        self.obs = np.zeros((E, T + 1, obs_dim))
        self.ag = np.zeros((E, T + 1, goal_dim))
        self.g = np.zeros((E, goal_dim))
        self.u = np.zeros((E, T, action_dim))
        self.cursor = 0
        self.n_episodes = 0
        self.episodes_stored = 0

    @property
    def n_transitions(self) -> int:
        return self.n_episodes * self.horizon

    def store_episode(self, episode: EpisodeRecord) -> int:
        """Append ``episode``; returns the slot it was written to."""
        if episode.T != self.horizon:
            raise ContractError(f"episode length {episode.T} != horizon {self.horizon}")
        if (episode.obs.shape[1] != self.obs.shape[2]
                or episode.achieved_goal.shape[1] != self.ag.shape[2]
                or episode.actions.shape[1] != self.u.shape[2]):
            raise ContractError("episode dimensions do not match the buffer")
        slot = self.cursor
        self.obs[slot] = episode.obs
        self.ag[slot] = episode.achieved_goal
        self.g[slot] = episode.desired_goal
        self.u[slot] = episode.actions
        self.cursor = (slot + 1) % self.max_episodes
        self.n_episodes = min(self.n_episodes + 1, self.max_episodes)
        self.episodes_stored += 1
        return slot

    def sample_batch(self, batch_size: int, her_probability: float, reward_fn: RewardFn,
                     rng: np.random.Generator | None = None) -> TrainingBatch:
        """Uniform (episode, t) pairs, with hindsight goals at rate ``her_probability``.

        A substituted goal is the achieved goal at a uniform future index in
        ``{t+1, ..., T}``. Rewards are recomputed for every transition.
        """
        if self.n_episodes == 0:
            raise ContractError("cannot sample from an empty buffer")
        if not 0.0 <= her_probability <= 1.0:
            raise ContractError("her_probability must lie in [0, 1]")
        rng = self.rng if rng is None else rng
        T = self.horizon
        ep = rng.integers(0, self.n_episodes, size=batch_size)
        t = rng.integers(0, T, size=batch_size)
        substituted = rng.random(batch_size) < her_probability
        # uniform over {t+1, ..., T}
        future_t = t + 1 + np.floor(rng.random(batch_size) * (T - t)).astype(np.int64)
        future_t = np.where(substituted, future_t, -1)
        goal = self.g[ep].copy()
        sub = np.flatnonzero(substituted)
        goal[sub] = self.ag[ep[sub], future_t[sub]]
        achieved_next = self.ag[ep, t + 1]
        reward = np.asarray(reward_fn(achieved_next, goal, {}), dtype=np.float64)
        return TrainingBatch(
            obs=self.obs[ep, t],
            goal=goal,
            action=self.u[ep, t],
            reward=reward,
            next_obs=self.obs[ep, t + 1],
            achieved_next=achieved_next,
            substituted=substituted,
            episode_index=ep,
            t=t,
            future_t=future_t,
        )

    def state_arrays(self) -> dict[str, np.ndarray]:
        n = self.n_episodes
        return {
            "buffer.obs": self.obs[:n],
            "buffer.ag": self.ag[:n],
            "buffer.g": self.g[:n],
            "buffer.u": self.u[:n],
            "buffer.meta": np.array([self.cursor, self.n_episodes, self.episodes_stored,
                                     self.horizon, self.capacity]),
        }

    def load_arrays(self, arrays) -> None:
        cursor, n, stored, horizon, capacity = (int(v) for v in arrays["buffer.meta"])
        if (horizon, capacity) != (self.horizon, self.capacity):
            raise ContractError("snapshot was taken from a differently sized buffer")
        self.obs[:n] = arrays["buffer.obs"]
        self.ag[:n] = arrays["buffer.ag"]
        self.g[:n] = arrays["buffer.g"]
        self.u[:n] = arrays["buffer.u"]
        self.cursor, self.n_episodes, self.episodes_stored = cursor, n, stored


def hindsight_reward_consistency(batch: TrainingBatch, reward_fn: RewardFn) -> bool:
    expected = np.asarray(reward_fn(batch.achieved_next, batch.goal, {}), dtype=np.float64)
    return bool(np.array_equal(batch.reward, expected))
