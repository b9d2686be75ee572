"""Deterministic policy-gradient actor-critic with target networks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from goalforge.core import EnvSpec, compute_reward
from goalforge.errors import ContractError
from goalforge.her import ReplayBuffer, TrainingBatch
from goalforge.nn import (
    AdamState,
    Mlp,
    RunningNormalizer,
    adam_apply,
    load_checkpoint,
    mlp_arrays,
    mlp_from_arrays,
    save_checkpoint,
)


@dataclass
class AgentConfig:
    gamma: float = 0.98
    polyak: float = 0.95  # multiplies the old target
    random_eps: float = 0.3
    noise_eps: float = 0.2  # std as a fraction of the action half-range
    action_l2: float = 1.0
    l2_target: str = "action"  # or "preactivation"
    batch_size: int = 256
    her_probability: float = 0.8
    use_her: bool = True
    reward_mode: str = "sparse"
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden: tuple = (256, 256, 256)
    buffer_size: int = 10**6
    clip_obs: float = 200.0
    clip_norm: float = 5.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        for name in ("random_eps", "her_probability", "polyak"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {value}")
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must lie in [0, 1)")
        if self.noise_eps < 0 or self.action_l2 < 0:
            raise ContractError("noise scale and action penalty must be non-negative")
        if self.batch_size < 1:
            raise ContractError("batch_size must be positive")
        if self.l2_target not in ("action", "preactivation"):
            raise ContractError(f"unknown l2_target {self.l2_target!r}")
        if self.reward_mode not in ("sparse", "dense"):
            raise ContractError(f"unknown reward mode {self.reward_mode!r}")

    @property
    def replay_her_probability(self) -> float:
        return self.her_probability if self.use_her else 0.0

    @property
    def label(self) -> str:
        return f"{'her' if self.use_her else 'ddpg'}-{self.reward_mode}"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def soft_update(target: Mlp, main: Mlp, tau: float = 0.95) -> Mlp:
    """``target <- tau * target + (1 - tau) * main``, in place."""
    if [p.shape for p in target.params] != [p.shape for p in main.params]:
        raise ContractError("target and main networks differ in shape")
    for t, m in zip(target.params, main.params):
        t *= tau
        t += (1.0 - tau) * m
    return target


class Policy:
    """Read-only view used for acting: actor, normalizers and action bounds."""

    def __init__(self, actor: Mlp, o_norm: RunningNormalizer, g_norm: RunningNormalizer,
                 action_low, action_high, random_eps: float, noise_eps: float):
        self.actor = actor
        self.o_norm = o_norm
        self.g_norm = g_norm
        self.low = np.asarray(action_low, dtype=np.float64)
        self.high = np.asarray(action_high, dtype=np.float64)
        self.center = 0.5 * (self.high + self.low)
        self.half = 0.5 * (self.high - self.low)
        self.random_eps = random_eps
        self.noise_eps = noise_eps

    def inputs(self, obs, goal) -> np.ndarray:
        return np.concatenate([self.o_norm.normalize(obs), self.g_norm.normalize(goal)], axis=-1)

    def act(self, obs, goal, explore: bool, rng: np.random.Generator | None = None):
        """Actions in env units; batched over leading axes of ``obs``/``goal``."""
        u = self.actor.forward(self.inputs(obs, goal))
        action = self.center + self.half * u
        if not explore:
            return action
        if rng is None:
            raise ContractError("exploration needs an RNG")
        action = action + self.noise_eps * self.half * rng.standard_normal(action.shape)
        action = np.clip(action, self.low, self.high)
        random_action = rng.uniform(self.low, self.high, size=action.shape)
        pick = rng.random(action.shape[:-1]) < self.random_eps
        return np.where(pick[..., None], random_action, action)


class DDPGAgent:
    def __init__(self, spec: EnvSpec, config: AgentConfig | None = None, seed=None):
        self.spec = spec
        self.config = config or AgentConfig(reward_mode=spec.reward_mode)
        cfg = self.config
        self.rng = np.random.default_rng(seed)
        n_in = spec.obs_dim + spec.goal_dim
        self.actor = Mlp([n_in, *cfg.hidden, spec.action_dim], output="tanh", rng=self.rng)
        self.critic = Mlp([n_in + spec.action_dim, *cfg.hidden, 1], rng=self.rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState.for_params(self.actor.params, lr=cfg.actor_lr)
        self.critic_opt = AdamState.for_params(self.critic.params, lr=cfg.critic_lr)
        self.o_norm = RunningNormalizer(spec.obs_dim, cfg.clip_obs, cfg.clip_norm)
        self.g_norm = RunningNormalizer(spec.goal_dim, cfg.clip_obs, cfg.clip_norm)
        self.low = spec.action_low
        self.high = spec.action_high
        self.center = 0.5 * (self.high + self.low)
        self.half = 0.5 * (self.high - self.low)

    # -- acting -------------------------------------------------------------
    def policy(self, snapshot: bool = False) -> Policy:
        actor, o_norm, g_norm = self.actor, self.o_norm, self.g_norm
        if snapshot:
            actor, o_norm, g_norm = actor.copy(), o_norm.copy(), g_norm.copy()
        return Policy(actor, o_norm, g_norm, self.low, self.high,
                      self.config.random_eps, self.config.noise_eps)

    def select_action(self, obs, goal, explore: bool = False, rng=None):
        return self.policy().act(obs, goal, explore, self.rng if rng is None else rng)

    def reward_fn(self, achieved, desired, info=None):
        return compute_reward(achieved, desired, info, self.spec)

    def _inputs(self, obs, goal):
        return np.concatenate([self.o_norm.normalize(obs), self.g_norm.normalize(goal)], axis=-1)

    def _normalized_action(self, action):
        return (np.asarray(action, dtype=np.float64) - self.center) / self.half

    # -- learning ---------------------------------------------------------------
    def critic_targets(self, batch: TrainingBatch) -> np.ndarray:
        inp = self._inputs(batch.next_obs, batch.goal)
        u2 = self.target_actor.forward(inp)
        q2 = self.target_critic.forward(np.concatenate([inp, u2], axis=-1))[:, 0]
        y = np.asarray(batch.reward, dtype=np.float64) + self.config.gamma * q2
        if self.config.reward_mode == "sparse":
            y = np.clip(y, -1.0 / (1.0 - self.config.gamma), 0.0)
        return y

    def critic_loss(self, batch: TrainingBatch, targets=None):
        """Mean squared TD error and its critic gradients (no update)."""
        y = self.critic_targets(batch) if targets is None else targets
        inp = np.concatenate(
            [self._inputs(batch.obs, batch.goal), self._normalized_action(batch.action)], axis=-1
        )
        q, cache = self.critic.forward_cache(inp)
        err = q[:, 0] - y
        loss = float(np.mean(err * err))
        grads, _ = self.critic.backward(cache, (2.0 / len(err)) * err[:, None])
        return loss, grads

    def actor_loss(self, batch: TrainingBatch):
        """``-mean Q(s, pi(s)) + action_l2 * penalty`` and the actor gradients.

        With ``l2_target="action"`` the penalty is the mean over batch and
        action dims of the squared normalized (post-tanh) action; with
        ``"preactivation"`` it is the batch mean of the squared pre-tanh
        activations summed over action dims.
        """
        inp = self._inputs(batch.obs, batch.goal)
        u, acache = self.actor.forward_cache(inp)
        q, ccache = self.critic.forward_cache(np.concatenate([inp, u], axis=-1))
        n = len(q)
        l2 = self.config.action_l2
        _, d_in = self.critic.backward(ccache, np.full_like(q, -1.0 / n), param_grads=False)
        d_u = d_in[:, -self.spec.action_dim:]
        if self.config.l2_target == "action":
            penalty = np.mean(u * u)
            d_u = d_u + (2.0 * l2 / u.size) * u
            d_pre = None
        else:
            pre = acache["pre"]
            penalty = np.mean(np.sum(pre * pre, axis=1))
            d_pre = (2.0 * l2 / n) * pre
        loss = float(-np.mean(q) + l2 * penalty)
        grads, _ = self.actor.backward(acache, d_u, d_pre=d_pre)
        return loss, grads

    def update_critic(self, batch: TrainingBatch) -> float:
        loss, grads = self.critic_loss(batch)
        adam_apply(self.critic.params, grads, self.critic_opt)
        return loss

    def update_actor(self, batch: TrainingBatch) -> float:
        loss, grads = self.actor_loss(batch)
        adam_apply(self.actor.params, grads, self.actor_opt)
        return loss

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator | None = None):
        batch = buffer.sample_batch(self.config.batch_size, self.config.replay_her_probability,
                                    self.reward_fn, rng=rng)
        critic_loss = self.update_critic(batch)
        actor_loss = self.update_actor(batch)
        return critic_loss, actor_loss

    def update_targets(self):
        soft_update(self.target_actor, self.actor, self.config.polyak)
        soft_update(self.target_critic, self.critic, self.config.polyak)

    def normalizer_partials(self, episodes) -> tuple[RunningNormalizer, RunningNormalizer]:
        """Statistics contributed by ``episodes``: all observations, desired and achieved goals."""
        o_part = self.o_norm.empty_like()
        g_part = self.g_norm.empty_like()
        for ep in episodes:
            o_part.update(ep.obs)
            g_part.update(ep.achieved_goal)
            g_part.update(np.broadcast_to(ep.desired_goal, (ep.T, ep.desired_goal.shape[0])))
        return o_part, g_part

    def merge_normalizers(self, partials: Sequence[tuple[RunningNormalizer, RunningNormalizer]]):
        for o_part, g_part in partials:
            self.o_norm.merge(o_part)
            self.g_norm.merge(g_part)

    # -- persistence ------------------------------------------------------------
    def parameter_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for name in ("actor", "critic", "target_actor", "target_critic"):
            arrays.update(mlp_arrays(getattr(self, name), name))
        arrays.update(self.o_norm.state_arrays("o_norm"))
        arrays.update(self.g_norm.state_arrays("g_norm"))
        return arrays

    def save(self, path) -> None:
        arrays = self.parameter_arrays()
        arrays["config"] = np.array(repr(self.config.as_dict()))
        save_checkpoint(path, arrays)

    def load(self, path) -> None:
        arrays = load_checkpoint(path)
        for name in ("actor", "critic", "target_actor", "target_critic"):
            setattr(self, name, mlp_from_arrays(arrays, name))
        self.o_norm = RunningNormalizer.from_arrays(arrays, "o_norm")
        self.g_norm = RunningNormalizer.from_arrays(arrays, "g_norm")
