"""Training schedule, evaluation, multi-seed aggregation, benchmark and search."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from goalforge import results
from goalforge.core import make, registered_ids
from goalforge.ddpg import AgentConfig, DDPGAgent, Policy
from goalforge.errors import ContractError
from goalforge.her import EpisodeRecord, ReplayBuffer

log = logging.getLogger(__name__)

CONFIGURATIONS = ("her-sparse", "her-dense", "ddpg-sparse", "ddpg-dense")

SEARCH_GRIDS = {
    "actor_lr": (1e-4, 3e-4, 6e-4, 1e-3, 3e-3, 6e-3, 1e-2),
    "critic_lr": (1e-4, 3e-4, 6e-4, 1e-3, 3e-3, 6e-3, 1e-2),
    "polyak": (0.9, 0.93, 0.95, 0.97, 0.99),
    "batch_size": (32, 64, 128, 256),
    "random_eps": (0.0, 0.1, 0.2, 0.3, 0.4),
    "noise_eps": (0.0, 0.1, 0.2, 0.3, 0.4),
    "action_l2": (0.0, 0.01, 0.03, 0.1, 0.3, 0.6, 1.0),
}


@dataclass
class ScheduleConfig:
    n_workers: int = 2
    rollouts_per_worker: int = 2
    cycles_per_epoch: int = 50
    batches_per_cycle: int = 40
    n_epochs: int = 50
    test_rollouts_per_worker: int = 10
    horizon: int = 50
    n_seeds: int = 5
    parallel: bool = False

    def __post_init__(self):
        for f in ("n_workers", "rollouts_per_worker", "cycles_per_epoch", "batches_per_cycle",
                  "n_epochs", "test_rollouts_per_worker", "horizon", "n_seeds"):
            if int(getattr(self, f)) < 1:
                raise ContractError(f"{f} must be >= 1")
            setattr(self, f, int(getattr(self, f)))

    @property
    def episodes_per_cycle(self) -> int:
        return self.n_workers * self.rollouts_per_worker

    @property
    def episodes_per_epoch(self) -> int:
        return self.episodes_per_cycle * self.cycles_per_epoch


@dataclass
class RunResult:
    env: str
    label: str
    seed: int
    success_rates: list[float]
    config: dict
    schedule: dict
    wall_time: float = 0.0

    def __post_init__(self):
        if any(not 0.0 <= r <= 1.0 for r in self.success_rates):
            raise ContractError("success rates must lie in [0, 1]")


@dataclass
class CurveSummary:
    median: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    label: str = ""

    @property
    def epochs(self) -> np.ndarray:
        return np.arange(len(self.median))

    def __len__(self):
        return len(self.median)


@dataclass
class CycleStats:
    episodes: int
    train_success: float
    target_updates: int
    critic_loss: float
    actor_loss: float


def env_id_for(env: str, reward_mode: str) -> str:
    """Registry id for base name ``env`` (``PointReach``) under ``reward_mode``."""
    if env.endswith("-sparse") or env.endswith("-dense"):
        env = env.rsplit("-", 1)[0]
    env_id = f"{env}-{reward_mode}"
    if env_id not in registered_ids():
        bases = sorted({i.rsplit("-", 1)[0] for i in registered_ids()})
        raise KeyError(f"unknown environment {env!r}; registered: {', '.join(bases)}")
    return env_id


def config_for_label(label: str, base: AgentConfig | None = None) -> AgentConfig:
    """``her-sparse`` etc. applied on top of ``base``."""
    if label not in CONFIGURATIONS:
        raise ContractError(f"unknown configuration {label!r}")
    algo, mode = label.split("-")
    return replace(base or AgentConfig(), use_her=(algo == "her"), reward_mode=mode)


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _stack(observations):
    return (np.stack([o.observation for o in observations]),
            np.stack([o.achieved_goal for o in observations]),
            np.stack([o.desired_goal for o in observations]))


def rollout(policy: Policy, envs, explore: bool, rng: np.random.Generator | None = None):
    """Run one episode in each of ``envs`` in lockstep.

    Returns ``(episodes, final_success)``.
    """
    T = envs[0].spec.horizon
    n = len(envs)
    first = [env.reset() for env in envs]
    o, ag, g = _stack(first)
    obs = np.empty((n, T + 1, o.shape[1]))
    achieved = np.empty((n, T + 1, ag.shape[1]))
    actions = np.empty((n, T, envs[0].spec.action_dim))
    obs[:, 0], achieved[:, 0] = o, ag
    success = np.zeros(n, dtype=bool)
    for t in range(T):
        u = policy.act(o, g, explore, rng)
        actions[:, t] = u
        steps = [env.step(u[i]) for i, env in enumerate(envs)]
        o, ag, _ = _stack([s.obs for s in steps])
        obs[:, t + 1], achieved[:, t + 1] = o, ag
        if t == T - 1:
            success = np.array([s.info["is_success"] for s in steps])
    episodes = [EpisodeRecord(obs[i], achieved[i], actions[i], g[i]) for i in range(n)]
    return episodes, success


class Worker:
    """Owns ``rollouts_per_worker`` environments and its own RNG streams."""

    def __init__(self, env_id: str, n_envs: int, seed, horizon: int = 50):
        ss = _seed_sequence(seed)
        env_ss, explore_ss = ss.spawn(2)
        self.envs = [make(env_id, seed=s, horizon=horizon) for s in env_ss.spawn(n_envs)]
        self.rng = np.random.default_rng(explore_ss)

    def collect(self, policy: Policy, agent: DDPGAgent):
        episodes, success = rollout(policy, self.envs, explore=True, rng=self.rng)
        return episodes, success, agent.normalizer_partials(episodes)


class WorkerPool:
    def __init__(self, workers: Sequence[Worker], parallel: bool = False):
        self.workers = list(workers)
        self._executor = (ThreadPoolExecutor(max_workers=len(self.workers))
                          if parallel and len(self.workers) > 1 else None)

    def collect(self, policy: Policy, agent: DDPGAgent):
        # map() preserves worker order, so merges happen in a fixed order
        if self._executor is None:
            return [w.collect(policy, agent) for w in self.workers]
        return list(self._executor.map(lambda w: w.collect(policy, agent), self.workers))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()


def warm_start_normalizers(agent: DDPGAgent, env_id: str, seed, n_resets: int = 10,
                           horizon: int = 50):
    """Seed the normalizers from initial states so the first rollout can act."""
    env = make(env_id, seed=_seed_sequence(seed), horizon=horizon)
    obs = [env.reset() for _ in range(n_resets)]
    o, ag, g = _stack(obs)
    agent.o_norm.update(o)
    agent.g_norm.update(np.concatenate([ag, g]))


def run_cycle(agent: DDPGAgent, pool: WorkerPool, buffer: ReplayBuffer, schedule: ScheduleConfig,
              rng: np.random.Generator | None = None) -> CycleStats:
    """Rollouts from one shared snapshot, then optimizer steps, then one target update."""
    snapshot = agent.policy(snapshot=True)
    collected = pool.collect(snapshot, agent)
    n_episodes = 0
    successes = []
    for episodes, success, partials in collected:
        for ep in episodes:
            buffer.store_episode(ep)
        n_episodes += len(episodes)
        successes.extend(success.tolist())
        agent.merge_normalizers([partials])
    c_loss = a_loss = 0.0
    for _ in range(schedule.batches_per_cycle):
        c_loss, a_loss = agent.train_step(buffer, rng)
    agent.update_targets()
    return CycleStats(n_episodes, float(np.mean(successes)), 1, c_loss, a_loss)


def make_eval_envs(env_id: str, schedule: ScheduleConfig, seed) -> list:
    n = schedule.n_workers * schedule.test_rollouts_per_worker
    seeds = _seed_sequence(seed).spawn(n)
    return [make(env_id, seed=s, horizon=schedule.horizon) for s in seeds]


def evaluate(agent: DDPGAgent, env_id: str | None = None, schedule: ScheduleConfig | None = None,
             seed=None, envs: Sequence | None = None) -> float:
    """Deterministic test success rate pooled over workers and rollouts.

    A rollout succeeds if the goal is met at its final step. Pass ``envs`` to
    reuse environments across epochs; otherwise fresh ones are built from
    ``env_id``, ``schedule`` and ``seed``.
    """
    if envs is None:
        envs = make_eval_envs(env_id, schedule or ScheduleConfig(), seed)
    _, success = rollout(agent.policy(), list(envs), explore=False)
    return float(np.mean(success))


class TrainingRun:
    """One (env, configuration, seed) cell, advanced an epoch at a time.

    Every RNG stream (agent init, replay sampling, each worker, evaluation,
    normalizer warm start) is spawned from ``seed``, so a run is a pure
    function of its arguments.
    """

    def __init__(self, env: str, config: AgentConfig, schedule: ScheduleConfig, seed: int):
        self.env_id = env_id_for(env, config.reward_mode)
        self.env = self.env_id.rsplit("-", 1)[0]
        self.config = config
        self.schedule = schedule
        self.seed = seed
        spec = make(self.env_id, horizon=schedule.horizon).spec
        ss_agent, ss_buffer, ss_workers, ss_eval, ss_warm = np.random.SeedSequence(seed).spawn(5)
        self.agent = DDPGAgent(spec, config, seed=ss_agent)
        self.buffer = ReplayBuffer(spec.obs_dim, spec.goal_dim, spec.action_dim,
                                   schedule.horizon, capacity=config.buffer_size, seed=ss_buffer)
        self.pool = WorkerPool(
            [Worker(self.env_id, schedule.rollouts_per_worker, s, schedule.horizon)
             for s in ss_workers.spawn(schedule.n_workers)],
            parallel=schedule.parallel,
        )
        self.eval_envs = make_eval_envs(self.env_id, schedule, ss_eval)
        warm_start_normalizers(self.agent, self.env_id, ss_warm, horizon=schedule.horizon)
        self.success_rates: list[float] = []
        self.wall_time = 0.0

    def run_epoch(self) -> float:
        """Train for one epoch, then return the deterministic test success rate."""
        start = time.perf_counter()
        episodes = 0
        for _ in range(self.schedule.cycles_per_epoch):
            episodes += run_cycle(self.agent, self.pool, self.buffer, self.schedule).episodes
        if episodes != self.schedule.episodes_per_epoch:
            raise RuntimeError(f"epoch ran {episodes} episodes, expected "
                               f"{self.schedule.episodes_per_epoch}")
        rate = evaluate(self.agent, envs=self.eval_envs)
        self.success_rates.append(rate)
        self.wall_time += time.perf_counter() - start
        log.info("%s %s seed=%d epoch=%d success=%.3f", self.env, self.config.label, self.seed,
                 len(self.success_rates) - 1, rate)
        return rate

    def close(self):
        self.pool.close()

    def result(self) -> RunResult:
        return RunResult(self.env, self.config.label, self.seed, list(self.success_rates),
                         self.config.as_dict(), asdict(self.schedule), self.wall_time)


def train_run(env: str, config: AgentConfig, schedule: ScheduleConfig, seed: int,
              out_dir: str | Path | None = None,
              on_epoch: Callable[[int, float], None] | None = None) -> RunResult:
    """Train one (env, configuration, seed) cell, evaluating after every epoch.

    With ``out_dir`` set, ``progress.csv`` gains one row per epoch and a
    ``config.txt`` echo is written next to it.
    """
    run = TrainingRun(env, config, schedule, seed)
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        results.write_key_values(out_dir / "config.txt", {
            "env": run.env, "label": config.label, "seed": seed,
            **config.as_dict(), **asdict(schedule)})
        writer = results.ProgressWriter(out_dir / "progress.csv")
    try:
        for epoch in range(schedule.n_epochs):
            rate = run.run_epoch()
            if writer is not None:
                writer.append(epoch, rate)
            if on_epoch is not None:
                on_epoch(epoch, rate)
    finally:
        run.close()
    if out_dir is not None:
        results.write_key_values(out_dir / "timing.txt", {"wall_time_s": f"{run.wall_time:.3f}"})
    return run.result()


def aggregate_seeds(curves: Sequence[Sequence[float]], label: str = "") -> CurveSummary:
    """Per-epoch median and quartiles across seeds (linear interpolation)."""
    curves = [list(c) for c in curves]
    if not curves:
        raise ContractError("no curves to aggregate")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise ContractError(f"curves have unequal lengths {sorted(lengths)}")
    data = np.asarray(curves, dtype=np.float64)
    q1, med, q3 = np.percentile(data, [25, 50, 75], axis=0, method="linear")
    return CurveSummary(median=med, q1=q1, q3=q3, label=label)


def auc_score(curve: Sequence[float]) -> float:
    """Area under a success-rate curve, normalized by its length (the mean)."""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size == 0:
        raise ContractError("empty curve")
    return float(np.mean(curve))


def run_benchmark(env: str, schedule: ScheduleConfig, out_root: str | Path | None = None,
                  seeds: Sequence[int] | None = None, configurations: Sequence[str] = CONFIGURATIONS,
                  base_config: AgentConfig | None = None, resume: bool = False,
                  plot: bool = True) -> dict[str, CurveSummary]:
    """Train every configuration over every seed and summarize.

    With ``out_root``, each (env, configuration, seed) cell is persisted and
    ``resume`` skips cells whose progress file is already complete.
    """
    env_id_for(env, "sparse")  # validates the name
    base = env.rsplit("-", 1)[0] if env.endswith(("-sparse", "-dense")) else env
    seeds = list(range(schedule.n_seeds)) if seeds is None else list(seeds)
    summaries: dict[str, CurveSummary] = {}
    for label in configurations:
        config = config_for_label(label, base_config)
        curves = []
        cfg_dir = None
        if out_root is not None:
            cfg_dir = results.config_dir(out_root, base, label)
            results.write_manifest(cfg_dir, base, label, seeds, schedule.n_epochs)
        for seed in seeds:
            seed_dir = None if cfg_dir is None else results.seed_dir(cfg_dir, seed)
            if resume and seed_dir is not None:
                done = results.read_progress(seed_dir / "progress.csv", missing_ok=True)
                if done is not None and len(done) == schedule.n_epochs:
                    log.info("resume: skipping %s %s seed=%d", base, label, seed)
                    curves.append(done)
                    continue
            curves.append(train_run(base, config, schedule, seed, seed_dir).success_rates)
        summaries[label] = aggregate_seeds(curves, label)
        if cfg_dir is not None:
            results.write_summary(cfg_dir / "summary.csv", summaries[label])
    if out_root is not None and plot:
        from goalforge.plotting import plot_curves

        plot_curves(summaries, Path(out_root) / base / f"{base}.svg", title=base)
    return summaries


def grid_cardinality(grids: Mapping[str, Sequence]) -> int:
    return math.prod(len(v) for v in grids.values())


def decode_combination(index: int, grids: Mapping[str, Sequence]) -> dict:
    """Mixed-radix decode of ``index`` into one value per grid (last key fastest)."""
    combo = {}
    for key in reversed(list(grids)):
        values = grids[key]
        index, r = divmod(index, len(values))
        combo[key] = values[r]
    return {k: combo[k] for k in grids}


def sample_combinations(grids: Mapping[str, Sequence], n_samples: int, rng) -> list[dict]:
    """``n_samples`` distinct combinations, uniformly, capped at the grid size."""
    total = grid_cardinality(grids)
    n = min(int(n_samples), total)
    picks = rng.choice(total, size=n, replace=False)
    return [decode_combination(int(i), grids) for i in picks]


@dataclass
class SearchRow:
    sample_index: int
    combination: dict
    score: float
    per_config: dict = field(default_factory=dict)


def hyperparameter_search(env: str = "PoseRotateZ", grids: Mapping[str, Sequence] = SEARCH_GRIDS,
                          n_samples: int = 40, n_seeds: int = 3,
                          schedule: ScheduleConfig | None = None,
                          configurations: Sequence[str] = CONFIGURATIONS,
                          base_config: AgentConfig | None = None, seed: int = 0,
                          train: Callable[..., RunResult] = train_run) -> list[SearchRow]:
    """Random search scored by mean AUC over configurations and seeds.

    Returns rows ranked best first; ties go to the lower sample index.
    """
    schedule = schedule or ScheduleConfig()
    rng = np.random.default_rng(seed)
    combos = sample_combinations(grids, n_samples, rng)
    rows = []
    for i, combo in enumerate(combos):
        per_config = {}
        for label in configurations:
            config = replace(config_for_label(label, base_config), **combo)
            aucs = [auc_score(train(env, config, schedule, s).success_rates)
                    for s in range(n_seeds)]
            per_config[label] = float(np.mean(aucs))
        score = float(np.mean(list(per_config.values())))
        log.info("search sample %d score=%.4f %s", i, score, combo)
        rows.append(SearchRow(i, combo, score, per_config))
    rows.sort(key=lambda r: (-r.score, r.sample_index))
    return rows


def final_window_mean(curve: Iterable[float], window: int = 10) -> float:
    curve = list(curve)
    return float(np.mean(curve[-window:]))


__all__ = [
    "CONFIGURATIONS", "SEARCH_GRIDS", "CurveSummary", "RunResult", "ScheduleConfig",
    "aggregate_seeds", "auc_score", "evaluate", "hyperparameter_search", "run_benchmark",
    "run_cycle", "train_run", "TrainingRun",
]
