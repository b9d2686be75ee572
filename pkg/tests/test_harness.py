import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalforge import harness
from goalforge.core import EnvSpec, GoalEnv
from goalforge.ddpg import AgentConfig, DDPGAgent
from goalforge.errors import ContractError
from goalforge.harness import (
    CONFIGURATIONS,
    SEARCH_GRIDS,
    ScheduleConfig,
    TrainingRun,
    Worker,
    WorkerPool,
    aggregate_seeds,
    auc_score,
    config_for_label,
    decode_combination,
    evaluate,
    grid_cardinality,
    hyperparameter_search,
    run_benchmark,
    run_cycle,
    sample_combinations,
    train_run,
)
from goalforge.her import ReplayBuffer
from goalforge.envs.reach import V_MAX

TINY = AgentConfig(hidden=(8, 8), batch_size=16)


def tiny_schedule(**kw):
    base = dict(n_workers=2, rollouts_per_worker=2, cycles_per_epoch=2, batches_per_cycle=2,
                n_epochs=2, test_rollouts_per_worker=2, horizon=10, n_seeds=2)
    base.update(kw)
    return ScheduleConfig(**base)


def curves_equal(a, b):
    return all(np.array_equal(a[k], b[k]) for k in a)


class TestSchedule:
    def test_episode_identity(self):
        s = ScheduleConfig()
        assert s.episodes_per_epoch == 2 * 2 * 50
        assert (s.batches_per_cycle, s.test_rollouts_per_worker, s.horizon, s.n_seeds) == (
            40, 10, 50, 5)

    def test_counts_positive(self):
        with pytest.raises(ContractError):
            ScheduleConfig(cycles_per_epoch=0)


class TestRunCycle:
    def setup_run(self, schedule, seed=0):
        return TrainingRun("PointReach", config_for_label("her-sparse", TINY), schedule, seed)

    def test_four_episodes_per_cycle(self):
        run = self.setup_run(tiny_schedule())
        stats = run_cycle(run.agent, run.pool, run.buffer, run.schedule)
        assert stats.episodes == 4 and run.buffer.n_episodes == 4

    def test_one_target_update_per_cycle(self, monkeypatch):
        run = self.setup_run(tiny_schedule(cycles_per_epoch=50, batches_per_cycle=1))
        calls = []
        original = run.agent.update_targets
        monkeypatch.setattr(run.agent, "update_targets", lambda: (calls.append(1), original()))
        run.run_epoch()
        assert len(calls) == 50

    def test_identity_checked_at_runtime(self, monkeypatch):
        run = self.setup_run(tiny_schedule())
        real = harness.run_cycle

        def short(*args, **kw):
            stats = real(*args, **kw)
            stats.episodes -= 1
            return stats

        monkeypatch.setattr(harness, "run_cycle", short)
        with pytest.raises(RuntimeError, match="episodes"):
            run.run_epoch()

    def test_single_worker_bit_reproducible(self):
        params = []
        for _ in range(2):
            run = self.setup_run(tiny_schedule(n_workers=1))
            run.run_epoch()
            params.append(run.agent.parameter_arrays())
        assert curves_equal(*params)

    def test_threaded_workers_match_sequential(self):
        params = []
        for parallel in (False, True):
            run = self.setup_run(tiny_schedule(parallel=parallel))
            run.run_epoch()
            run.close()
            params.append(run.agent.parameter_arrays())
        assert curves_equal(*params)


class FixedOutcomeEnv(GoalEnv):
    """Ends every episode in success iff its index is in ``winners``."""

    count = 0

    def __init__(self, success: bool):
        super().__init__("sparse", 0)
        self.success = success
        self.spec = EnvSpec(obs_dim=1, goal_dim=1, action_dim=1, action_low=[-1.0],
                            action_high=[1.0], horizon=3)

    def _reset_state(self):
        pass

    def _sample_goal(self):
        return np.zeros(1)

    def _simulate(self, action):
        pass

    def _observation(self):
        return np.zeros(1)

    def _achieved_goal(self):
        return np.zeros(1) if self.success else np.ones(1)


class TestEvaluate:
    def agent_for(self, spec):
        agent = DDPGAgent(spec, AgentConfig(hidden=(4,)), seed=0)
        agent.o_norm.update(np.zeros((1, spec.obs_dim)))
        agent.g_norm.update(np.zeros((1, spec.goal_dim)))
        return agent

    def test_pooled_rate(self):
        envs = [FixedOutcomeEnv(i < 3) for i in range(20)]
        assert evaluate(self.agent_for(envs[0].spec), envs=envs) == 0.15

    def test_all_succeed(self):
        envs = [FixedOutcomeEnv(True) for _ in range(20)]
        assert evaluate(self.agent_for(envs[0].spec), envs=envs) == 1.0

    def test_scripted_reacher_scores_one(self, monkeypatch):
        schedule = tiny_schedule(horizon=50)
        run = TrainingRun("PointReach", config_for_label("her-sparse", TINY), schedule, 0)

        class Scripted:
            def act(self, obs, goal, explore, rng=None):
                return np.clip((goal - obs[:, :3]) / (V_MAX * 0.04), -1.0, 1.0)

        monkeypatch.setattr(run.agent, "policy", lambda snapshot=False: Scripted())
        assert evaluate(run.agent, envs=run.eval_envs) == 1.0

    def test_no_side_effects(self):
        run = TrainingRun("PlanarPush", config_for_label("ddpg-dense", TINY), tiny_schedule(), 1)
        run.run_epoch()
        before = run.agent.parameter_arrays()
        buffered = run.buffer.episodes_stored
        evaluate(run.agent, envs=run.eval_envs)
        assert curves_equal(before, run.agent.parameter_arrays())
        assert run.buffer.episodes_stored == buffered


class TestAggregate:
    def test_identical_curves(self):
        s = aggregate_seeds([[0.1, 0.5, 0.9]] * 5)
        assert np.array_equal(s.median, [0.1, 0.5, 0.9])
        assert np.array_equal(s.q3 - s.q1, np.zeros(3))

    def test_five_value_example(self):
        s = aggregate_seeds([[v] for v in (0.75, 0.0, 1.0, 0.25, 0.5)])
        assert (s.median[0], s.q1[0], s.q3[0]) == (0.5, 0.25, 0.75)

    def test_ragged(self):
        with pytest.raises(ContractError):
            aggregate_seeds([[0.0, 1.0], [0.0]])

    @given(st.lists(st.lists(st.floats(0, 1), min_size=4, max_size=4), min_size=1, max_size=7),
           st.randoms())
    def test_order_invariant_and_ordered(self, curves, random):
        shuffled = list(curves)
        random.shuffle(shuffled)
        a, b = aggregate_seeds(curves), aggregate_seeds(shuffled)
        assert np.array_equal(a.median, b.median) and np.array_equal(a.q1, b.q1)
        assert np.all(a.q1 <= a.median) and np.all(a.median <= a.q3)


class TestAuc:
    def test_constant(self):
        assert auc_score([1.0] * 7) == 1.0

    def test_step_curve(self):
        assert auc_score([0, 0, 1, 1]) == 0.5

    def test_empty(self):
        with pytest.raises(ContractError):
            auc_score([])

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1))
    def test_monotone(self, pairs):
        low = [min(p) for p in pairs]
        high = [max(p) for p in pairs]
        assert auc_score(high) >= auc_score(low)


class TestBenchmark:
    def test_four_summaries_and_echo(self, tmp_path):
        schedule = tiny_schedule(n_epochs=2)
        summaries = run_benchmark("PointReach", schedule, tmp_path, base_config=TINY)
        assert list(summaries) == list(CONFIGURATIONS)
        for label in CONFIGURATIONS:
            echo = (tmp_path / "PointReach" / label / "seed_0" / "config.txt").read_text()
            algo, mode = label.split("-")
            assert f"use_her={algo == 'her'}" in echo and f"reward_mode={mode}" in echo
            assert len(summaries[label]) == 2
        assert (tmp_path / "PointReach" / "PointReach.svg").exists()

    def test_unknown_env(self):
        with pytest.raises(KeyError, match="PointReach"):
            run_benchmark("Nope", tiny_schedule())

    def test_resume_skips_complete_cells(self, tmp_path, monkeypatch):
        schedule = tiny_schedule(n_epochs=1)
        run_benchmark("PointReach", schedule, tmp_path, configurations=["her-sparse"],
                      base_config=TINY)
        calls = []
        monkeypatch.setattr(harness, "train_run", lambda *a, **k: calls.append(a))
        run_benchmark("PointReach", schedule, tmp_path, configurations=["her-sparse"],
                      base_config=TINY, resume=True)
        assert calls == []


class TestSearch:
    def test_cardinality(self):
        # list lengths: actor lr 7, critic lr 7, polyak 5, batch 4, random 5, noise 5, l2 7
        assert [len(v) for v in SEARCH_GRIDS.values()] == [7, 7, 5, 4, 5, 5, 7]
        assert grid_cardinality(SEARCH_GRIDS) == 171_500

    def test_decode_is_bijective_on_small_grid(self):
        grids = {"a": (1, 2, 3), "b": ("x", "y")}
        combos = [decode_combination(i, grids) for i in range(6)]
        assert len({tuple(c.values()) for c in combos}) == 6

    def test_samples_distinct_members_and_capped(self):
        grids = {"a": (1, 2, 3), "b": (0.1, 0.2)}
        combos = sample_combinations(grids, 50, np.random.default_rng(0))
        assert len(combos) == 6
        assert len({tuple(c.values()) for c in combos}) == 6

    def test_membership(self):
        for combo in sample_combinations(SEARCH_GRIDS, 40, np.random.default_rng(1)):
            assert all(combo[k] in SEARCH_GRIDS[k] for k in SEARCH_GRIDS)

    def fake_train(self, scores):
        def train(env, config, schedule, seed):
            rate = scores(config)
            return harness.RunResult(env, config.label, seed, [rate], {}, {})
        return train

    def test_single_combination(self):
        grids = {k: v[:1] for k, v in SEARCH_GRIDS.items()}
        rows = hyperparameter_search("PointReach", grids, 5, 1, tiny_schedule(),
                                     train=self.fake_train(lambda c: 0.5))
        assert len(rows) == 1 and rows[0].combination == {k: v[0] for k, v in grids.items()}

    def test_ranked_with_ties_to_lowest_index(self):
        rows = hyperparameter_search("PointReach", SEARCH_GRIDS, 6, 2, tiny_schedule(),
                                     train=self.fake_train(lambda c: min(1.0, c.batch_size / 256)))
        scores = [r.score for r in rows]
        assert scores == sorted(scores, reverse=True)
        for a, b in zip(rows, rows[1:]):
            if a.score == b.score:
                assert a.sample_index < b.sample_index


def test_train_run_writes_progress(tmp_path):
    result = train_run("PointReach", TINY, tiny_schedule(n_epochs=3), 0, tmp_path)
    lines = (tmp_path / "progress.csv").read_text().splitlines()
    assert lines[0] == "epoch,success_rate" and len(lines) == 4
    assert len(result.success_rates) == 3
    assert all(0.0 <= r <= 1.0 for r in result.success_rates)


def test_replay_buffer_matches_schedule():
    run = TrainingRun("PointReach", config_for_label("her-sparse", TINY), tiny_schedule(), 0)
    assert isinstance(run.buffer, ReplayBuffer) and run.buffer.horizon == 10
    assert len(run.pool.workers) == 2 and isinstance(run.pool, WorkerPool)
    assert all(isinstance(w, Worker) and len(w.envs) == 2 for w in run.pool.workers)
