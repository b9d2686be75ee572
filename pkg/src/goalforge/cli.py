"""Command-line entry point: train, bench, search, report, list-envs.

Every flag may also be given in a flat ``key=value`` file passed with
``--config``; keys are the long flag names with dashes or underscores.
Precedence is built-in default < config file < command line.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from goalforge import results
from goalforge.core import make, registered_ids
from goalforge.ddpg import AgentConfig
from goalforge.errors import ContractError
from goalforge.harness import (
    CONFIGURATIONS,
    SEARCH_GRIDS,
    ScheduleConfig,
    aggregate_seeds,
    auc_score,
    env_id_for,
    hyperparameter_search,
    run_benchmark,
    train_run,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("goalforge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _on_off(text: str) -> bool:
    if text.lower() in ("on", "true", "yes", "1"):
        return True
    if text.lower() in ("off", "false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def _hidden(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}")
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("hidden widths must be positive")
    return sizes


@dataclass
class RunConfig:
    """Everything a command needs, validated before any training starts."""

    env: str
    agent: AgentConfig
    schedule: ScheduleConfig
    seeds: list[int]
    out_root: Path

    @property
    def label(self) -> str:
        return self.agent.label


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="FILE", help="key=value file of flag defaults")
    p.add_argument("--results", metavar="DIR",
                   help=f"results root (default ${results.RESULTS_ENV_VAR} or ./results)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_schedule(p: argparse.ArgumentParser, epochs: int, seeds: int):
    d = ScheduleConfig()
    g = p.add_argument_group("schedule")
    g.add_argument("--epochs", type=int, default=epochs, help=f"epochs per run (default {epochs})")
    g.add_argument("--cycles", type=int, default=d.cycles_per_epoch,
                   help=f"cycles per epoch (default {d.cycles_per_epoch})")
    g.add_argument("--batches", type=int, default=d.batches_per_cycle,
                   help=f"optimizer steps per cycle (default {d.batches_per_cycle})")
    g.add_argument("--workers", type=int, default=d.n_workers,
                   help=f"rollout workers (default {d.n_workers})")
    g.add_argument("--rollouts", type=int, default=d.rollouts_per_worker,
                   help=f"rollouts per worker per cycle (default {d.rollouts_per_worker})")
    g.add_argument("--test-rollouts", type=int, default=d.test_rollouts_per_worker,
                   help=f"test rollouts per worker (default {d.test_rollouts_per_worker})")
    g.add_argument("--horizon", type=int, default=d.horizon,
                   help=f"steps per episode (default {d.horizon})")
    g.add_argument("--parallel", type=_on_off, default=False,
                   help="collect worker rollouts on threads (default off)")
    g.add_argument("--seeds", type=int, default=seeds, help=f"number of seeds (default {seeds})")
    g.add_argument("--seed", type=int, default=0, help="first seed (default 0)")


def _add_agent(p: argparse.ArgumentParser):
    d = AgentConfig()
    g = p.add_argument_group("agent")
    g.add_argument("--hidden", type=_hidden, default=d.hidden,
                   help="hidden widths, comma separated (default 256,256,256)")
    g.add_argument("--actor-lr", type=float, default=d.actor_lr, help=f"default {d.actor_lr}")
    g.add_argument("--critic-lr", type=float, default=d.critic_lr, help=f"default {d.critic_lr}")
    g.add_argument("--polyak", type=float, default=d.polyak,
                   help=f"target averaging weight on the old target (default {d.polyak})")
    g.add_argument("--batch-size", type=int, default=d.batch_size, help=f"default {d.batch_size}")
    g.add_argument("--random-eps", type=float, default=d.random_eps,
                   help=f"probability of a uniform random action (default {d.random_eps})")
    g.add_argument("--noise-eps", type=float, default=d.noise_eps,
                   help=f"Gaussian action noise, fraction of half-range (default {d.noise_eps})")
    g.add_argument("--action-l2", type=float, default=d.action_l2,
                   help=f"action penalty coefficient (default {d.action_l2})")
    g.add_argument("--l2-target", choices=("action", "preactivation"), default=d.l2_target,
                   help=f"what the action penalty measures (default {d.l2_target})")
    g.add_argument("--her-probability", type=float, default=d.her_probability,
                   help=f"hindsight substitution rate (default {d.her_probability})")
    g.add_argument("--gamma", type=float, default=d.gamma, help=f"default {d.gamma}")
    g.add_argument("--buffer-size", type=int, default=d.buffer_size,
                   help=f"replay capacity in transitions (default {d.buffer_size})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="goalforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train one configuration over one or more seeds")
    _add_common(p)
    p.add_argument("--env", required=True, help="environment base name, e.g. PointReach")
    p.add_argument("--reward", choices=("sparse", "dense"), default="sparse",
                   help="reward mode (default sparse)")
    p.add_argument("--her", type=_on_off, default=True, help="hindsight replay on/off (default on)")
    _add_schedule(p, epochs=50, seeds=1)
    _add_agent(p)

    p = sub.add_parser("bench", help="train all four configurations and plot them")
    _add_common(p)
    p.add_argument("--env", required=True)
    p.add_argument("--configs", default=",".join(CONFIGURATIONS),
                   help="comma-separated subset of " + ", ".join(CONFIGURATIONS))
    p.add_argument("--resume", action="store_true", help="skip completed (config, seed) runs")
    _add_schedule(p, epochs=50, seeds=5)
    _add_agent(p)

    p = sub.add_parser("search", help="random hyperparameter search scored by AUC")
    _add_common(p)
    p.add_argument("--env", default="PoseRotateZ", help="default PoseRotateZ")
    p.add_argument("--samples", type=int, default=40, help="combinations to try (default 40)")
    p.add_argument("--search-seed", type=int, default=0, help="sampling seed (default 0)")
    p.add_argument("--configs", default=",".join(CONFIGURATIONS))
    _add_schedule(p, epochs=50, seeds=3)
    _add_agent(p)

    p = sub.add_parser("report", help="rebuild summaries and plots from per-seed CSVs")
    _add_common(p)
    p.add_argument("--env", help="only this environment (default all found)")

    p = sub.add_parser("list-envs", help="print registered environments")
    _add_common(p)
    return parser


def _read_config_file(parser: argparse.ArgumentParser, path: str) -> dict:
    try:
        raw = results.read_key_values(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    except results.DataError as exc:
        raise UsageError(str(exc))
    actions = {a.dest: a for a in parser._actions}
    values = {}
    for key, text in raw.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise UsageError(f"{path}: unknown key {key!r}")
        try:
            if isinstance(action, argparse._StoreTrueAction):
                values[dest] = _on_off(text)
            else:
                value = action.type(text) if action.type else text
                if action.choices is not None and value not in action.choices:
                    raise argparse.ArgumentTypeError(f"{value!r} not in {list(action.choices)}")
                values[dest] = value
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}: bad value for {key}: {exc}")
    return values


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**_read_config_file(sub, args.config))
        args = parser.parse_args(argv)
    return args


def _schedule(args) -> ScheduleConfig:
    return ScheduleConfig(
        n_workers=args.workers, rollouts_per_worker=args.rollouts,
        cycles_per_epoch=args.cycles, batches_per_cycle=args.batches, n_epochs=args.epochs,
        test_rollouts_per_worker=args.test_rollouts, horizon=args.horizon,
        n_seeds=args.seeds, parallel=args.parallel,
    )


def _agent(args, **overrides) -> AgentConfig:
    return AgentConfig(
        gamma=args.gamma, polyak=args.polyak, random_eps=args.random_eps,
        noise_eps=args.noise_eps, action_l2=args.action_l2, l2_target=args.l2_target,
        batch_size=args.batch_size, her_probability=args.her_probability,
        actor_lr=args.actor_lr, critic_lr=args.critic_lr, hidden=args.hidden,
        buffer_size=args.buffer_size, **overrides,
    )


def _base_name(env: str) -> str:
    return env_id_for(env, "sparse").rsplit("-", 1)[0]


def run_config(args, **agent_overrides) -> RunConfig:
    """Validate every flag against the registry and parameter ranges."""
    env = _base_name(args.env)
    schedule = _schedule(args)
    agent = _agent(args, **agent_overrides)
    seeds = list(range(args.seed, args.seed + schedule.n_seeds))
    return RunConfig(env, agent, schedule, seeds, results.results_root(args.results))


def _labels(text: str) -> list[str]:
    labels = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in labels if s not in CONFIGURATIONS]
    if not labels or bad:
        raise UsageError(f"unknown configuration(s) {bad}; choose from {', '.join(CONFIGURATIONS)}")
    return labels


def cmd_train(args, out) -> int:
    rc = run_config(args, use_her=args.her, reward_mode=args.reward)
    cfg_dir = results.config_dir(rc.out_root, rc.env, rc.label)
    results.write_manifest(cfg_dir, rc.env, rc.label, rc.seeds, rc.schedule.n_epochs)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("env", "config", "seed", "epoch", "success_rate"))
    for seed in rc.seeds:
        def echo(epoch, rate, seed=seed):
            w.writerow((rc.env, rc.label, seed, epoch, results.fmt(rate)))
            out.flush()

        train_run(rc.env, rc.agent, rc.schedule, seed, results.seed_dir(cfg_dir, seed), echo)
    return EXIT_OK


def _write_summary_rows(out, env, summaries):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("env", "config", "epoch", "median", "q1", "q3"))
    for label, s in summaries.items():
        for e in range(len(s)):
            w.writerow((env, label, e, results.fmt(s.median[e]), results.fmt(s.q1[e]),
                        results.fmt(s.q3[e])))


def cmd_bench(args, out) -> int:
    rc = run_config(args)
    labels = _labels(args.configs)
    summaries = run_benchmark(rc.env, rc.schedule, rc.out_root, rc.seeds, labels, rc.agent,
                              resume=args.resume)
    _write_summary_rows(out, rc.env, summaries)
    return EXIT_OK


SEARCH_HEADER = ("rank", "sample", "score", *SEARCH_GRIDS)


def cmd_search(args, out) -> int:
    rc = run_config(args)
    labels = _labels(args.configs)
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    rows = hyperparameter_search(rc.env, SEARCH_GRIDS, args.samples, len(rc.seeds), rc.schedule,
                                 labels, rc.agent, seed=args.search_seed)
    path = rc.out_root / rc.env / "search.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for stream in (fh, out):
            w = csv.writer(stream, lineterminator="\n")
            w.writerow(SEARCH_HEADER)
            for rank, row in enumerate(rows):
                w.writerow((rank, row.sample_index, results.fmt(row.score),
                            *(row.combination[k] for k in SEARCH_GRIDS)))
    return EXIT_OK


def report(root: Path, env: str | None = None) -> list[Path]:
    """Rebuild ``summary.csv`` files and the per-env SVG from raw progress files."""
    from goalforge.plotting import plot_curves

    root = Path(root)
    if not root.is_dir():
        raise results.DataError(f"no results directory at {root}")
    env_dirs = [root / env] if env else sorted(p for p in root.iterdir() if p.is_dir())
    written = []
    for env_dir in env_dirs:
        cfg_dirs = [env_dir / label for label in CONFIGURATIONS
                    if (env_dir / label / "manifest.txt").exists()]
        if not cfg_dirs:
            if env:
                raise results.DataError(f"no runs recorded under {env_dir}")
            continue
        summaries = {}
        for cfg_dir in cfg_dirs:
            manifest, curves = results.load_seed_curves(cfg_dir)
            summaries[manifest["label"]] = aggregate_seeds(curves, manifest["label"])
            results.write_summary(cfg_dir / "summary.csv", summaries[manifest["label"]])
            written.append(cfg_dir / "summary.csv")
        written.append(plot_curves(summaries, env_dir / f"{env_dir.name}.svg", env_dir.name))
    if not written:
        raise results.DataError(f"no runs recorded under {root}")
    return written


def cmd_report(args, out) -> int:
    root = results.results_root(args.results)
    written = report(root, args.env)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("env", "config", "epochs", "auc", "path"))
    for path in written:
        if path.name == "summary.csv":
            s = results.read_summary(path)
            w.writerow((path.parent.parent.name, path.parent.name, len(s["epoch"]),
                        results.fmt(auc_score(s["median"])), path))
        else:
            w.writerow((path.parent.name, "", "", "", path))
    return EXIT_OK


def cmd_list_envs(args, out) -> int:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("id", "obs_dim", "goal_dim", "action_dim", "goal_space", "position_threshold",
                "rotation_threshold"))
    for env_id in registered_ids():
        spec = make(env_id).spec
        w.writerow((env_id, spec.obs_dim, spec.goal_dim, spec.action_dim, spec.goal_space,
                    "" if spec.position_threshold is None else spec.position_threshold,
                    "" if spec.rotation_threshold is None else spec.rotation_threshold))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "bench": cmd_bench,
    "search": cmd_search,
    "report": cmd_report,
    "list-envs": cmd_list_envs,
}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except results.DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
