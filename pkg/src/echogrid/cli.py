"""Command-line entry point: gen, run, eval, validate, replay.

Machine-readable output goes to files or stdout as CSV/JSONL; human chatter
goes to stderr. Exit code 0 covers completed runs even when episodes failed
(failures are data); nonzero is reserved for configuration and IO errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .episode import deserialize
from .harness import RunConfig, load_run_record, load_validity_pools
from .lm import ENV_API_KEY, ENV_BASE_URL, ENV_MODEL
from .strategies import STRATEGIES
from .textview import render_goal
from .world import ACTION_NAMES, GenConfig, GenerationError, ascii_map, generate, to_json

INDEX_FILE = "index.json"


class CliError(Exception):
    """Configuration or IO error; maps to exit code 1."""


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="echogrid",
        description="Stateful gridworld benchmark and hindsight-memory strategies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate world snapshots")
    seeds = p_gen.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, nargs="+", help="explicit generation seeds")
    seeds.add_argument("--count", type=int, help="number of seeds from --base-seed")
    p_gen.add_argument("--base-seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--force", action="store_true", help="overwrite a non-empty out dir")
    p_gen.add_argument("--verbose", action="store_true", help="print ASCII maps to stderr")

    p_run = sub.add_parser("run", help="run one strategy over environment streams")
    p_run.add_argument("--envs", help="directory produced by gen")
    p_run.add_argument("--strategy", choices=sorted(STRATEGIES), default="react")
    p_run.add_argument("--backend", default="scripted:turn-left")
    p_run.add_argument("--episodes", type=int, default=16)
    p_run.add_argument("--horizon", type=int, default=64)
    p_run.add_argument("--goal-seed", type=int, default=0)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--resume-config", help="rerun from a persisted config.json")
    p_run.add_argument("--out", required=True)

    p_eval = sub.add_parser("eval", help="compare runs against a baseline run")
    p_eval.add_argument("--runs", nargs="+", required=True)
    p_eval.add_argument("--baseline", required=True)
    p_eval.add_argument("--out", required=True, help="merged metrics CSV")
    p_eval.add_argument("--plot", help="SVG gain-curve output path")

    p_val = sub.add_parser("validate", help="check stored workflows against the world")
    p_val.add_argument("--run", required=True)
    p_val.add_argument("--samples", type=int, default=40)
    p_val.add_argument("--backend", default=None, help="defaults to the run's backend")
    p_val.add_argument("--sample-seed", type=int, default=0)

    p_replay = sub.add_parser("replay", help="pretty-print a logged trajectory")
    p_replay.add_argument("--trajectory", required=True)
    p_replay.add_argument("--step", type=int, default=None)
    p_replay.add_argument("--index", type=int, default=0, help="episode record to show")

    return parser.parse_args(argv)


def _write_canonical(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_gen(args) -> int:
    if args.count is not None:
        if args.count <= 0:
            raise CliError("--count must be >= 1")
        seeds = list(range(args.base_seed, args.base_seed + args.count))
    elif args.seeds:
        seeds = list(args.seeds)
    else:
        raise CliError("provide --seeds or --count")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(f"output dir {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    config = GenConfig()
    index = {"seeds": seeds, "width": config.width, "height": config.height}
    for seed in seeds:
        try:
            world = generate(seed, config)
        except GenerationError as exc:
            raise CliError(f"generation failed for seed {seed}: {exc}") from None
        _write_canonical(out / f"world_{seed}.json", to_json(world) + "\n")
        if args.verbose:
            print(f"seed {seed}:\n{ascii_map(world)}\n", file=sys.stderr)
    _write_canonical(
        out / INDEX_FILE, json.dumps(index, sort_keys=True, separators=(",", ":")) + "\n"
    )
    print(f"wrote {len(seeds)} world snapshots to {out}", file=sys.stderr)
    return 0


def _env_seeds_from_dir(envs_dir: str) -> list[int]:
    index_path = Path(envs_dir) / INDEX_FILE
    if not index_path.is_file():
        raise CliError(f"{envs_dir} has no {INDEX_FILE}; run gen first")
    return list(json.loads(index_path.read_text(encoding="utf-8"))["seeds"])


def cmd_run(args) -> int:
    if args.resume_config:
        try:
            config = RunConfig.from_json(Path(args.resume_config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load config: {exc}") from None
    else:
        if not args.envs:
            raise CliError("provide --envs (or --resume-config)")
        config = RunConfig(
            env_seeds=tuple(_env_seeds_from_dir(args.envs)),
            episodes_per_env=args.episodes,
            horizon=args.horizon,
            strategy=args.strategy,
            backend=args.backend,
            goal_seed=args.goal_seed,
            workers=args.workers,
        )
    if config.episodes_per_env <= 0:
        raise CliError("--episodes must be >= 1")
    if config.backend == "live":
        import os

        missing = [v for v in (ENV_BASE_URL, ENV_API_KEY, ENV_MODEL) if not os.environ.get(v)]
        if missing:
            raise CliError(f"live backend requires env vars: {', '.join(missing)}")
    try:
        record = harness.run_stream(config, out_dir=Path(args.out))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    mean_final = harness.mean_cumulative_average(record)[-1]
    print(
        f"run complete: strategy={config.strategy} envs={len(config.env_seeds)} "
        f"episodes={config.episodes_per_env} mean_cum_avg_reward={mean_final:.3f}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args) -> int:
    try:
        baseline = load_run_record(Path(args.baseline))
        methods = [load_run_record(Path(d)) for d in args.runs]
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load run: {exc}") from None
    curves = {}
    rows = []
    for method in methods:
        try:
            gain = harness.gain_over_baseline(method, baseline)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        curves[method.strategy] = gain
        for env_seed in method.rewards:
            m_series = harness.cumulative_average(method.rewards[env_seed])
            b_series = harness.cumulative_average(baseline.rewards[env_seed])
            for episode in range(method.episodes_per_env):
                rows.append(
                    f"{method.strategy},{env_seed},{episode},"
                    f"{method.goals[env_seed][episode]},{method.rewards[env_seed][episode]},"
                    f"{m_series[episode]!r},{b_series[episode]!r},"
                    f"{m_series[episode] - b_series[episode]!r}"
                )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = "strategy,env_seed,episode,goal,reward,cum_avg_reward,baseline_cum_avg,gain"
    _write_canonical(out, "\n".join([header] + rows) + "\n")
    if args.plot:
        plot = Path(args.plot)
        plot.parent.mkdir(parents=True, exist_ok=True)
        _write_canonical(plot, harness.render_gain_svg(curves))
    print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    if args.samples <= 0:
        raise CliError("--samples must be >= 1")
    run_dir = Path(args.run)
    try:
        config = RunConfig.from_json((run_dir / "config.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load run config: {exc}") from None
    pools = load_validity_pools(run_dir)
    if not pools:
        print("nothing to validate: the run stored no workflows", file=sys.stderr)
        return 0
    worlds = {seed: generate(seed, config.gen_config()) for seed in config.env_seeds}
    backend_spec = args.backend or config.backend
    report = harness.validity_analysis(
        pools, worlds, backend_spec, args.samples, sample_seed=args.sample_seed,
        horizon=config.horizon,
    )
    pct = 100.0 * report.successes / report.total
    print(f"{report.successes}/{report.total} ({pct:.0f}%) workflows reached their goal")
    for failure in report.failures:
        print(
            f"failure [{failure.classification}] env={failure.env_seed} goal={failure.goal!r}"
        )
    return 0


def cmd_replay(args) -> int:
    path = Path(args.trajectory)
    if not path.is_file():
        raise CliError(f"no such trajectory file: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(deserialize(line))
            except ValueError as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise CliError(f"{path} contains no trajectory records")
    if not 0 <= args.index < len(records):
        raise CliError(f"--index {args.index} out of range (file has {len(records)} records)")
    traj = records[args.index]
    steps = traj.steps
    if args.step is not None:
        if not 1 <= args.step <= len(steps):
            raise CliError(f"--step {args.step} out of range (trajectory has {len(steps)} steps)")
        steps = [traj.steps[args.step - 1]]
    print(f"env_seed={traj.env_seed} episode={traj.episode_index} goal={render_goal(traj.goal)}")
    for offset, record in enumerate(steps):
        number = args.step if args.step is not None else offset + 1
        validity = "valid" if record.was_valid else "invalid"
        print(f"--- step {number} ---")
        print(f"observation: {record.observation_text}")
        print(f"thought:     {record.thought}")
        print(
            f"action:      {record.action_index} ({ACTION_NAMES[record.action_index]}) "
            f"[{validity}] reward={record.step_reward}"
        )
    outcome = "SUCCESS" if traj.success else "FAILURE"
    print(f"outcome: {outcome} (reward {traj.reward}, {len(traj.steps)} steps)")
    if traj.note:
        print(f"note: {traj.note}")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "eval": cmd_eval,
    "validate": cmd_validate,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    try:
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
