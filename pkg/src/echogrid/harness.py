"""Experiment runner, sample-efficiency metrics, and workflow validity checks.

A run walks one episode stream per environment seed: generate, then for
each episode reset -> act -> record reward -> apply the strategy's
after_episode. Memory persists across episodes within an environment and
never across environments. Streams are independent, so they may run in
parallel; all outputs are written in a fixed order to keep runs
byte-reproducible.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .episode import Trajectory, run_episode, serialize
from .lm import BackendError, LiveBackend
from .oracle import DemoBackend, OracleBackend, TurnLeftBackend
from .policy import ReactPolicy
from .rng import SplitMix64, stage_stream
from .strategies import get_strategy, render_workflows, workflow_pairs
from .textview import canonical_goal, parse_goal, render_goal
from .world import GenConfig, Goal, GridWorld, generate, reset

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
METRICS_HEADER = "env_seed,episode,goal,reward,steps,cum_avg_reward,strategy"

SCRIPTED_BACKENDS = ("scripted:turn-left", "scripted:oracle", "scripted:bfs-demo")


@dataclass(frozen=True)
class RunConfig:
    env_seeds: tuple[int, ...]
    episodes_per_env: int = 16
    horizon: int = 64
    strategy: str = "react"
    backend: str = "scripted:turn-left"
    goal_seed: int = 0
    workers: Optional[int] = None
    grid_width: int = 13
    grid_height: int = 13

    def gen_config(self) -> GenConfig:
        return GenConfig(width=self.grid_width, height=self.grid_height)

    def to_json(self) -> str:
        doc = {"version": CONFIG_VERSION, **asdict(self)}
        doc["env_seeds"] = list(self.env_seeds)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        doc = json.loads(text)
        if doc.pop("version", None) != CONFIG_VERSION:
            raise ValueError("unsupported run config version")
        doc["env_seeds"] = tuple(doc["env_seeds"])
        return cls(**doc)


@dataclass
class EpisodeResult:
    goal: Goal
    reward: int
    steps: int
    trajectory: Trajectory
    memory_snapshot: dict
    agent_calls: int
    strategy_calls: int


@dataclass
class StreamResult:
    env_seed: int
    episodes: list[EpisodeResult]
    backend_calls: int = 0  # scripted-backend counter for accounting checks


@dataclass
class RunRecord:
    """Reward series and accounting for one completed run."""

    strategy: str
    goal_seed: int
    episodes_per_env: int
    rewards: dict[int, list[int]]  # env seed -> reward per episode
    steps: dict[int, list[int]]
    goals: dict[int, list[str]]
    agent_calls: int = 0
    strategy_calls: int = 0

    @property
    def env_seeds(self) -> list[int]:
        return list(self.rewards)


def make_backend(spec: str, world: GridWorld, mirror_path: Optional[str] = None):
    """Backend factory; scripted backends are bound to one environment.

    Live backends honor the optional LM_RPM env var (token-bucket rate limit)
    and mirror raw request/response pairs to mirror_path when given.
    """
    if spec == "live":
        import os

        from .lm import TokenBucket

        rpm = os.environ.get("LM_RPM")
        limiter = TokenBucket(int(rpm)) if rpm else None
        return LiveBackend(rate_limiter=limiter, mirror_path=mirror_path)
    if spec == "scripted:turn-left":
        return TurnLeftBackend()
    if spec == "scripted:oracle":
        return OracleBackend(world)
    if spec == "scripted:bfs-demo":
        return DemoBackend(world)
    raise ValueError(
        f"unknown backend {spec!r}; expected 'live' or one of {list(SCRIPTED_BACKENDS)}"
    )


def sample_goals(world: GridWorld, count: int, seed: int) -> list[Goal]:
    """count i.i.d. uniform draws (with replacement) over the world's objects."""
    if not world.objects:
        raise ValueError("world has no objects to sample goals from")
    rng = SplitMix64(seed)
    return [
        Goal(obj.color, obj.kind)
        for obj in (world.objects[rng.randbelow(len(world.objects))] for _ in range(count))
    ]


def _env_goal_seed(goal_seed: int, env_seed: int) -> int:
    # Per-env goal stream tied to (run goal seed, env seed) so method and
    # baseline runs sample identical goal sequences.
    return stage_stream(goal_seed, f"goals/{env_seed}").next_u64()


def run_env_stream(
    config: RunConfig, env_seed: int, mirror_path: Optional[str] = None
) -> StreamResult:
    """All episodes for one environment; memory evolves strictly in order."""
    world = generate(env_seed, config.gen_config())
    backend = make_backend(config.backend, world, mirror_path=mirror_path)
    strategy = get_strategy(config.strategy)
    memory = strategy.new_memory()
    goals = sample_goals(
        world, config.episodes_per_env, _env_goal_seed(config.goal_seed, env_seed)
    )
    episodes = []
    for index, goal in enumerate(goals):
        reset(world)
        policy = ReactPolicy(
            backend,
            horizon=config.horizon,
            memory_text=strategy.render_memory(memory),
        )
        trajectory = run_episode(
            world, goal, policy, config.horizon, env_seed=env_seed, episode_index=index
        )
        strategy_calls_before = getattr(backend, "calls", 0)
        try:
            memory = strategy.after_episode(backend, trajectory, memory)
        except BackendError as exc:
            logger.warning(
                "strategy %s failed after episode %d of env %d: %s",
                config.strategy, index, env_seed, exc,
            )
        strategy_calls = getattr(backend, "calls", 0) - strategy_calls_before
        episodes.append(
            EpisodeResult(
                goal=goal,
                reward=trajectory.reward,
                steps=len(trajectory.steps),
                trajectory=trajectory,
                memory_snapshot=strategy.memory_snapshot(memory),
                agent_calls=policy.total_calls,
                strategy_calls=strategy_calls,
            )
        )
    return StreamResult(
        env_seed=env_seed, episodes=episodes, backend_calls=getattr(backend, "calls", 0)
    )


def run_stream(config: RunConfig, out_dir: Optional[Path] = None) -> RunRecord:
    """Execute every environment stream and optionally persist the run."""
    mirror_path = None
    if out_dir is not None and config.backend == "live":
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        mirror_path = str(Path(out_dir) / "lm_calls.jsonl")
    workers = config.workers or len(config.env_seeds)
    if workers > 1 and len(config.env_seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            streams = list(
                pool.map(lambda s: run_env_stream(config, s, mirror_path), config.env_seeds)
            )
    else:
        streams = [run_env_stream(config, s, mirror_path) for s in config.env_seeds]

    record = RunRecord(
        strategy=config.strategy,
        goal_seed=config.goal_seed,
        episodes_per_env=config.episodes_per_env,
        rewards={s.env_seed: [e.reward for e in s.episodes] for s in streams},
        steps={s.env_seed: [e.steps for e in s.episodes] for s in streams},
        goals={
            s.env_seed: [render_goal(e.goal) for e in s.episodes] for s in streams
        },
        agent_calls=sum(e.agent_calls for s in streams for e in s.episodes),
        strategy_calls=sum(e.strategy_calls for s in streams for e in s.episodes),
    )
    if out_dir is not None:
        write_run_dir(Path(out_dir), config, streams, record)
    return record


def write_run_dir(
    out_dir: Path, config: RunConfig, streams: list[StreamResult], record: RunRecord
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(config.to_json() + "\n", encoding="utf-8")
    with open(out_dir / "trajectories.jsonl", "w", encoding="utf-8") as fh:
        for stream in streams:
            for episode in stream.episodes:
                fh.write(serialize(episode.trajectory) + "\n")
    for stream in streams:
        mem_dir = out_dir / "memory" / str(stream.env_seed)
        mem_dir.mkdir(parents=True, exist_ok=True)
        for index, episode in enumerate(stream.episodes):
            (mem_dir / f"{index}.json").write_text(
                json.dumps(episode.memory_snapshot, sort_keys=True, separators=(",", ":"))
                + "\n",
                encoding="utf-8",
            )
    with open(out_dir / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for stream in streams:
            series = cumulative_average([e.reward for e in stream.episodes])
            for index, episode in enumerate(stream.episodes):
                fh.write(
                    f"{stream.env_seed},{index},{render_goal(episode.goal)},"
                    f"{episode.reward},{episode.steps},{series[index]!r},{config.strategy}\n"
                )


def cumulative_average(rewards: list) -> list[float]:
    """Element tau is the mean of rewards[0..tau]."""
    if not rewards:
        raise ValueError("cumulative_average requires a non-empty series")
    out = []
    total = 0.0
    for tau, reward in enumerate(rewards):
        total += reward
        out.append(total / (tau + 1))
    return out


def mean_cumulative_average(record: RunRecord) -> list[float]:
    """Per-episode mean over environments of each env's cumulative average."""
    series = [cumulative_average(record.rewards[s]) for s in record.rewards]
    return [sum(col) / len(col) for col in zip(*series)]


def gain_over_baseline(method: RunRecord, baseline: RunRecord) -> list[float]:
    """Per-episode cumulative-average difference, averaged across environments."""
    if (
        sorted(method.rewards) != sorted(baseline.rewards)
        or method.episodes_per_env != baseline.episodes_per_env
        or method.goal_seed != baseline.goal_seed
    ):
        raise ValueError(
            "method and baseline runs must share env seeds, episode counts, "
            "and goal-sampling seeds"
        )
    gains = []
    for env_seed in method.rewards:
        m = cumulative_average(method.rewards[env_seed])
        b = cumulative_average(baseline.rewards[env_seed])
        gains.append([x - y for x, y in zip(m, b)])
    return [sum(col) / len(col) for col in zip(*gains)]


@dataclass
class ValidityFailure:
    env_seed: int
    goal: str
    workflow: str
    classification: str  # "agent_deviation" | "infeasible_step"


@dataclass
class ValidityReport:
    successes: int
    total: int
    failures: list[ValidityFailure] = field(default_factory=list)

    @property
    def nothing_to_validate(self) -> bool:
        return self.total == 0


def default_failure_classifier(trajectory: Trajectory) -> str:
    """Invalid executed steps point at an infeasible workflow step."""
    if any(not s.was_valid for s in trajectory.steps):
        return "infeasible_step"
    return "agent_deviation"


def validity_analysis(
    pools: dict[int, list[tuple[str, str]]],
    worlds: dict[int, GridWorld],
    backend_spec: str,
    n_samples: int,
    sample_seed: int = 0,
    horizon: int = 64,
    classifier: Callable[[Trajectory], str] = default_failure_classifier,
) -> ValidityReport:
    """Run sampled (goal, workflow) pairs with the workflow injected into the
    system prompt and count how many reach their goal.

    pools maps env seed to that run's stored (goal, workflow) pairs.
    """
    flat = [
        (env_seed, goal, workflow)
        for env_seed in sorted(pools)
        for goal, workflow in pools[env_seed]
    ]
    if not flat:
        return ValidityReport(successes=0, total=0)
    if len(flat) > n_samples:
        rng = SplitMix64(sample_seed)
        flat = [flat[i] for i in sorted(rng.sample(range(len(flat)), n_samples))]
    successes = 0
    failures = []
    for env_seed, goal_text, workflow in flat:
        world = worlds[env_seed]
        reset(world)
        try:
            goal = parse_goal(goal_text)
            if not any(
                o.color == goal.color and o.kind == goal.kind for o in world.objects
            ):
                raise ValueError("goal object not present")
        except ValueError:
            # hallucinated goal: nothing in the world can satisfy it
            failures.append(
                ValidityFailure(
                    env_seed=env_seed,
                    goal=goal_text,
                    workflow=workflow,
                    classification="infeasible_step",
                )
            )
            continue
        backend = make_backend(backend_spec, world)
        policy = ReactPolicy(
            backend,
            horizon=horizon,
            memory_text=render_workflows([(canonical_goal(goal_text), workflow)]),
        )
        trajectory = run_episode(world, goal, policy, horizon)
        if trajectory.success:
            successes += 1
        else:
            failures.append(
                ValidityFailure(
                    env_seed=env_seed,
                    goal=goal_text,
                    workflow=workflow,
                    classification=classifier(trajectory),
                )
            )
    return ValidityReport(successes=successes, total=len(flat), failures=failures)


def load_run_record(run_dir: Path) -> RunRecord:
    """Rebuild a RunRecord from a persisted run directory."""
    run_dir = Path(run_dir)
    config = RunConfig.from_json((run_dir / "config.json").read_text(encoding="utf-8"))
    rewards: dict[int, list[int]] = {seed: [] for seed in config.env_seeds}
    steps: dict[int, list[int]] = {seed: [] for seed in config.env_seeds}
    goals: dict[int, list[str]] = {seed: [] for seed in config.env_seeds}
    with open(run_dir / "metrics.csv", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"{run_dir}/metrics.csv: unexpected header {header!r}")
        for line in fh:
            env_seed, _episode, goal, reward, step_count, _cum, _strategy = line.rstrip(
                "\n"
            ).split(",")
            rewards[int(env_seed)].append(int(reward))
            steps[int(env_seed)].append(int(step_count))
            goals[int(env_seed)].append(goal)
    return RunRecord(
        strategy=config.strategy,
        goal_seed=config.goal_seed,
        episodes_per_env=config.episodes_per_env,
        rewards=rewards,
        steps=steps,
        goals=goals,
    )


def load_validity_pools(run_dir: Path) -> dict[int, list[tuple[str, str]]]:
    """Final-episode (goal, workflow) pairs per environment of a saved run."""
    pools: dict[int, list[tuple[str, str]]] = {}
    memory_root = run_dir / "memory"
    if not memory_root.is_dir():
        return pools
    for env_dir in sorted(memory_root.iterdir(), key=lambda p: int(p.name)):
        snapshots = sorted(env_dir.glob("*.json"), key=lambda p: int(p.stem))
        if not snapshots:
            continue
        doc = json.loads(snapshots[-1].read_text(encoding="utf-8"))
        pairs = workflow_pairs(doc)
        if pairs:
            pools[int(env_dir.name)] = pairs
    return pools


# ---------------------------------------------------------------------------
# SVG gain curves
# ---------------------------------------------------------------------------

_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def render_gain_svg(curves: dict[str, list[float]], width: int = 640, height: int = 400) -> str:
    """Minimal deterministic SVG line chart of cumulative-average gains.

    Hand-rolled instead of a plotting library so output bytes are stable
    enough to pin in golden tests.
    """
    margin = 50
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    lows = [min(series) for series in curves.values() if series]
    highs = [max(series) for series in curves.values() if series]
    lo = min(lows + [0.0])
    hi = max(highs + [0.0])
    if hi == lo:
        hi = lo + 1.0
    n = max((len(s) for s in curves.values()), default=2)

    def sx(i: float) -> float:
        return margin + plot_w * (i / max(n - 1, 1))

    def sy(v: float) -> float:
        return margin + plot_h * (1 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{sy(0.0):.2f}" x2="{width - margin}" y2="{sy(0.0):.2f}" '
        'stroke="#888888" stroke-dasharray="4 4"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 10}" text-anchor="middle" '
        'font-size="13">episode</text>',
        f'<text x="14" y="{height // 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {height // 2})">cumulative average reward gain</text>',
        f'<text x="{margin - 6}" y="{sy(lo):.2f}" text-anchor="end" font-size="11">{lo:.2f}</text>',
        f'<text x="{margin - 6}" y="{sy(hi):.2f}" text-anchor="end" font-size="11">{hi:.2f}</text>',
    ]
    for idx, (label, series) in enumerate(sorted(curves.items())):
        color = _SVG_COLORS[idx % len(_SVG_COLORS)]
        points = " ".join(f"{sx(i):.2f},{sy(v):.2f}" for i, v in enumerate(series))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>'
        )
        parts.append(
            f'<text x="{width - margin + 4}" y="{margin + 16 * idx + 12}" '
            f'font-size="12" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
