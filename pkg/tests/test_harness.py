"""Runner determinism, metrics exactness, and the validity analysis."""

import json
import math

import pytest

from echogrid.harness import (
    RunConfig,
    cumulative_average,
    default_failure_classifier,
    gain_over_baseline,
    load_run_record,
    load_validity_pools,
    make_backend,
    mean_cumulative_average,
    render_gain_svg,
    run_stream,
    sample_goals,
    validity_analysis,
)
from echogrid.episode import StepRecord, Trajectory
from echogrid.rng import SplitMix64
from echogrid.textview import render_goal
from echogrid.world import Goal, generate


def test_sample_goals_membership_and_determinism(world7):
    goals = sample_goals(world7, 16, seed=5)
    assert len(goals) == 16
    pool = {(o.color, o.kind) for o in world7.objects}
    assert all((g.color, g.kind) in pool for g in goals)
    assert goals == sample_goals(world7, 16, seed=5)
    assert goals != sample_goals(world7, 16, seed=6)


def test_sample_goals_uniform_chi_square(world7):
    """1000 draws: frequencies within 3 sigma of uniform and chi-square sane."""
    n = 1000
    goals = sample_goals(world7, n, seed=11)
    counts = {}
    for goal in goals:
        counts[(goal.color, goal.kind)] = counts.get((goal.color, goal.kind), 0) + 1
    expected = n / 4
    sigma = math.sqrt(n * 0.25 * 0.75)
    for value in counts.values():
        assert abs(value - expected) <= 3 * sigma
    chi_square = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi_square < 16.27, "chi-square above the 0.1% critical value for df=3"


def test_sample_goals_requires_objects(world7):
    import dataclasses

    empty = dataclasses.replace(world7, objects=[])
    with pytest.raises(ValueError):
        sample_goals(empty, 4, seed=0)


def test_cumulative_average_examples():
    assert cumulative_average([1, 0, 1]) == [1.0, 0.5, 2 / 3]
    assert cumulative_average([0, 0, 0]) == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        cumulative_average([])


def test_cumulative_average_matches_brute_force():
    rng = SplitMix64(1234)
    for _ in range(50):
        series = [rng.randbelow(2) for _ in range(64)]
        fast = cumulative_average(series)
        brute = [sum(series[: tau + 1]) / (tau + 1) for tau in range(len(series))]
        assert all(abs(a - b) <= 1e-12 for a, b in zip(fast, brute))


def test_gain_over_baseline_contracts():
    base = dict(goal_seed=3, episodes_per_env=4)
    a = _record("echo", {0: [1, 1, 0, 1], 1: [0, 1, 1, 1]}, **base)
    b = _record("react", {0: [0, 0, 0, 0], 1: [0, 0, 0, 0]}, **base)
    assert gain_over_baseline(a, a) == [0.0, 0.0, 0.0, 0.0]
    ones = _record("echo", {0: [1] * 4, 1: [1] * 4}, **base)
    assert gain_over_baseline(ones, b) == [1.0, 1.0, 1.0, 1.0]
    # hand-computed fixture
    gain = gain_over_baseline(a, b)
    expected = [
        (1 / 1 + 0 / 1) / 2,
        (2 / 2 + 1 / 2) / 2,
        (2 / 3 + 2 / 3) / 2,
        (3 / 4 + 3 / 4) / 2,
    ]
    assert all(abs(x - y) <= 1e-12 for x, y in zip(gain, expected))


def test_gain_over_baseline_rejects_mismatches():
    a = _record("echo", {0: [1, 0]}, goal_seed=1, episodes_per_env=2)
    wrong_envs = _record("react", {1: [0, 0]}, goal_seed=1, episodes_per_env=2)
    wrong_seed = _record("react", {0: [0, 0]}, goal_seed=2, episodes_per_env=2)
    with pytest.raises(ValueError):
        gain_over_baseline(a, wrong_envs)
    with pytest.raises(ValueError):
        gain_over_baseline(a, wrong_seed)


def _record(strategy, rewards, goal_seed, episodes_per_env):
    from echogrid.harness import RunRecord

    return RunRecord(
        strategy=strategy,
        goal_seed=goal_seed,
        episodes_per_env=episodes_per_env,
        rewards=rewards,
        steps={k: [0] * len(v) for k, v in rewards.items()},
        goals={k: ["g"] * len(v) for k, v in rewards.items()},
    )


def _config(**overrides):
    defaults = dict(
        env_seeds=(0, 1),
        episodes_per_env=4,
        horizon=64,
        strategy="react",
        backend="scripted:turn-left",
        goal_seed=0,
        workers=1,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def test_run_stream_react_keeps_memory_empty(tmp_path):
    out = tmp_path / "run"
    record = run_stream(_config(), out_dir=out)
    assert all(r == [0, 0, 0, 0] for r in record.rewards.values())
    for env_seed in (0, 1):
        for episode in range(4):
            doc = json.loads((out / "memory" / str(env_seed) / f"{episode}.json").read_text())
            assert doc == {"kind": "none"}


def test_run_stream_oracle_backend_all_rewards_one():
    record = run_stream(_config(backend="scripted:oracle"))
    assert all(r == [1, 1, 1, 1] for r in record.rewards.values())


def test_run_stream_echo_demo_gain_after_episode_three():
    config = _config(
        env_seeds=tuple(range(4)), episodes_per_env=8, strategy="echo",
        backend="scripted:bfs-demo",
    )
    echo = run_stream(config)
    react = run_stream(_config(env_seeds=tuple(range(4)), episodes_per_env=8))
    gain = gain_over_baseline(echo, react)
    assert all(g > 0 for g in gain[3:]), "gain positive from episode index 3 on"
    for env_seed, rewards in echo.rewards.items():
        series = cumulative_average(rewards)
        assert all(b >= a for a, b in zip(series[3:], series[4:])), (
            "cumulative average non-decreasing after episode 3"
        )


def test_run_stream_goal_sequences_shared_across_strategies():
    a = run_stream(_config())
    b = run_stream(_config(strategy="echo", backend="scripted:bfs-demo"))
    assert a.goals == b.goals, "baseline pairing requires identical goal draws"


def test_run_stream_deterministic_outputs(tmp_path):
    config = _config(strategy="echo", backend="scripted:bfs-demo", workers=2)
    run_stream(config, out_dir=tmp_path / "a")
    run_stream(config, out_dir=tmp_path / "b")
    for name in ("trajectories.jsonl", "metrics.csv", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_stream_accounting():
    """Backend-recorded calls equal agent steps plus strategy calls (no retries)."""
    from echogrid.harness import run_env_stream

    for strategy in ("react", "reflexion", "awm", "echo"):
        config = _config(strategy=strategy, backend="scripted:bfs-demo")
        stream = run_env_stream(config, env_seed=0)
        total_steps = sum(e.steps for e in stream.episodes)
        total_strategy = sum(e.strategy_calls for e in stream.episodes)
        total_agent = sum(e.agent_calls for e in stream.episodes)
        assert total_agent == total_steps
        assert stream.backend_calls == total_agent + total_strategy


def test_run_record_roundtrip_from_dir(tmp_path):
    config = _config(strategy="echo", backend="scripted:bfs-demo")
    record = run_stream(config, out_dir=tmp_path / "run")
    loaded = load_run_record(tmp_path / "run")
    assert loaded.rewards == record.rewards
    assert loaded.steps == record.steps
    assert loaded.goals == record.goals
    assert loaded.strategy == "echo"


def test_config_json_roundtrip():
    config = _config(strategy="awmpp", goal_seed=17)
    assert RunConfig.from_json(config.to_json()) == config


def test_validity_analysis_bfs_backed_is_perfect(tmp_path):
    config = _config(
        env_seeds=(0, 1, 2), episodes_per_env=3, strategy="echo", backend="scripted:bfs-demo"
    )
    run_stream(config, out_dir=tmp_path / "run")
    pools = load_validity_pools(tmp_path / "run")
    assert pools, "echo stored workflows"
    worlds = {seed: generate(seed) for seed in (0, 1, 2)}
    report = validity_analysis(pools, worlds, "scripted:bfs-demo", n_samples=40)
    assert report.total == sum(len(p) for p in pools.values())
    assert report.successes == report.total
    assert report.failures == []


def test_validity_analysis_nothing_to_validate():
    report = validity_analysis({}, {}, "scripted:bfs-demo", n_samples=40)
    assert report.nothing_to_validate
    assert report.total == 0


def test_validity_analysis_sampling_is_deterministic(tmp_path):
    config = _config(
        env_seeds=(0, 1, 2), episodes_per_env=2, strategy="echo", backend="scripted:bfs-demo"
    )
    run_stream(config, out_dir=tmp_path / "run")
    pools = load_validity_pools(tmp_path / "run")
    worlds = {seed: generate(seed) for seed in (0, 1, 2)}
    first = validity_analysis(pools, worlds, "scripted:bfs-demo", n_samples=5, sample_seed=3)
    second = validity_analysis(pools, worlds, "scripted:bfs-demo", n_samples=5, sample_seed=3)
    assert first.total == second.total == 5
    assert first.successes == second.successes


def test_validity_analysis_classifies_infeasible_workflow():
    """A workflow that marches into a wall fails as infeasible_step."""
    world = generate(0)
    goal = Goal(world.objects[0].color, world.objects[0].kind)
    bogus = (
        "Step 1: From the starting position, follow this route: "
        "go forward, go forward, go forward, go forward, go forward, go forward, "
        "go forward, go forward, go forward, go forward, go forward, pick up. "
        f"Step 2: {render_goal(goal)}."
    )
    pools = {0: [(render_goal(goal), bogus)]}
    report = validity_analysis(pools, {0: world}, "scripted:bfs-demo", n_samples=1)
    assert report.successes == 0
    assert report.failures[0].classification == "infeasible_step"


def test_validity_analysis_hallucinated_goal_is_infeasible():
    from echogrid.world import COLORS, KINDS

    world = generate(0)
    present = {(o.color, o.kind) for o in world.objects}
    color, kind = next(
        (c, k) for k in KINDS for c in COLORS if (c, k) not in present
    )
    absent = f"Pick up the {color} {kind}"
    report = validity_analysis(
        {0: [(absent, "Step 1: wander.")]}, {0: world}, "scripted:bfs-demo", n_samples=1
    )
    assert report.successes == 0
    assert report.failures[0].classification == "infeasible_step"


def test_default_failure_classifier():
    deviation = Trajectory(goal=Goal("grey", "key"), steps=[
        StepRecord("o", "t", 0, True, 0)
    ])
    infeasible = Trajectory(goal=Goal("grey", "key"), steps=[
        StepRecord("o", "t", 2, False, 0)
    ])
    assert default_failure_classifier(deviation) == "agent_deviation"
    assert default_failure_classifier(infeasible) == "infeasible_step"


def test_make_backend_rejects_unknown():
    with pytest.raises(ValueError, match="unknown backend"):
        make_backend("scripted:nonsense", generate(0))


def test_render_gain_svg_deterministic():
    curves = {"echo": [0.0, 0.25, 0.5], "awm": [0.0, 0.0, 0.1]}
    first = render_gain_svg(curves)
    assert first == render_gain_svg(curves)
    assert first.startswith("<svg ")
    assert first.rstrip().endswith("</svg>")
    assert "polyline" in first


def test_mean_cumulative_average():
    record = _record("x", {0: [1, 1], 1: [0, 1]}, goal_seed=0, episodes_per_env=2)
    assert mean_cumulative_average(record) == [0.5, 0.75]
