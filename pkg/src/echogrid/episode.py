"""Episode execution loop, trajectory records, and JSONL (de)serialization.

Cross-episode information may only flow through a strategy's memory; within
an episode the policy sees the full history of observations, thoughts, and
actions so far. Episodes terminate immediately on success and never exceed
the horizon.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Protocol

from .textview import Observation, render, render_goal
from .world import ACTION_NAMES, Goal, GridWorld, goal_satisfied, step

TRAJECTORY_SCHEMA_VERSION = 1


class PolicyError(Exception):
    """The policy could not produce an action (after any retries)."""


class Policy(Protocol):
    def begin_episode(self, goal_text: str) -> None: ...

    def decide(self, observation: Observation) -> tuple[str, int]: ...


@dataclass
class StepRecord:
    observation_text: str
    thought: str
    action_index: int
    was_valid: bool
    step_reward: int


@dataclass
class Trajectory:
    goal: Goal
    steps: list[StepRecord] = field(default_factory=list)
    success: bool = False
    reward: int = 0
    env_seed: int = 0
    episode_index: int = 0
    note: str = ""


def run_episode(
    world: GridWorld,
    goal: Goal,
    policy: Policy,
    horizon: int = 64,
    env_seed: int = 0,
    episode_index: int = 0,
) -> Trajectory:
    """Loop render -> decide -> step until the goal is held or the horizon ends.

    Policy failures abort the episode as a failure with a diagnostic note;
    they never raise out of this function. The caller resets the world.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    traj = Trajectory(goal=goal, env_seed=env_seed, episode_index=episode_index)
    policy.begin_episode(render_goal(goal))
    for _ in range(horizon):
        observation = render(world)
        try:
            thought, action = policy.decide(observation)
        except PolicyError as exc:
            traj.note = f"policy failure: {exc}"
            break
        world, effect = step(world, action)
        reward = 1 if goal_satisfied(world, goal) else 0
        traj.steps.append(
            StepRecord(
                observation_text=observation.text,
                thought=thought,
                action_index=action,
                was_valid=effect.valid,
                step_reward=reward,
            )
        )
        if reward:
            traj.success = True
            traj.reward = 1
            break
    return traj


def format_trajectory(traj: Trajectory, horizon: int = 64) -> str:
    """Plain-text transcript shown to offline reasoning calls."""
    lines = [f"Goal: {render_goal(traj.goal)}"]
    for i, rec in enumerate(traj.steps, start=1):
        lines.append(f"Step {i}")
        lines.append(f"Observation: {rec.observation_text}")
        lines.append(f"Thought: {rec.thought}")
        validity = "valid" if rec.was_valid else "invalid"
        lines.append(f"Action: {rec.action_index} ({ACTION_NAMES[rec.action_index]}) [{validity}]")
    if traj.success:
        lines.append(
            f"Outcome: SUCCESS. The goal was achieved at step {len(traj.steps)}. Final reward: 1."
        )
    else:
        lines.append(
            f"Outcome: FAILURE. The goal was not achieved within {horizon} steps. Final reward: 0."
        )
    return "\n".join(lines)


def serialize(traj: Trajectory) -> str:
    """One canonical JSONL record (no trailing newline)."""
    doc = {
        "version": TRAJECTORY_SCHEMA_VERSION,
        "env_seed": traj.env_seed,
        "episode_index": traj.episode_index,
        "goal": {"color": traj.goal.color, "kind": traj.goal.kind},
        "success": traj.success,
        "reward": traj.reward,
        "note": traj.note,
        "steps": [
            {
                "observation_text": s.observation_text,
                "thought": s.thought,
                "action_index": s.action_index,
                "was_valid": s.was_valid,
                "step_reward": s.step_reward,
            }
            for s in traj.steps
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def deserialize(record: str) -> Trajectory:
    try:
        doc = json.loads(record)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed trajectory record: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != TRAJECTORY_SCHEMA_VERSION:
        raise ValueError("unsupported or missing trajectory schema version")
    try:
        return Trajectory(
            goal=Goal(color=doc["goal"]["color"], kind=doc["goal"]["kind"]),
            steps=[
                StepRecord(
                    observation_text=s["observation_text"],
                    thought=s["thought"],
                    action_index=s["action_index"],
                    was_valid=s["was_valid"],
                    step_reward=s["step_reward"],
                )
                for s in doc["steps"]
            ],
            success=doc["success"],
            reward=doc["reward"],
            env_seed=doc["env_seed"],
            episode_index=doc["episode_index"],
            note=doc.get("note", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed trajectory record: missing field {exc}") from None


def read_trajectories(path) -> Iterator[Trajectory]:
    """Parse a JSONL log, reporting malformed lines with their line numbers."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield deserialize(line)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
