"""Memory strategies: the hindsight rule / update rule pairs.

Each strategy is the pair (how a finished trajectory becomes memory
candidates, how candidates merge into stored memory) plus a renderer that
injects the memory into the acting agent's system prompt. after_episode is
the only cross-episode information channel.

  echo      three offline calls (summarize, identify_goals, then one
            infer_traj per proposed goal); goal-keyed buffer keeps the
            shorter workflow on collision
  reflexion one reflect call; appends a note to semantic memory
  awm       one call; appends (goal, workflow) only when the model judges
            the episode successful (duplicates allowed)
  awmpp     awm's hindsight rule with the keep-shorter keyed update rule
  react     no memory at all
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Protocol

from . import prompts
from .episode import Trajectory, format_trajectory
from .lm import (
    OFFLINE_MAX_NEW_TOKENS,
    OFFLINE_TEMPERATURE,
    LMBackend,
    LMRequest,
    ParseError,
    parse_json_payload,
    parse_summary,
)
from .textview import canonical_goal

logger = logging.getLogger(__name__)

MAX_GOALS_PER_EPISODE = 8  # cost bound on one hindsight pass


@dataclass
class ReplayBuffer:
    """Goal-keyed workflow store; per goal, stored length never increases."""

    entries: dict[str, str] = field(default_factory=dict)  # insertion-ordered

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class WorkflowLog:
    """Append-only (goal, workflow) log; duplicates allowed."""

    entries: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class SemanticMemory:
    """Append-only reflections."""

    reflections: list[str] = field(default_factory=list)


def update_rule(buffer: ReplayBuffer, goal: str, new_workflow: str) -> ReplayBuffer:
    """Insert if absent; replace only when strictly shorter (character count).

    Empty workflows are rejected as no-ops, so the buffer never stores one.
    """
    if not new_workflow:
        return buffer
    goal = canonical_goal(goal)
    old = buffer.entries.get(goal)
    if old is None or len(new_workflow) < len(old):
        buffer.entries[goal] = new_workflow
    return buffer


def _offline_request(system_prompt: str, user_text: str) -> LMRequest:
    return LMRequest(
        system_prompt=system_prompt,
        messages=[{"role": "user", "content": user_text}],
        temperature=OFFLINE_TEMPERATURE,
        max_new_tokens=OFFLINE_MAX_NEW_TOKENS,
    )


def echo_after_episode(
    backend: LMBackend, trajectory: Trajectory, buffer: ReplayBuffer
) -> ReplayBuffer:
    """Hindsight pass over any finished episode, success or failure.

    summarize -> identify_goals -> infer_traj per goal, then the keep-shorter
    update per goal. An empty goal list is an abstention and changes nothing.
    A parse failure skips that stage's products and leaves affected goals
    untouched.
    """
    transcript = format_trajectory(trajectory)
    try:
        summary = parse_summary(
            backend.complete(_offline_request(prompts.ECHO_SUMMARIZE, transcript))
        )
    except ParseError as exc:
        logger.warning("echo summarize parse failure: %s", exc)
        return buffer
    try:
        reply = backend.complete(
            _offline_request(
                prompts.ECHO_IDENTIFY_GOALS, f"Trajectory summary:\n{summary}"
            )
        )
        goals = parse_json_payload(reply, {"possible_goals": list})["possible_goals"]
    except ParseError as exc:
        logger.warning("echo identify_goals parse failure: %s", exc)
        return buffer
    for goal_text in goals[:MAX_GOALS_PER_EPISODE]:
        try:
            reply = backend.complete(
                _offline_request(
                    prompts.ECHO_INFER_TRAJ,
                    f"Goal: {goal_text}\n\nTrajectory summary:\n{summary}",
                )
            )
            payload = parse_json_payload(reply, {"goal": str, "workflow": str})
        except ParseError as exc:
            logger.warning("echo infer_traj parse failure for %r: %s", goal_text, exc)
            continue
        if payload["workflow"]:
            update_rule(buffer, payload["goal"], payload["workflow"])
    return buffer


def reflexion_after_episode(
    backend: LMBackend, trajectory: Trajectory, memory: SemanticMemory
) -> SemanticMemory:
    """One reflect call; memory grows by exactly one entry per parsed reply."""
    try:
        reply = backend.complete(
            _offline_request(prompts.REFLEXION, format_trajectory(trajectory))
        )
        reflection = parse_json_payload(reply, {"reflection": str})["reflection"]
    except ParseError as exc:
        logger.warning("reflexion parse failure: %s", exc)
        return memory
    memory.reflections.append(reflection)
    return memory


def _awm_call(backend: LMBackend, trajectory: Trajectory) -> Optional[tuple[str, str]]:
    try:
        reply = backend.complete(
            _offline_request(prompts.AWM, format_trajectory(trajectory))
        )
        payload = parse_json_payload(reply, {"goal": str, "workflow": str})
    except ParseError as exc:
        logger.warning("awm parse failure: %s", exc)
        return None
    if not payload["workflow"]:
        return None  # the model judged the episode unsuccessful
    return canonical_goal(payload["goal"]), payload["workflow"]


def awm_after_episode(
    backend: LMBackend, trajectory: Trajectory, log: WorkflowLog
) -> WorkflowLog:
    entry = _awm_call(backend, trajectory)
    if entry is not None:
        log.entries.append(entry)
    return log


def awmpp_after_episode(
    backend: LMBackend, trajectory: Trajectory, buffer: ReplayBuffer
) -> ReplayBuffer:
    entry = _awm_call(backend, trajectory)
    if entry is not None:
        update_rule(buffer, entry[0], entry[1])
    return buffer


def render_workflows(pairs) -> str:
    lines = ["Known workflows:"]
    lines.extend(f"{goal}: {workflow}" for goal, workflow in pairs)
    return "\n".join(lines)


class MemoryStrategy(Protocol):
    name: str

    def new_memory(self): ...

    def after_episode(self, backend: LMBackend, trajectory: Trajectory, memory): ...

    def render_memory(self, memory) -> str: ...

    def memory_snapshot(self, memory) -> dict: ...

    def load_snapshot(self, doc: dict): ...


class ReactStrategy:
    """Memoryless baseline: pure act-only agent."""

    name = "react"

    def new_memory(self):
        return None

    def after_episode(self, backend, trajectory, memory):
        return memory

    def render_memory(self, memory) -> str:
        return ""

    def memory_snapshot(self, memory) -> dict:
        return {"kind": "none"}

    def load_snapshot(self, doc):
        return None


class EchoStrategy:
    name = "echo"

    def new_memory(self) -> ReplayBuffer:
        return ReplayBuffer()

    def after_episode(self, backend, trajectory, memory: ReplayBuffer) -> ReplayBuffer:
        return echo_after_episode(backend, trajectory, memory)

    def render_memory(self, memory: ReplayBuffer) -> str:
        if not memory.entries:
            return ""
        return render_workflows(memory.entries.items())

    def memory_snapshot(self, memory: ReplayBuffer) -> dict:
        return {"kind": "replay_buffer", "entries": [[g, w] for g, w in memory.entries.items()]}

    def load_snapshot(self, doc: dict) -> ReplayBuffer:
        return ReplayBuffer(entries={g: w for g, w in doc["entries"]})


class AwmPlusPlusStrategy(EchoStrategy):
    name = "awmpp"

    def after_episode(self, backend, trajectory, memory: ReplayBuffer) -> ReplayBuffer:
        return awmpp_after_episode(backend, trajectory, memory)


class AwmStrategy:
    name = "awm"

    def new_memory(self) -> WorkflowLog:
        return WorkflowLog()

    def after_episode(self, backend, trajectory, memory: WorkflowLog) -> WorkflowLog:
        return awm_after_episode(backend, trajectory, memory)

    def render_memory(self, memory: WorkflowLog) -> str:
        if not memory.entries:
            return ""
        return render_workflows(memory.entries)

    def memory_snapshot(self, memory: WorkflowLog) -> dict:
        return {"kind": "workflow_log", "entries": [[g, w] for g, w in memory.entries]}

    def load_snapshot(self, doc: dict) -> WorkflowLog:
        return WorkflowLog(entries=[(g, w) for g, w in doc["entries"]])


class ReflexionStrategy:
    name = "reflexion"

    def new_memory(self) -> SemanticMemory:
        return SemanticMemory()

    def after_episode(self, backend, trajectory, memory: SemanticMemory) -> SemanticMemory:
        return reflexion_after_episode(backend, trajectory, memory)

    def render_memory(self, memory: SemanticMemory) -> str:
        if not memory.reflections:
            return ""
        return "\n".join(["Notes from previous episodes:"] + memory.reflections)

    def memory_snapshot(self, memory: SemanticMemory) -> dict:
        return {"kind": "semantic", "reflections": list(memory.reflections)}

    def load_snapshot(self, doc: dict) -> SemanticMemory:
        return SemanticMemory(reflections=list(doc["reflections"]))


STRATEGIES: dict[str, MemoryStrategy] = {
    s.name: s
    for s in (
        ReactStrategy(),
        ReflexionStrategy(),
        AwmStrategy(),
        AwmPlusPlusStrategy(),
        EchoStrategy(),
    )
}


def get_strategy(name: str) -> MemoryStrategy:
    try:
        return STRATEGIES[name]
    except KeyError:
        raise ValueError(
            f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}"
        ) from None


def workflow_pairs(snapshot: dict) -> list[tuple[str, str]]:
    """(goal, workflow) pairs from a memory snapshot document, if any."""
    if snapshot.get("kind") in ("replay_buffer", "workflow_log"):
        return [(g, w) for g, w in snapshot["entries"]]
    return []
