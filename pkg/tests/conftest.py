"""Shared fixtures: generated worlds plus a builder for hand-crafted layouts."""

from __future__ import annotations

import pytest

from echogrid.world import DOOR, FLOOR, WALL, AgentPose, Door, GridWorld, WorldObject, generate

DEFAULT_SEEDS = tuple(range(10))


def world_from_ascii(
    diagram: str,
    facing: str = "north",
    legend: dict[str, tuple[str, str]] | None = None,
    door_specs: list[tuple[str, str]] | None = None,
) -> GridWorld:
    """Build a synthetic world from a picture.

    '#' walls, '.' floor, '+' door slots (described by door_specs in reading
    order), '@' the agent, any legend character an object. Synthetic worlds
    skip the four-room invariants; they exist to pin down exact geometry.
    """
    legend = legend or {}
    door_specs = door_specs or []
    rows = [line for line in diagram.strip("\n").splitlines()]
    width = len(rows[0])
    assert all(len(r) == width for r in rows), "diagram rows must be equal length"
    cells = []
    doors = []
    objects = []
    agent_pos = None
    for y, row in enumerate(rows):
        clean = []
        for x, char in enumerate(row):
            if char == WALL:
                clean.append(WALL)
            elif char == DOOR:
                color, state = door_specs[len(doors)]
                doors.append(
                    Door(color=color, position=(x, y), state=state, home_state=state)
                )
                clean.append(DOOR)
            elif char == "@":
                agent_pos = (x, y)
                clean.append(FLOOR)
            elif char in legend:
                color, kind = legend[char]
                objects.append(
                    WorldObject(kind=kind, color=color, position=(x, y), home_position=(x, y))
                )
                clean.append(FLOOR)
            else:
                assert char == FLOOR, f"unknown diagram char {char!r}"
                clean.append(FLOOR)
        cells.append("".join(clean))
    assert agent_pos is not None, "diagram needs an @ agent"
    assert len(doors) == len(door_specs), "door_specs count must match '+' cells"
    return GridWorld(
        width=width,
        height=len(rows),
        cells=cells,
        doors=doors,
        objects=objects,
        agent=AgentPose(position=agent_pos, facing=facing, carrying=None, home=(agent_pos, facing)),
        seed=0,
        room_layout=(),
    )


@pytest.fixture
def world7():
    return generate(7)


@pytest.fixture
def bench_worlds():
    return [generate(seed) for seed in DEFAULT_SEEDS]
