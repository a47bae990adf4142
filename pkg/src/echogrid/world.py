"""Procedural four-room gridworld with deterministic generation and reset.

The grid is a 2x2 arrangement of rooms separated by one-cell walls, with one
door per shared wall (so the room graph is a connected cycle). Each room
holds exactly one portable object. Worlds are generated from a 64-bit seed
and can always be reset to their exact starting configuration, which is what
makes cross-episode memory the only learnable advantage.

Coordinates are (x, y) with x growing east and y growing south; north is -y.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .rng import stage_stream

WALL = "#"
FLOOR = "."
DOOR = "+"

KINDS = ("key", "ball", "box", "star", "hexagon", "square")
COLORS = ("red", "green", "blue", "purple", "yellow", "grey")
FACINGS = ("north", "east", "south", "west")

# Unit vectors per facing, and the rightward lateral vector for each.
FACING_VECTORS = {
    "north": (0, -1),
    "east": (1, 0),
    "south": (0, 1),
    "west": (-1, 0),
}
RIGHT_VECTORS = {
    "north": (1, 0),
    "east": (0, 1),
    "south": (-1, 0),
    "west": (0, -1),
}

# Global action indexing, constant across all steps and episodes.
TURN_LEFT = 0
TURN_RIGHT = 1
GO_FORWARD = 2
PICK_UP = 3
PUT_DOWN = 4
TOGGLE_DOOR = 5
ACTION_NAMES = ("turn left", "turn right", "go forward", "pick up", "put down", "toggle door")

SNAPSHOT_VERSION = 1


class GenerationError(ValueError):
    """Raised when a generation config cannot produce a valid world."""


@dataclass(frozen=True)
class Goal:
    """A pick-up goal naming one (color, kind) object."""

    color: str
    kind: str


@dataclass(frozen=True)
class GenConfig:
    width: int = 13
    height: int = 13
    n_rooms: int = 4
    n_objects: int = 4


@dataclass
class WorldObject:
    kind: str
    color: str
    position: Optional[tuple[int, int]]
    home_position: tuple[int, int]


@dataclass
class Door:
    color: str
    position: tuple[int, int]
    state: str  # "open" | "closed"
    home_state: str


@dataclass
class AgentPose:
    position: tuple[int, int]
    facing: str
    carrying: Optional[int]  # index into GridWorld.objects
    home: tuple[tuple[int, int], str]


@dataclass
class StepEffect:
    action: int
    valid: bool
    event: str


@dataclass
class GridWorld:
    width: int
    height: int
    cells: list[str]  # row strings of WALL/FLOOR/DOOR characters
    doors: list[Door]
    objects: list[WorldObject]
    agent: AgentPose
    seed: int
    room_layout: tuple[tuple[int, int, int, int], ...]  # interior (x0, y0, x1, y1) per room

    def cell(self, pos: tuple[int, int]) -> str:
        x, y = pos
        if not (0 <= x < self.width and 0 <= y < self.height):
            return WALL
        return self.cells[y][x]

    def door_at(self, pos: tuple[int, int]) -> Optional[Door]:
        for door in self.doors:
            if door.position == pos:
                return door
        return None

    def object_at(self, pos: tuple[int, int]) -> Optional[WorldObject]:
        for obj in self.objects:
            if obj.position == pos:
                return obj
        return None

    @property
    def carried_object(self) -> Optional[WorldObject]:
        if self.agent.carrying is None:
            return None
        return self.objects[self.agent.carrying]

    def room_cells(self, room: tuple[int, int, int, int]) -> list[tuple[int, int]]:
        x0, y0, x1, y1 = room
        return [(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]


def _layout(config: GenConfig):
    """Static wall layout for the 2x2 partition; raises on impossible sizes."""
    if config.n_rooms != 4:
        raise GenerationError("only the 2x2 four-room partition is supported")
    if config.n_objects != 4:
        raise GenerationError("exactly one object per room is required (4 objects)")
    w, h = config.width, config.height
    if w % 2 == 0 or h % 2 == 0 or w < 7 or h < 7:
        raise GenerationError(
            f"grid {w}x{h} cannot host 2x2 rooms; need odd width/height >= 7"
        )
    mid_x, mid_y = w // 2, h // 2
    rows = []
    for y in range(h):
        row = "".join(
            WALL if x in (0, w - 1, mid_x) or y in (0, h - 1, mid_y) else FLOOR
            for x in range(w)
        )
        rows.append(row)
    rooms = (
        (1, 1, mid_x - 1, mid_y - 1),
        (mid_x + 1, 1, w - 2, mid_y - 1),
        (1, mid_y + 1, mid_x - 1, h - 2),
        (mid_x + 1, mid_y + 1, w - 2, h - 2),
    )
    # Shared walls in fixed order: rooms (0,1), (0,2), (1,3), (2,3).
    walls = [
        [(mid_x, y) for y in range(1, mid_y)],
        [(x, mid_y) for x in range(1, mid_x)],
        [(x, mid_y) for x in range(mid_x + 1, w - 1)],
        [(mid_x, y) for y in range(mid_y + 1, h - 1)],
    ]
    return rows, rooms, walls


def _set_cell(rows: list[str], pos: tuple[int, int], char: str) -> None:
    x, y = pos
    rows[y] = rows[y][:x] + char + rows[y][x + 1 :]


def generate(seed: int, config: GenConfig = GenConfig()) -> GridWorld:
    """Build a world fully determined by (seed, config).

    Stage streams: "doors" places one door per shared wall and colors them,
    "objects" picks four distinct (kind, color) pairs and one floor cell per
    room, "agent" spawns the agent. Object cells adjacent to a door slot are
    excluded so no doorway can ever be blocked at reset, which is what keeps
    every goal solvable within the episode horizon.
    """
    rows, rooms, walls = _layout(config)

    door_rng = stage_stream(seed, "doors")
    doors: list[Door] = []
    door_colors = door_rng.sample(COLORS, len(walls))
    for wall_cells, color in zip(walls, door_colors):
        pos = door_rng.choice(wall_cells)
        _set_cell(rows, pos, DOOR)
        doors.append(Door(color=color, position=pos, state="closed", home_state="closed"))

    door_adjacent = set()
    for door in doors:
        x, y = door.position
        door_adjacent.update({(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)})

    obj_rng = stage_stream(seed, "objects")
    combos = [(color, kind) for kind in KINDS for color in COLORS]
    chosen = obj_rng.sample(combos, config.n_objects)
    objects: list[WorldObject] = []
    for room, (color, kind) in zip(rooms, chosen):
        candidates = [
            c
            for c in [(x, y) for y in range(room[1], room[3] + 1) for x in range(room[0], room[2] + 1)]
            if c not in door_adjacent
        ]
        if not candidates:
            raise GenerationError("room interior too small to host an object")
        pos = obj_rng.choice(candidates)
        objects.append(WorldObject(kind=kind, color=color, position=pos, home_position=pos))

    agent_rng = stage_stream(seed, "agent")
    room = rooms[agent_rng.randbelow(len(rooms))]
    occupied = {obj.position for obj in objects}
    spawn_candidates = [
        (x, y)
        for y in range(room[1], room[3] + 1)
        for x in range(room[0], room[2] + 1)
        if (x, y) not in occupied
    ]
    if not spawn_candidates:
        raise GenerationError("no free floor cell for the agent")
    position = agent_rng.choice(spawn_candidates)
    facing = FACINGS[agent_rng.randbelow(4)]

    return GridWorld(
        width=config.width,
        height=config.height,
        cells=rows,
        doors=doors,
        objects=objects,
        agent=AgentPose(position=position, facing=facing, carrying=None, home=(position, facing)),
        seed=seed,
        room_layout=rooms,
    )


def reset(world: GridWorld) -> GridWorld:
    """Restore the generated starting configuration in place (idempotent)."""
    for obj in world.objects:
        obj.position = obj.home_position
    for door in world.doors:
        door.state = door.home_state
    home_pos, home_facing = world.agent.home
    world.agent.position = home_pos
    world.agent.facing = home_facing
    world.agent.carrying = None
    return world


def facing_cell(world: GridWorld) -> tuple[int, int]:
    dx, dy = FACING_VECTORS[world.agent.facing]
    x, y = world.agent.position
    return (x + dx, y + dy)


def _can_enter(world: GridWorld, pos: tuple[int, int]) -> bool:
    cell = world.cell(pos)
    if cell == FLOOR:
        return world.object_at(pos) is None
    if cell == DOOR:
        door = world.door_at(pos)
        return door is not None and door.state == "open"
    return False


def step(world: GridWorld, action: int) -> tuple[GridWorld, StepEffect]:
    """Apply one action; invalid actions leave the world unchanged.

    The world object is mutated and returned together with the effect.
    """
    if not 0 <= action <= 5:
        return world, StepEffect(action=action, valid=False, event="unknown action")
    ahead = facing_cell(world)
    if action == TURN_LEFT:
        idx = FACINGS.index(world.agent.facing)
        world.agent.facing = FACINGS[(idx - 1) % 4]
        return world, StepEffect(action, True, "turned left")
    if action == TURN_RIGHT:
        idx = FACINGS.index(world.agent.facing)
        world.agent.facing = FACINGS[(idx + 1) % 4]
        return world, StepEffect(action, True, "turned right")
    if action == GO_FORWARD:
        if _can_enter(world, ahead):
            world.agent.position = ahead
            return world, StepEffect(action, True, "moved forward")
        return world, StepEffect(action, False, "blocked")
    if action == PICK_UP:
        obj = world.object_at(ahead)
        if world.agent.carrying is None and obj is not None:
            world.agent.carrying = world.objects.index(obj)
            obj.position = None
            return world, StepEffect(action, True, f"picked up the {obj.color} {obj.kind}")
        return world, StepEffect(action, False, "nothing to pick up")
    if action == PUT_DOWN:
        carried = world.carried_object
        if carried is not None and world.cell(ahead) == FLOOR and world.object_at(ahead) is None:
            carried.position = ahead
            world.agent.carrying = None
            return world, StepEffect(action, True, f"put down the {carried.color} {carried.kind}")
        return world, StepEffect(action, False, "cannot put down here")
    # TOGGLE_DOOR
    door = world.door_at(ahead)
    if door is not None:
        door.state = "open" if door.state == "closed" else "closed"
        return world, StepEffect(action, True, f"door is now {door.state}")
    return world, StepEffect(action, False, "no door to toggle")


def action_menus(world: GridWorld) -> tuple[dict[int, str], dict[int, str]]:
    """Partition all six actions into (valid, invalid) maps at fixed indices."""
    ahead = facing_cell(world)
    obj_ahead = world.object_at(ahead)
    door_ahead = world.door_at(ahead)
    validity = {
        TURN_LEFT: True,
        TURN_RIGHT: True,
        GO_FORWARD: _can_enter(world, ahead),
        PICK_UP: world.agent.carrying is None and obj_ahead is not None,
        PUT_DOWN: world.agent.carrying is not None
        and world.cell(ahead) == FLOOR
        and obj_ahead is None,
        TOGGLE_DOOR: door_ahead is not None,
    }
    valid = {i: ACTION_NAMES[i] for i in range(6) if validity[i]}
    invalid = {i: ACTION_NAMES[i] for i in range(6) if not validity[i]}
    return valid, invalid


def goal_satisfied(world: GridWorld, goal: Goal) -> bool:
    if not any(o.color == goal.color and o.kind == goal.kind for o in world.objects):
        raise ValueError(f"goal names an absent object: {goal.color} {goal.kind}")
    carried = world.carried_object
    return carried is not None and carried.color == goal.color and carried.kind == goal.kind


def to_json(world: GridWorld) -> str:
    """Canonical one-line JSON snapshot (stable key order)."""
    doc = {
        "version": SNAPSHOT_VERSION,
        "seed": world.seed,
        "width": world.width,
        "height": world.height,
        "cells": world.cells,
        "room_layout": [list(r) for r in world.room_layout],
        "doors": [
            {
                "color": d.color,
                "position": list(d.position),
                "state": d.state,
                "home_state": d.home_state,
            }
            for d in world.doors
        ],
        "objects": [
            {
                "kind": o.kind,
                "color": o.color,
                "position": list(o.position) if o.position is not None else None,
                "home_position": list(o.home_position),
            }
            for o in world.objects
        ],
        "agent": {
            "position": list(world.agent.position),
            "facing": world.agent.facing,
            "carrying": world.agent.carrying,
            "home_position": list(world.agent.home[0]),
            "home_facing": world.agent.home[1],
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def from_json(text: str) -> GridWorld:
    doc = json.loads(text)
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported world snapshot version: {doc.get('version')!r}")
    agent = doc["agent"]
    return GridWorld(
        width=doc["width"],
        height=doc["height"],
        cells=list(doc["cells"]),
        doors=[
            Door(
                color=d["color"],
                position=tuple(d["position"]),
                state=d["state"],
                home_state=d["home_state"],
            )
            for d in doc["doors"]
        ],
        objects=[
            WorldObject(
                kind=o["kind"],
                color=o["color"],
                position=tuple(o["position"]) if o["position"] is not None else None,
                home_position=tuple(o["home_position"]),
            )
            for o in doc["objects"]
        ],
        agent=AgentPose(
            position=tuple(agent["position"]),
            facing=agent["facing"],
            carrying=agent["carrying"],
            home=(tuple(agent["home_position"]), agent["home_facing"]),
        ),
        seed=doc["seed"],
        room_layout=tuple(tuple(r) for r in doc["room_layout"]),
    )


def copy_world(world: GridWorld) -> GridWorld:
    """Independent deep copy (cheap: the snapshot round-trips losslessly)."""
    return from_json(to_json(world))


_AGENT_GLYPHS = {"north": "^", "east": ">", "south": "v", "west": "<"}


def ascii_map(world: GridWorld) -> str:
    """Human debug map; never shown to the LM policy."""
    rows = [list(row) for row in world.cells]
    for door in world.doors:
        x, y = door.position
        rows[y][x] = "/" if door.state == "open" else "+"
    for obj in world.objects:
        if obj.position is not None:
            x, y = obj.position
            rows[y][x] = obj.kind[0].upper()
    ax, ay = world.agent.position
    rows[ay][ax] = _AGENT_GLYPHS[world.agent.facing]
    return "\n".join("".join(r) for r in rows)
