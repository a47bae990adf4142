"""Ground-truth planning and scripted backends for fully offline testing.

bfs_plan searches the exact (position, facing, door-states) space, so its
plans are shortest by construction. The scripted backends emit replies in
the same output formats the live model is prompted for; every scripted
reply must parse through the lm module's parsers, which keeps the formats
honest. No test in this package ever needs a network.
"""

from __future__ import annotations

import json
import re
from collections import deque
from typing import Callable, Optional

from . import prompts
from .lm import LMRequest
from .textview import canonical_goal, in_window, offset_from, parse_goal, render_goal, segment_clear
from .world import (
    ACTION_NAMES,
    FACINGS,
    FACING_VECTORS,
    FLOOR,
    GO_FORWARD,
    KINDS,
    PICK_UP,
    TOGGLE_DOOR,
    TURN_LEFT,
    TURN_RIGHT,
    WALL,
    Goal,
    GridWorld,
    copy_world,
    reset,
    step,
)


class PlanningError(Exception):
    """No action sequence reaches the goal; on generated worlds this is a bug."""


class ScriptExhaustedError(Exception):
    """A strict scripted backend ran out of canned responses."""


def _door_table(world: GridWorld):
    mask = 0
    index = {}
    for i, door in enumerate(world.doors):
        index[door.position] = i
        if door.state == "open":
            mask |= 1 << i
    return mask, index


def _search(
    world: GridWorld,
    goal_test: Callable[[tuple[int, int], str, int], bool],
) -> list[int]:
    """Breadth-first search over (position, facing, door-state) states.

    Returns the shortest action prefix reaching a state where goal_test
    holds. Objects are treated as static obstacles.
    """
    mask0, door_index = _door_table(world)
    obstacles = {o.position for o in world.objects if o.position is not None}

    def can_enter(pos, mask):
        if pos in door_index:
            return bool(mask & (1 << door_index[pos]))
        return world.cell(pos) == FLOOR and pos not in obstacles

    start = (world.agent.position, world.agent.facing, mask0)
    if goal_test(*start):
        return []
    queue = deque([(start, [])])
    visited = {start}
    while queue:
        (pos, facing, mask), path = queue.popleft()
        facing_idx = FACINGS.index(facing)
        fx, fy = FACING_VECTORS[facing]
        ahead = (pos[0] + fx, pos[1] + fy)
        successors = [
            (TURN_LEFT, (pos, FACINGS[(facing_idx - 1) % 4], mask)),
            (TURN_RIGHT, (pos, FACINGS[(facing_idx + 1) % 4], mask)),
        ]
        if can_enter(ahead, mask):
            successors.append((GO_FORWARD, (ahead, facing, mask)))
        if ahead in door_index:
            successors.append((TOGGLE_DOOR, (pos, facing, mask ^ (1 << door_index[ahead]))))
        for action, state in successors:
            if state in visited:
                continue
            new_path = path + [action]
            if goal_test(*state):
                return new_path
            visited.add(state)
            queue.append((state, new_path))
    raise PlanningError("goal state is unreachable")


def bfs_plan(world: GridWorld, goal: Goal) -> list[int]:
    """Shortest action sequence ending with a successful pick up of the goal."""
    target = None
    for obj in world.objects:
        if obj.color == goal.color and obj.kind == goal.kind:
            target = obj.position
            break
    if target is None:
        raise ValueError(f"goal names an absent object: {goal.color} {goal.kind}")

    def facing_target(pos, facing, mask):
        fx, fy = FACING_VECTORS[facing]
        return (pos[0] + fx, pos[1] + fy) == target

    try:
        path = _search(world, facing_target)
    except PlanningError:
        raise PlanningError(
            f"no route reaches the {goal.color} {goal.kind}; "
            "generated worlds must never produce this"
        ) from None
    return path + [PICK_UP]


def _sight_test(world: GridWorld, target: tuple[int, int]):
    _, door_index = _door_table(world)

    def test(pos, facing, mask):
        ahead, lateral = offset_from(pos, facing, target)
        if not in_window(ahead, lateral):
            return False

        def blocked(cell):
            if cell in door_index:
                return not mask & (1 << door_index[cell])
            return world.cell(cell) == WALL

        return segment_clear(pos, target, blocked)

    return test


def sighting_tour(world: GridWorld) -> list[int]:
    """Action sequence after which every object has been in view at least once.

    Greedy: repeatedly plan the shortest route that brings the nearest
    still-unseen object into the visibility window, crediting everything
    sighted along the way. The tour never picks anything up.
    """
    scratch = reset(copy_world(world))
    actions: list[int] = []
    seen: set[int] = set()

    def note_sightings():
        for i, obj in enumerate(scratch.objects):
            if i in seen or obj.position is None:
                continue
            if _sight_test(scratch, obj.position)(
                scratch.agent.position, scratch.agent.facing, _door_table(scratch)[0]
            ):
                seen.add(i)

    note_sightings()
    while len(seen) < len(scratch.objects):
        legs = []
        for i, obj in enumerate(scratch.objects):
            if i in seen:
                continue
            leg = _search(scratch, _sight_test(scratch, obj.position))
            legs.append((len(leg), i, leg))
        legs.sort(key=lambda t: (t[0], t[1]))
        for action in legs[0][2]:
            step(scratch, action)
            actions.append(action)
            note_sightings()
        seen.add(legs[0][1])
    return actions


# ---------------------------------------------------------------------------
# Scripted backends
# ---------------------------------------------------------------------------

_ENTITY_RE = re.compile(
    r"\b(red|green|blue|purple|yellow|grey) (key|ball|box|star|hexagon|square|door)\b"
)
_ROUTE_RE = re.compile(r"follow this route: ([a-z ,]+)\.")
_ACTION_LINE_RE = re.compile(r"^Action: \d+ \(([a-z ]+)\) \[", re.MULTILINE)

AGENT_PROMPT_PREFIX = "You are an agent in a 2D gridworld."


def classify_request(request: LMRequest) -> str:
    """Which call a request represents, judged from its system prompt."""
    sp = request.system_prompt
    if sp.startswith(AGENT_PROMPT_PREFIX):
        return "agent"
    for name, prompt in (
        ("summarize", prompts.ECHO_SUMMARIZE),
        ("identify_goals", prompts.ECHO_IDENTIFY_GOALS),
        ("infer_traj", prompts.ECHO_INFER_TRAJ),
        ("reflect", prompts.REFLEXION),
        ("awm", prompts.AWM),
    ):
        if sp == prompt:
            return name
    return "unknown"


def extract_mentions(text: str) -> list[tuple[str, str]]:
    """Ordered, deduplicated (color, kind-or-door) mentions in rendered text."""
    out = []
    for match in _ENTITY_RE.finditer(text):
        pair = (match.group(1), match.group(2))
        if pair not in out:
            out.append(pair)
    return out


def route_text(plan: list[int], goal: Goal) -> str:
    names = ", ".join(ACTION_NAMES[a] for a in plan)
    return (
        f"Step 1: From the starting position, follow this route: {names}. "
        f"Step 2: Pick up the {goal.color} {goal.kind}."
    )


def parse_route(workflow: str) -> Optional[list[int]]:
    match = _ROUTE_RE.search(workflow)
    if match is None:
        return None
    actions = []
    for name in match.group(1).split(", "):
        if name not in ACTION_NAMES:
            return None
        actions.append(ACTION_NAMES.index(name))
    return actions


def _last_user_content(request: LMRequest) -> str:
    for message in reversed(request.messages):
        if message["role"] == "user":
            return message["content"]
    return ""


def _goal_line(text: str) -> str:
    for line in text.splitlines():
        if line.startswith("Goal: "):
            return line[len("Goal: ") :]
    return ""


def _known_workflows(system_prompt: str) -> dict[str, str]:
    lines = system_prompt.splitlines()
    try:
        start = lines.index("Known workflows:") + 1
    except ValueError:
        return {}
    out = {}
    for line in lines[start:]:
        if ": " not in line:
            break
        goal, workflow = line.split(": ", 1)
        out[canonical_goal(goal)] = workflow
    return out


def _steps_taken(request: LMRequest) -> int:
    return sum(1 for m in request.messages if m["role"] == "assistant")


def _choice(thought: str, action: int) -> str:
    return json.dumps({"thought": thought, "choice": action})


class ScriptedBackend:
    """Deterministic backend driven by a canned list or a rule function.

    Every request is recorded so tests can assert exact call counts. In
    strict mode an exhausted script raises instead of repeating the last
    response.
    """

    deterministic = True
    live = False

    def __init__(
        self,
        script: Optional[list[str]] = None,
        rules: Optional[Callable[[LMRequest], str]] = None,
        strict: bool = True,
    ):
        if (script is None) == (rules is None):
            raise ValueError("provide exactly one of script or rules")
        self.script = list(script) if script is not None else None
        self.rules = rules
        self.strict = strict
        self.requests: list[LMRequest] = []

    @property
    def calls(self) -> int:
        return len(self.requests)

    def complete(self, request: LMRequest) -> str:
        self.requests.append(request)
        if self.rules is not None:
            return self.rules(request)
        index = len(self.requests) - 1
        if index >= len(self.script):
            if self.strict:
                raise ScriptExhaustedError(
                    f"script exhausted after {len(self.script)} responses"
                )
            index = len(self.script) - 1
        return self.script[index]


class _RuleBackend(ScriptedBackend):
    """Scripted backend with per-call-type handler methods."""

    def __init__(self):
        super().__init__(rules=self._respond)

    def _respond(self, request: LMRequest) -> str:
        kind = classify_request(request)
        handler = getattr(self, f"_on_{kind}", None)
        if handler is None:
            raise ScriptExhaustedError(f"no scripted handler for {kind!r} request")
        return handler(request)

    # Abstaining defaults; subclasses override what they need.
    def _on_summarize(self, request: LMRequest) -> str:
        return json.dumps({"0": "Agent spawned in the grid and took no useful action."})

    def _on_identify_goals(self, request: LMRequest) -> str:
        return json.dumps({"possible_goals": []})

    def _on_infer_traj(self, request: LMRequest) -> str:
        return json.dumps({"goal": _goal_line(_last_user_content(request)), "workflow": ""})

    def _on_reflect(self, request: LMRequest) -> str:
        return json.dumps({"reflection": "Plan routes before moving instead of acting blindly."})

    def _on_awm(self, request: LMRequest) -> str:
        transcript = _last_user_content(request)
        goal = _goal_line(transcript)
        if "Outcome: SUCCESS" not in transcript:
            return json.dumps({"goal": goal, "workflow": ""})
        names = _ACTION_LINE_RE.findall(transcript)
        route = ", ".join(names)
        workflow = (
            f"Step 1: From the starting position, follow this route: {route}. "
            f"Step 2: {goal}."
        )
        return json.dumps({"goal": goal, "workflow": workflow})


class TurnLeftBackend(_RuleBackend):
    """Agent that circles in place forever; offline calls abstain."""

    def _on_agent(self, request: LMRequest) -> str:
        return _choice("Circling in place.", TURN_LEFT)


class OracleBackend(_RuleBackend):
    """Perfect agent: replays the BFS-shortest plan for the episode goal."""

    def __init__(self, world: GridWorld):
        super().__init__()
        self.world = reset(copy_world(world))
        self._plans: dict[str, list[int]] = {}

    def plan_for(self, goal: Goal) -> list[int]:
        key = canonical_goal(render_goal(goal))
        if key not in self._plans:
            self._plans[key] = bfs_plan(self.world, goal)
        return self._plans[key]

    def _on_agent(self, request: LMRequest) -> str:
        goal = parse_goal(_goal_line(_last_user_content(request)))
        plan = self.plan_for(goal)
        index = _steps_taken(request)
        if index < len(plan):
            return _choice("Executing the planned route.", plan[index])
        return _choice("Plan exhausted; holding position.", TURN_LEFT)


class DemoBackend(_RuleBackend):
    """World-aware scripted stack for offline end-to-end demonstrations.

    Acting: follows a workflow from the "Known workflows:" section of the
    system prompt when one matches the episode goal; otherwise walks a
    sighting tour that views every object but never picks anything up, so
    episodes without applicable memory always fail. Offline reasoning:
    summaries report the entities actually mentioned in the transcript,
    goal proposals cover exactly the portable ones, and workflows come from
    BFS plans on the reset world.
    """

    def __init__(self, world: GridWorld):
        super().__init__()
        self.world = reset(copy_world(world))
        self.tour = sighting_tour(self.world)
        self._plans: dict[str, list[int]] = {}

    def _plan(self, goal: Goal) -> list[int]:
        key = canonical_goal(render_goal(goal))
        if key not in self._plans:
            self._plans[key] = bfs_plan(self.world, goal)
        return self._plans[key]

    def _on_agent(self, request: LMRequest) -> str:
        index = _steps_taken(request)
        goal_text = _goal_line(_last_user_content(request))
        workflows = _known_workflows(request.system_prompt)
        workflow = workflows.get(canonical_goal(goal_text))
        if workflow is not None:
            route = parse_route(workflow)
            if route is not None:
                if index < len(route):
                    return _choice(
                        "Following the known workflow for this goal.", route[index]
                    )
                return _choice("Workflow exhausted; holding position.", TURN_LEFT)
        if index < len(self.tour):
            return _choice("Exploring the rooms to map out the objects.", self.tour[index])
        return _choice("Tour complete; circling.", TURN_LEFT)

    def _on_summarize(self, request: LMRequest) -> str:
        transcript = _last_user_content(request)
        mentions = extract_mentions(transcript)
        summary = {"0": "Agent spawned in its starting room and began exploring."}
        if mentions:
            listed = ", ".join(f"{color} {kind}" for color, kind in mentions)
            summary["1"] = f"Agent explored the rooms and observed: {listed}."
        else:
            summary["1"] = "Agent explored but observed nothing of note."
        outcome = (
            "Agent achieved its goal."
            if "Outcome: SUCCESS" in transcript
            else "Agent did not achieve its goal."
        )
        summary["2"] = outcome
        return json.dumps(summary)

    def _on_identify_goals(self, request: LMRequest) -> str:
        mentions = extract_mentions(_last_user_content(request))
        goals = [
            f"Pick up the {color} {kind}" for color, kind in mentions if kind in KINDS
        ]
        return json.dumps({"possible_goals": goals})

    def _on_infer_traj(self, request: LMRequest) -> str:
        goal_text = _goal_line(_last_user_content(request))
        try:
            goal = parse_goal(goal_text)
            plan = self._plan(goal)
        except (ValueError, PlanningError):
            return json.dumps({"goal": goal_text, "workflow": ""})
        return json.dumps({"goal": goal_text, "workflow": route_text(plan, goal)})


def oracle_policy(world: GridWorld, goal: Goal, horizon: int = 64):
    """Policy that replays the BFS plan through the normal acting pipeline."""
    from .policy import ReactPolicy

    backend = OracleBackend(world)
    backend.plan_for(goal)  # surface infeasibility eagerly
    return ReactPolicy(backend, horizon=horizon)


def scripted_echo_backend(world: GridWorld) -> DemoBackend:
    return DemoBackend(world)
