"""Simulated two-arm effector world: discrete states, command scripts,
precondition checking.

No kinematics: the decoding layer exercises correct command sequencing,
which a symbolic world captures exactly. Rejected commands are values, not
faults, and leave the world unchanged.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Callable

from .scheduler import VIBRATOR_IDS, check_vibrator

POSES = ("home", "at_pickup", "at_dropoff")
HOLDABLE = ("nothing", "cup", "straw", "ball")


@dataclass(frozen=True)
class ArmState:
    pose: str = "home"
    holding: str = "nothing"


@dataclass(frozen=True)
class WorldState:
    arm1: ArmState = ArmState()
    arm2: ArmState = ArmState()
    cup: str = "on_table"          # on_table | held
    cup_has_straw: bool = False
    straw: str = "at_rest"         # at_rest | in_cup
    ball: str = "at_pickup"        # at_pickup | held | delivered
    delivered: int = 0

    def arm(self, key: str) -> ArmState:
        if key == "arm1":
            return self.arm1
        if key == "arm2":
            return self.arm2
        raise KeyError(key)

    def with_arm(self, key: str, arm: ArmState) -> "WorldState":
        if key == "arm1":
            return replace(self, arm1=arm)
        if key == "arm2":
            return replace(self, arm2=arm)
        raise KeyError(key)


@dataclass(frozen=True)
class Action:
    name: str
    arm: str
    precondition: Callable[[WorldState, str], str | None]  # None = ok, else reason
    effect: Callable[[WorldState, str], WorldState]
    description: str = ""


@dataclass(frozen=True)
class TaskScript:
    name: str
    command_map: dict  # VibratorId -> Action | None (None = unassigned)
    goal: Callable[[WorldState], bool]
    goal_description: str
    initial_world: WorldState = WorldState()

    def __post_init__(self):
        if sorted(self.command_map) != list(VIBRATOR_IDS):
            raise ValueError("command_map must cover every vibrator id")


@dataclass(frozen=True)
class CommandResult:
    world: WorldState
    command: int
    accepted: bool
    action: str | None = None
    reason: str | None = None


def apply_command(world: WorldState, script: TaskScript, command: int) -> CommandResult:
    check_vibrator(command)
    action = script.command_map[command]
    if action is None:
        return CommandResult(world=world, command=command, accepted=False,
                             reason="command is unassigned in this script")
    why_not = action.precondition(world, action.arm)
    if why_not is not None:
        return CommandResult(world=world, command=command, accepted=False,
                             action=action.name, reason=why_not)
    return CommandResult(world=action.effect(world, action.arm), command=command,
                         accepted=True, action=action.name)


@dataclass(frozen=True)
class SequenceResult:
    accepted_prefix_len: int
    violations: tuple[tuple[int, int, str], ...]  # (index, command, reason)
    goal_reached: bool
    final_world: WorldState
    log: tuple[CommandResult, ...]


def validate_sequence(script: TaskScript, commands) -> SequenceResult:
    """Replay commands through apply_command; rejections skip, replay continues."""
    world = script.initial_world
    violations = []
    log = []
    prefix = 0
    prefix_open = True
    for i, cmd in enumerate(commands):
        result = apply_command(world, script, cmd)
        log.append(result)
        if result.accepted:
            world = result.world
            if prefix_open:
                prefix += 1
        else:
            prefix_open = False
            violations.append((i, cmd, result.reason))
    return SequenceResult(accepted_prefix_len=prefix, violations=tuple(violations),
                          goal_reached=script.goal(world), final_world=world,
                          log=tuple(log))


def legal_commands(script: TaskScript, world: WorldState) -> tuple[int, ...]:
    """Commands whose preconditions hold in the given world."""
    out = []
    for cmd in VIBRATOR_IDS:
        action = script.command_map[cmd]
        if action is not None and action.precondition(world, action.arm) is None:
            out.append(cmd)
    return tuple(out)


def check_invariants(world: WorldState) -> list[str]:
    """Object-holding consistency rules; violations as human-readable strings."""
    problems = []
    for obj in ("cup", "straw", "ball"):
        holders = [k for k in ("arm1", "arm2") if world.arm(k).holding == obj]
        if len(holders) > 1:
            problems.append(f"{obj} held by more than one arm")
    cup_held = any(world.arm(k).holding == "cup" for k in ("arm1", "arm2"))
    if cup_held != (world.cup == "held"):
        problems.append("cup pose inconsistent with holder")
    ball_held = any(world.arm(k).holding == "ball" for k in ("arm1", "arm2"))
    if ball_held and world.ball != "held":
        problems.append("ball pose inconsistent with holder")
    if world.cup_has_straw and world.straw != "in_cup":
        problems.append("cup_has_straw requires the straw to be in the cup")
    if world.delivered < 0:
        problems.append("delivered count negative")
    return problems


def bfs_worlds(script: TaskScript, max_states: int = 10_000,
               stop_expanding: Callable[[WorldState], bool] | None = None):
    """Breadth-first enumeration of reachable worlds under the script."""
    seen = {script.initial_world}
    frontier = deque([script.initial_world])
    while frontier and len(seen) <= max_states:
        world = frontier.popleft()
        if stop_expanding is not None and stop_expanding(world):
            continue
        for cmd in VIBRATOR_IDS:
            result = apply_command(world, script, cmd)
            if result.accepted and result.world not in seen:
                seen.add(result.world)
                frontier.append(result.world)
    return seen


def find_goal_sequence(script: TaskScript, max_states: int = 10_000):
    """Shortest accepted command sequence reaching the goal, or None."""
    start = script.initial_world
    if script.goal(start):
        return ()
    seen = {start}
    frontier = deque([(start, ())])
    while frontier and len(seen) <= max_states:
        world, path = frontier.popleft()
        for cmd in VIBRATOR_IDS:
            result = apply_command(world, script, cmd)
            if not result.accepted or result.world in seen:
                continue
            new_path = path + (cmd,)
            if script.goal(result.world):
                return new_path
            seen.add(result.world)
            frontier.append((result.world, new_path))
    return None


# --- builtin scripts -------------------------------------------------------

def _pre_all(*checks):
    def pre(world: WorldState, arm_key: str) -> str | None:
        for check in checks:
            reason = check(world, arm_key)
            if reason is not None:
                return reason
        return None
    return pre


def _arm_home(world, arm_key):
    if world.arm(arm_key).pose != "home":
        return f"{arm_key} is not at home"
    return None


def _arm_at_pickup(world, arm_key):
    if world.arm(arm_key).pose != "at_pickup":
        return f"{arm_key} is not at the pickup point"
    return None


def _arm_empty(world, arm_key):
    if world.arm(arm_key).holding != "nothing":
        return f"{arm_key} is already holding something"
    return None


def _ball_at_pickup(world, arm_key):
    if world.ball != "at_pickup":
        return "no ball at the pickup point"
    return None


def _straw_in_cup_script() -> TaskScript:
    """Pick up the cup, have the other arm drop the straw in, put the cup down.

    Only three commands are assigned; the fourth vibrator still stimulates
    (the oddball ratio needs it) but maps to no action.
    """

    def pre_pick_cup(world, arm_key):
        if world.cup != "on_table":
            return "cup is not on the table"
        return _arm_empty(world, arm_key)

    def eff_pick_cup(world, arm_key):
        return replace(world.with_arm(arm_key, ArmState("at_pickup", "cup")), cup="held")

    def pre_place_straw(world, arm_key):
        if world.straw != "at_rest":
            return "straw already placed"
        if world.cup != "held":
            return "cup must be held steady first"
        return _arm_empty(world, arm_key)

    def eff_place_straw(world, arm_key):
        return replace(world, straw="in_cup", cup_has_straw=True)

    def pre_put_down(world, arm_key):
        if world.arm(arm_key).holding != "cup":
            return f"{arm_key} is not holding the cup"
        return None

    def eff_put_down(world, arm_key):
        return replace(world.with_arm(arm_key, ArmState("home", "nothing")), cup="on_table")

    return TaskScript(
        name="straw_in_cup",
        command_map={
            1: Action("pick_up_cup", "arm1", pre_pick_cup, eff_pick_cup,
                      "arm 1 lifts the cup from the table"),
            2: Action("place_straw", "arm2", pre_place_straw, eff_place_straw,
                      "arm 2 drops the straw into the held cup"),
            3: Action("put_down_cup", "arm1", pre_put_down, eff_put_down,
                      "arm 1 sets the cup back down"),
            4: None,
        },
        goal=lambda w: w.cup == "on_table" and w.cup_has_straw,
        goal_description="cup back on the table with the straw in it",
    )


def _ball_grasp_script() -> TaskScript:
    """Either arm may move to the pickup point and grasp the ball to return home."""

    def eff_move(world, arm_key):
        return world.with_arm(arm_key, ArmState("at_pickup", world.arm(arm_key).holding))

    def eff_grasp(world, arm_key):
        return replace(world.with_arm(arm_key, ArmState("home", "ball")), ball="held")

    pre_move = _pre_all(_arm_home, _arm_empty)
    pre_grasp = _pre_all(_arm_at_pickup, _arm_empty, _ball_at_pickup)
    return TaskScript(
        name="ball_grasp",
        command_map={
            1: Action("move_to_pickup", "arm1", pre_move, eff_move,
                      "arm 1 moves to the pickup point"),
            2: Action("grasp_and_return", "arm1", pre_grasp, eff_grasp,
                      "arm 1 grasps the ball and returns home"),
            3: Action("move_to_pickup", "arm2", pre_move, eff_move,
                      "arm 2 moves to the pickup point"),
            4: Action("grasp_and_return", "arm2", pre_grasp, eff_grasp,
                      "arm 2 grasps the ball and returns home"),
        },
        goal=lambda w: any(w.arm(k).pose == "home" and w.arm(k).holding == "ball"
                           for k in ("arm1", "arm2")),
        goal_description="an arm back home holding the ball",
    )


def _dual_arm_cycle_script() -> TaskScript:
    """Arm 1 fetches balls, hands them to arm 2, arm 2 delivers; repeatable."""

    def eff_move(world, arm_key):
        return world.with_arm(arm_key, ArmState("at_pickup", "nothing"))

    def eff_grasp(world, arm_key):
        return replace(world.with_arm(arm_key, ArmState("home", "ball")), ball="held")

    def pre_handoff(world, arm_key):
        if world.arm1.holding != "ball" or world.arm1.pose != "home":
            return "arm1 is not home with a ball to hand over"
        if world.arm2.holding != "nothing" or world.arm2.pose != "home":
            return "arm2 is not home and free"
        return None

    def eff_handoff(world, arm_key):
        return replace(world, arm1=ArmState("home", "nothing"), arm2=ArmState("home", "ball"))

    def pre_deliver(world, arm_key):
        if world.arm2.holding != "ball":
            return "arm2 has no ball to deliver"
        return None

    def eff_deliver(world, arm_key):
        # a fresh ball appears at the pickup point so the cycle can repeat
        return replace(world, arm2=ArmState("home", "nothing"), ball="at_pickup",
                       delivered=world.delivered + 1)

    return TaskScript(
        name="dual_arm_cycle",
        command_map={
            1: Action("move_to_pickup", "arm1", _pre_all(_arm_home, _arm_empty, _ball_at_pickup),
                      eff_move, "arm 1 moves to the pickup point"),
            2: Action("grasp_and_return", "arm1", _pre_all(_arm_at_pickup, _arm_empty, _ball_at_pickup),
                      eff_grasp, "arm 1 grasps the ball and returns home"),
            3: Action("handoff", "arm2", pre_handoff, eff_handoff,
                      "arm 2 takes the ball from arm 1"),
            4: Action("deliver", "arm2", pre_deliver, eff_deliver,
                      "arm 2 delivers the ball and resets"),
        },
        goal=lambda w: w.delivered >= 1 and w.arm1.holding == "nothing"
        and w.arm2.holding == "nothing",
        goal_description="at least one ball delivered, arms free",
    )


def cycle_goal(n_cycles: int) -> Callable[[WorldState], bool]:
    """Goal predicate for dual_arm_cycle parameterized by delivery count."""
    def goal(world: WorldState) -> bool:
        return (world.delivered >= n_cycles
                and world.arm1 == ArmState("home", "nothing")
                and world.arm2 == ArmState("home", "nothing"))
    return goal


def builtin_scripts() -> dict[str, TaskScript]:
    scripts = (_ball_grasp_script(), _straw_in_cup_script(), _dual_arm_cycle_script())
    return {s.name: s for s in scripts}
