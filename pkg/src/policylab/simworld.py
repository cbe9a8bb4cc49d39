"""Deterministic discrete-tick mobile manipulation world.

Space is symbolic: the robot is either at a named station or in TRANSIT
while a motion skill runs. Skills follow a start/poll/cancel lifecycle
with scenario-defined tick durations; a cancelled motion leaves the
robot stranded in TRANSIT and a restarted one pays its full duration.

The episode runner drives any of the three policy engines one
evaluation per tick: perturbations, policy evaluation against the
tick-start snapshot, preemption, buffered skill starts, then skill
progress and battery drain. Every skill lifecycle event lands in the
trace, which is the substrate for cross-representation equivalence and
chattering detection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from . import bt, fsm, hfsm
from .core import ConditionLiteral, DocumentError, Status, TRANSIT, WorldError

DEFAULT_STATIONS = (
    "center", "fetch1", "fetch2", "fetch3", "fetch4", "fetch5",
    "delivery", "recharge", "dock",
)

#: skills that move the base; at most one may run at a time
MOTION_SKILLS = frozenset({"move_to", "safe_move_to", "recharge", "dock", "search"})

KNOWN_SKILLS = frozenset(
    {"move_to", "safe_move_to", "pick", "place", "tuck", "recharge", "dock", "search"}
)

#: default durations in ticks; search visits one viewpoint per fetch table
DEFAULT_DURATIONS = {
    "move_to": 5,
    "safe_move_to": 7,
    "pick": 3,
    "place": 3,
    "tuck": 3,
    "dock": 3,
    "recharge": 2,
    "search": 20,
}

PERTURBATION_EVENTS = ("set_item_location", "set_battery", "force_fail_next")


@dataclass
class WorldState:
    tick: int = 0
    robot_location: str = "center"
    battery: float = 100.0
    holding: Optional[str] = None
    arm_tucked: bool = True
    docked: bool = False
    item_locations: dict = field(default_factory=dict)
    found_markers: set = field(default_factory=set)
    stations: frozenset = frozenset(DEFAULT_STATIONS)


@dataclass
class SkillRuntime:
    name: str
    args: tuple
    state: str = "running"  # running | succeeded | failed | cancelled
    remaining: int = 0
    started_at: int = 0
    will_fail: bool = False
    reason: str = ""

    @property
    def key(self) -> tuple:
        return (self.name, self.args)


@dataclass(frozen=True)
class Perturbation:
    tick: int
    event: str
    args: tuple = ()


@dataclass
class Scenario:
    """Everything that makes an episode reproducible."""

    name: str = "scenario"
    stations: tuple = DEFAULT_STATIONS
    robot_location: str = "center"
    battery: float = 100.0
    holding: Optional[str] = None
    arm_tucked: bool = True
    docked: bool = False
    items: dict = field(default_factory=dict)
    markers: tuple = ()
    durations: dict = field(default_factory=dict)
    #: (skill name, args or None, nth invocation that fails)
    failures: tuple = ()
    drain_per_motion_tick: float = 2.0
    battery_threshold: float = 20.0
    perturbations: tuple = ()
    max_ticks: int = 200
    #: ticks a tree policy must hold SUCCESS before the episode ends
    success_hold_ticks: int = 5
    #: reproducibility bookkeeping; the failure model itself is fully scripted
    seed: int = 0

    def validate(self) -> None:
        if self.robot_location != TRANSIT and self.robot_location not in self.stations:
            raise DocumentError(f"robot_location {self.robot_location!r} not a station")
        if not 0 <= self.battery <= 100:
            raise DocumentError("battery must be in [0, 100]")
        for item, station in self.items.items():
            if station not in self.stations:
                raise DocumentError(f"item {item!r} placed at unknown station {station!r}")
        ticks = [p.tick for p in self.perturbations]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise DocumentError("perturbation ticks must be strictly increasing")
        for p in self.perturbations:
            if p.event not in PERTURBATION_EVENTS:
                raise DocumentError(f"unknown perturbation event {p.event!r}")

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "name": self.name,
            "stations": list(self.stations),
            "robot_location": self.robot_location,
            "battery": self.battery,
            "holding": self.holding,
            "arm_tucked": self.arm_tucked,
            "docked": self.docked,
            "items": dict(self.items),
            "markers": list(self.markers),
            "durations": dict(self.durations),
            "failures": [
                {"skill": name, "args": list(args) if args is not None else None,
                 "invocation": nth}
                for name, args, nth in self.failures
            ],
            "drain_per_motion_tick": self.drain_per_motion_tick,
            "battery_threshold": self.battery_threshold,
            "perturbations": [
                {"tick": p.tick, "event": p.event, "args": list(p.args)}
                for p in self.perturbations
            ],
            "max_ticks": self.max_ticks,
            "success_hold_ticks": self.success_hold_ticks,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            scenario = cls(
                name=doc.get("name", "scenario"),
                stations=tuple(doc.get("stations", DEFAULT_STATIONS)),
                robot_location=doc.get("robot_location", "center"),
                battery=doc.get("battery", 100.0),
                holding=doc.get("holding"),
                arm_tucked=doc.get("arm_tucked", True),
                docked=doc.get("docked", False),
                items=dict(doc.get("items", {})),
                markers=tuple(doc.get("markers", ())),
                durations=dict(doc.get("durations", {})),
                failures=tuple(
                    (entry["skill"],
                     tuple(entry["args"]) if entry.get("args") is not None else None,
                     entry.get("invocation", 1))
                    for entry in doc.get("failures", ())
                ),
                drain_per_motion_tick=doc.get("drain_per_motion_tick", 2.0),
                battery_threshold=doc.get("battery_threshold", 20.0),
                perturbations=tuple(
                    Perturbation(entry["tick"], entry["event"],
                                 tuple(entry.get("args", ())))
                    for entry in doc.get("perturbations", ())
                ),
                max_ticks=doc.get("max_ticks", 200),
                success_hold_ticks=doc.get("success_hold_ticks", 5),
                seed=doc.get("seed", 0),
            )
        except (KeyError, TypeError) as exc:
            raise DocumentError(f"malformed scenario: {exc}") from None
        scenario.validate()
        return scenario


def parse_scenario_document(data) -> Scenario:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DocumentError("top level: expected an object")
    return Scenario.from_dict(doc)


def serialize_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# trace


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        record = {"tick": self.tick, "kind": self.kind}
        record.update(self.payload)
        return json.dumps(record)


@dataclass
class Trace:
    events: list = field(default_factory=list)
    outcome: str = "TIMEOUT"
    ticks: int = 0
    timed_out: bool = False

    def to_jsonl(self) -> str:
        lines = [event.to_json() for event in self.events]
        lines.append(json.dumps(
            {"tick": self.ticks, "kind": "episode_end", "outcome": self.outcome,
             "timed_out": self.timed_out}
        ))
        return "\n".join(lines) + "\n"

    def skill_lifecycle(self) -> list[tuple]:
        """Ordered (skill, args, outcome) triples, independent of ticks."""
        out: list[tuple] = []
        open_slots: dict[tuple, int] = {}
        for event in self.events:
            if event.kind == "skill_start":
                key = (event.payload["skill"], tuple(event.payload["args"]))
                open_slots[key] = len(out)
                out.append((key[0], key[1], "unfinished"))
            elif event.kind in ("skill_end", "skill_preempt"):
                key = (event.payload["skill"], tuple(event.payload["args"]))
                slot = open_slots.pop(key, None)
                outcome = event.payload.get("outcome", "cancelled")
                if slot is not None:
                    out[slot] = (key[0], key[1], outcome)
        return out

    def skill_events(self, kind: str) -> list[TraceEvent]:
        return [event for event in self.events if event.kind == kind]


def traces_equivalent(first: Trace, second: Trace) -> bool:
    """Equality of ordered skill lifecycle projections, ignoring ticks."""
    return first.skill_lifecycle() == second.skill_lifecycle()


def detect_chattering(trace: Trace, repeats: int = 3) -> bool:
    """Spot two motion goals repeatedly displacing each other.

    True when some pair of distinct motion skills alternates in the
    start sequence while at least ``repeats`` preemptions of either one
    happen within the alternating run.
    """
    starts = []
    for event in trace.events:
        if event.kind == "skill_start" and event.payload["skill"] in MOTION_SKILLS:
            starts.append(((event.payload["skill"], tuple(event.payload["args"])),
                           event.tick))
    preempts = [
        ((event.payload["skill"], tuple(event.payload["args"])), event.tick)
        for event in trace.events
        if event.kind == "skill_preempt" and event.payload["skill"] in MOTION_SKILLS
    ]
    index = 0
    while index < len(starts):
        # grow the longest strict two-skill alternation starting here
        end = index + 1
        while end < len(starts):
            key, _ = starts[end]
            prev_key, _ = starts[end - 1]
            expected = starts[end - 2][0] if end - 2 >= index else None
            if key == prev_key or (expected is not None and key != expected):
                break
            end += 1
        run = starts[index:end]
        if len(run) >= 3:
            pair = {run[0][0], run[1][0]}
            low, high = run[0][1], run[-1][1]
            hits = sum(1 for key, tick in preempts
                       if key in pair and low <= tick <= high)
            if hits >= repeats:
                return True
        index = max(index + 1, end - 1)
    return False


# ---------------------------------------------------------------------------
# world


class World:
    """Mutable episode state implementing the engines' tick protocol."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.state = WorldState(
            robot_location=scenario.robot_location,
            battery=scenario.battery,
            holding=scenario.holding,
            arm_tucked=scenario.arm_tucked,
            docked=scenario.docked,
            item_locations=dict(scenario.items),
            stations=frozenset(scenario.stations),
        )
        self.runtimes: dict[tuple, SkillRuntime] = {}
        self.invocations: dict[str, int] = {}
        self.force_fail: set[str] = set()
        self.pending_starts: list[tuple] = []
        self.events: list[TraceEvent] = []
        self._pending = list(scenario.perturbations)

    # -- trace helpers -------------------------------------------------------

    def _log(self, kind: str, **payload) -> None:
        self.events.append(TraceEvent(self.state.tick, kind, payload))

    # -- condition evaluation --------------------------------------------------

    def evaluate(self, literal: ConditionLiteral) -> bool:
        state = self.state
        pred, args = literal.predicate, literal.args
        if pred == "robot_at":
            station = args[0]
            if station not in state.stations:
                raise WorldError(f"robot_at references unknown station {station!r}")
            return state.robot_location == station
        if pred == "in_hand":
            return state.holding == args[0]
        if pred == "object_at":
            item, station = args
            if station not in state.stations:
                raise WorldError(f"object_at references unknown station {station!r}")
            return state.item_locations.get(item) == station
        if pred == "battery_above":
            return state.battery > args[0]
        if pred == "arm_tucked":
            return state.arm_tucked
        if pred == "docked":
            return state.docked
        if pred == "found":
            return set(self.scenario.markers) <= state.found_markers
        raise WorldError(f"unknown predicate {pred!r}")

    # -- skill lifecycle -------------------------------------------------------

    def skill_running(self, name: str, args: tuple) -> bool:
        runtime = self.runtimes.get((name, tuple(args)))
        return runtime is not None and runtime.state == "running"

    def skill_result(self, name: str, args: tuple) -> Optional[Status]:
        runtime = self.runtimes.get((name, tuple(args)))
        if runtime is None or runtime.state == "running":
            return None
        return Status.SUCCESS if runtime.state == "succeeded" else Status.FAILURE

    def request_start(self, name: str, args: tuple) -> None:
        key = (name, tuple(args))
        if key not in self.pending_starts:
            self.pending_starts.append(key)

    def request_cancel(self, name: str, args: tuple) -> None:
        runtime = self.runtimes.get((name, tuple(args)))
        if runtime is not None and runtime.state == "running":
            runtime.state = "cancelled"
            self._log("skill_preempt", skill=name, args=list(args))

    def apply_starts(self) -> None:
        pending, self.pending_starts = self.pending_starts, []
        for name, args in pending:
            self.start_skill(name, args)

    def start_skill(self, name: str, args: tuple) -> SkillRuntime:
        args = tuple(args)
        if name not in KNOWN_SKILLS:
            raise WorldError(f"unknown skill {name!r}")
        existing = self.runtimes.get((name, args))
        if existing is not None and existing.state == "running":
            return existing  # goal already sent; polling continues
        if name in MOTION_SKILLS:
            for runtime in self.runtimes.values():
                if runtime.state == "running" and runtime.name in MOTION_SKILLS:
                    raise WorldError(
                        f"cannot start {name}: motion skill {runtime.name} still running"
                    )
        duration = self.scenario.durations.get(name, DEFAULT_DURATIONS[name])
        count = self.invocations.get(name, 0) + 1
        self.invocations[name] = count
        will_fail = name in self.force_fail
        self.force_fail.discard(name)
        for fail_name, fail_args, nth in self.scenario.failures:
            if fail_name == name and (fail_args is None or fail_args == args):
                if nth == count:
                    will_fail = True
        runtime = SkillRuntime(
            name=name, args=args, remaining=duration,
            started_at=self.state.tick, will_fail=will_fail,
        )
        self._log("skill_start", skill=name, args=list(args))
        guard_error = self._start_guard(name, args)
        if guard_error:
            runtime.state = "failed"
            runtime.reason = guard_error
            self._log("skill_end", skill=name, args=list(args),
                      outcome="failure", reason=guard_error)
        else:
            self._start_effects(name, args)
        self.runtimes[(name, args)] = runtime
        return runtime

    def _start_guard(self, name: str, args: tuple) -> str:
        state = self.state
        if name == "pick":
            item = args[0]
            if state.holding is not None:
                return f"already holding {state.holding}"
            if state.item_locations.get(item) != state.robot_location:
                return f"{item} is not at {state.robot_location}"
        elif name == "place":
            item = args[0]
            if state.holding != item:
                return f"not holding {item}"
            if state.robot_location == TRANSIT:
                return "cannot place while in transit"
        elif name in ("move_to", "safe_move_to"):
            if args[0] not in state.stations:
                raise WorldError(f"{name} targets unknown station {args[0]!r}")
        return ""

    def _start_effects(self, name: str, args: tuple) -> None:
        if name in MOTION_SKILLS:
            self.state.robot_location = TRANSIT
            self.state.docked = False

    def _completion_effects(self, name: str, args: tuple) -> None:
        state = self.state
        if name in ("move_to", "safe_move_to"):
            state.robot_location = args[0]
        elif name == "pick":
            item = args[0]
            state.holding = item
            state.item_locations.pop(item, None)
            state.arm_tucked = False
        elif name == "place":
            item = args[0]
            state.item_locations[item] = state.robot_location
            state.holding = None
        elif name == "tuck":
            state.arm_tucked = True
        elif name == "recharge":
            state.robot_location = "recharge"
            state.battery = 100.0
        elif name == "dock":
            state.robot_location = "dock"
            state.docked = True
        elif name == "search":
            state.found_markers = set(self.scenario.markers)
            viewpoints = sorted(s for s in state.stations if s.startswith("fetch"))
            state.robot_location = viewpoints[-1] if viewpoints else "center"

    # -- per-tick phases -------------------------------------------------------

    def begin_tick(self, tick: int) -> None:
        self.state.tick = tick
        while self._pending and self._pending[0].tick == tick:
            perturbation = self._pending.pop(0)
            self._apply_perturbation(perturbation)

    def _apply_perturbation(self, perturbation: Perturbation) -> None:
        event, args = perturbation.event, perturbation.args
        if event == "set_item_location":
            item, station = args
            if station not in self.state.stations:
                raise WorldError(f"perturbation moves {item} to unknown {station!r}")
            self.state.item_locations[item] = station
            if self.state.holding == item:
                self.state.holding = None
        elif event == "set_battery":
            self.state.battery = max(0.0, min(100.0, float(args[0])))
        elif event == "force_fail_next":
            self.force_fail.add(args[0])
        else:
            raise WorldError(f"unknown perturbation {event!r}")
        self._log("perturbation", event=event, args=list(args))

    def advance(self) -> None:
        """Progress running skills one tick, then drain and complete."""
        completed = []
        motion_ticked = False
        for runtime in self.runtimes.values():
            if runtime.state != "running":
                continue
            runtime.remaining -= 1
            if runtime.name in MOTION_SKILLS:
                motion_ticked = True
            if runtime.remaining <= 0:
                completed.append(runtime)
        if motion_ticked and self.scenario.drain_per_motion_tick:
            self.state.battery = max(
                0.0, self.state.battery - self.scenario.drain_per_motion_tick
            )
        for runtime in completed:
            if runtime.will_fail:
                runtime.state = "failed"
                runtime.reason = "injected failure"
                self._log("skill_end", skill=runtime.name, args=list(runtime.args),
                          outcome="failure", reason=runtime.reason)
            else:
                runtime.state = "succeeded"
                self._completion_effects(runtime.name, runtime.args)
                self._log("skill_end", skill=runtime.name, args=list(runtime.args),
                          outcome="success")


# ---------------------------------------------------------------------------
# episode runner

AnyPolicy = Union[bt.PolicyTree, fsm.StateMachine, hfsm.HfsmContainer]


class _TreeEngine:
    terminated: Optional[Status] = None

    def __init__(self, tree: bt.PolicyTree):
        self.tree = tree
        tree.reset_runtime()

    def evaluate(self, world: World) -> Status:
        return bt.tick(self.tree, world)

    def preempt(self, world: World) -> None:
        bt.halt_unvisited(self.tree, world)


class _MachineEngine:
    def __init__(self, machine: fsm.StateMachine):
        self.machine = machine
        machine.reset_runtime()

    def evaluate(self, world: World) -> Status:
        # transition exits cancel their skills inside step()
        return fsm.step(self.machine, world)

    def preempt(self, world: World) -> None:
        pass

    @property
    def terminated(self) -> Optional[Status]:
        return self.machine.terminated


class _NestedEngine:
    terminated: Optional[Status] = None

    def __init__(self, machine: hfsm.HfsmContainer):
        self.machine = machine
        machine.reset_runtime()

    def evaluate(self, world: World) -> Status:
        return hfsm.step(self.machine, world)

    def preempt(self, world: World) -> None:
        hfsm.halt_unvisited(self.machine, world)


def _engine_for(policy: AnyPolicy):
    if isinstance(policy, bt.PolicyTree):
        return _TreeEngine(policy)
    if isinstance(policy, fsm.StateMachine):
        return _MachineEngine(policy)
    if isinstance(policy, hfsm.HfsmContainer):
        return _NestedEngine(policy)
    raise WorldError(f"cannot run a {type(policy).__name__}")


def run_episode(policy: AnyPolicy, scenario: Scenario) -> Trace:
    """Drive one policy through one scenario and collect the trace.

    Machines end the episode at their outcome. Trees keep being ticked
    after SUCCESS and end once the goal has held for
    ``scenario.success_hold_ticks`` consecutive evaluations.
    """
    world = World(scenario)
    engine = _engine_for(policy)
    last_status: Optional[Status] = None
    success_streak = 0
    outcome, timed_out = "TIMEOUT", True
    ticks = 0

    for tick_index in range(scenario.max_ticks):
        ticks = tick_index + 1
        world.begin_tick(tick_index)
        status = engine.evaluate(world)
        engine.preempt(world)
        world.apply_starts()
        world.advance()
        if status is not last_status:
            world._log("policy_status", status=status.value)
            last_status = status

        if engine.terminated is not None:
            outcome, timed_out = engine.terminated.value, False
            break
        if status is Status.SUCCESS:
            success_streak += 1
            if success_streak >= scenario.success_hold_ticks:
                outcome, timed_out = "SUCCESS", False
                break
        else:
            success_streak = 0

    return Trace(events=world.events, outcome=outcome, ticks=ticks,
                 timed_out=timed_out)
