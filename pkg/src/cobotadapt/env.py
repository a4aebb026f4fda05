"""Tick-based conveyor-belt sorting task shared by a human and a robot.

One cube at a time travels on the belt. The human sorts it with a
multi-tick grasp-and-place, or the robot takes it over with a shorter
motion. A cube that waits too long falls off the belt and counts as a
failure. Every tick yields the 9-flag observation vector and a list of
trigger events for the robot's decision loop.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .apomdp import FLAG_INDEX, N_FLAGS, RewardSpec, RobotAction
from .errors import ConfigurationError, ContractViolation
from .human import HumanAction, HumanType, Level

COLORS = ("red", "green", "blue", "yellow")

# success probability of a human placement at zero experience, by (task type, expertise)
P_BASE = {
    1: {Level.High: 0.90, Level.Low: 0.75},
    2: {Level.High: 0.80, Level.Low: 0.60},
    3: {Level.High: 0.60, Level.Low: 0.40},
    4: {Level.High: 0.55, Level.Low: 0.35},
    5: {Level.High: 0.50, Level.Low: 0.30},
}
LEARNING_GAIN = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0, 5: 0.35}
LEARNING_SCALE = 40.0
# folded into P_BASE, kept as a hook for custom difficulty tables
STROOP_PENALTY = {1: 0.0, 2: 0.0, 3: 0.0, 4: 0.0, 5: 0.0}


def _default_rules(task_type: int) -> dict:
    containers = ("left", "middle", "right")
    if task_type == 1:
        return {c: "left" if c in ("red", "yellow") else "right" for c in COLORS}
    return {c: containers[(i + task_type) % 3] for i, c in enumerate(COLORS)}


@dataclass(frozen=True)
class TaskConfig:
    task_type: int = 4
    num_subtasks: int = 10
    belt_timeout_ticks: int = 12
    grasp_ticks: int = 4
    robot_ticks: int = 2
    warn_ticks: int = 3
    robot_success: float = 0.95
    success_threshold: float = 0.5
    terminal_bonus: bool = False
    rule_table: dict | None = None
    stroop: bool | None = None
    display_only: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task_type not in P_BASE:
            raise ConfigurationError("task_type must be 1..5")
        if self.num_subtasks < 1:
            raise ConfigurationError("num_subtasks must be >= 1")
        for name in ("belt_timeout_ticks", "grasp_ticks", "robot_ticks", "warn_ticks"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0.0 <= self.robot_success <= 1.0:
            raise ConfigurationError("robot_success must lie in [0, 1]")
        rules = _default_rules(self.task_type) if self.rule_table is None else dict(self.rule_table)
        missing = set(COLORS) - set(rules)
        if missing:
            raise ConfigurationError(f"rule table has no container for {sorted(missing)}")
        object.__setattr__(self, "rule_table", rules)
        if self.stroop is None:
            object.__setattr__(self, "stroop", self.task_type >= 4)

    @classmethod
    def from_dict(cls, d: dict) -> TaskConfig:
        keys = {
            "taskType": "task_type",
            "numSubtasks": "num_subtasks",
            "beltTimeoutTicks": "belt_timeout_ticks",
            "graspTicks": "grasp_ticks",
            "robotTicks": "robot_ticks",
            "warnTicks": "warn_ticks",
            "robotSuccess": "robot_success",
            "successThreshold": "success_threshold",
            "terminalBonus": "terminal_bonus",
            "ruleTable": "rule_table",
            "stroop": "stroop",
        }
        kwargs = {}
        for k, v in d.items():
            name = keys.get(k, k)
            if name not in cls.__dataclass_fields__:
                raise ConfigurationError(f"unknown task setting {k!r}")
            kwargs[name] = v
        return cls(**kwargs)


class EventKind(str, enum.Enum):
    ContainerUpdate = "ContainerUpdate"
    HumanActionChange = "HumanActionChange"
    Timeout = "Timeout"
    WarningInterrupt = "WarningInterrupt"


class Trigger(str, enum.Enum):
    TriggerNow = "TriggerNow"
    Queue = "Queue"
    Skip = "Skip"


class Actor(str, enum.Enum):
    Human = "Human"
    Robot = "Robot"


@dataclass
class EnvState:
    cfg: TaskConfig
    cubes: list
    human_type: HumanType
    experience: int = 0
    tick: int = 0
    cube_index: int = 0
    cube_wait: int = 0
    subtasks_done: int = 0
    n_s: int = 0
    n_f: int = 0
    n_s_human: int = 0
    n_f_human: int = 0
    n_s_robot: int = 0
    n_f_robot: int = 0
    assignee: Actor = Actor.Human
    grasp_left: int = 0
    robot_left: int = 0
    robot_starts: int = 0
    last_human_action: HumanAction | None = None

    @property
    def terminal(self) -> bool:
        return self.subtasks_done >= self.cfg.num_subtasks

    @property
    def robot_motion_in_progress(self) -> bool:
        return self.robot_left > 0

    @property
    def cube_on_belt(self) -> str | None:
        return None if self.terminal else self.cubes[self.cube_index]

    @property
    def task_success(self) -> bool:
        return self.n_s / self.cfg.num_subtasks >= self.cfg.success_threshold

    def counts(self) -> dict:
        return {
            "n_s": self.n_s,
            "n_f": self.n_f,
            "n_s_human": self.n_s_human,
            "n_f_human": self.n_f_human,
            "n_s_robot": self.n_s_robot,
            "n_f_robot": self.n_f_robot,
        }


def new_task(cfg: TaskConfig, seed: int, human_type: HumanType | None = None, experience: int = 0) -> EnvState:
    """Fresh task with a seeded random cube sequence."""
    rng = np.random.default_rng(seed)
    cubes = [COLORS[i] for i in rng.integers(len(COLORS), size=cfg.num_subtasks)]
    if human_type is None:
        human_type = HumanType(Level.High, Level.High, Level.High, Level.High)
    return EnvState(cfg=cfg, cubes=cubes, human_type=human_type, experience=int(experience))


def placement_probability(t: HumanType, cumulative: int, cfg: TaskConfig) -> float:
    k = cfg.task_type
    p = P_BASE[k][t.expertise] + LEARNING_GAIN[k] * (1.0 - np.exp(-cumulative / LEARNING_SCALE)) - STROOP_PENALTY[k]
    return float(min(max(p, 0.05), 0.99))


def human_placement_outcome(t: HumanType, cumulative: int, cfg: TaskConfig, rng: np.random.Generator) -> bool:
    return bool(rng.random() < placement_probability(t, cumulative, cfg))


def score(success: bool, actor: Actor, spec: RewardSpec) -> float:
    if not success:
        return spec.subtaskFail
    return spec.subtaskSuccessByAssignee if actor == Actor.Human else spec.subtaskSuccessByOther


@dataclass
class TickResult:
    events: list
    sigma: np.ndarray
    reward: float
    outcome: tuple | None  # (success, actor) when a subtask resolved


def tick(
    env: EnvState,
    human_action: HumanAction,
    robot_action: RobotAction,
    rng: np.random.Generator,
    spec: RewardSpec = RewardSpec(),
) -> TickResult:
    """Advance one tick in place and report events, observation and score."""
    if env.terminal:
        raise ContractViolation("tick called on a finished task")
    cfg = env.cfg
    human_action = HumanAction(human_action)
    robot_action = RobotAction(robot_action)
    events = []
    if env.last_human_action is not None and human_action != env.last_human_action:
        events.append(EventKind.HumanActionChange)

    if robot_action == RobotAction.TakeOver and env.robot_left == 0:
        env.robot_left = cfg.robot_ticks
        env.robot_starts += 1
    elif robot_action == RobotAction.Cancel and env.robot_left > 0:
        env.robot_left = 0
    if human_action == HumanAction.GraspAndPlace and env.grasp_left == 0:
        env.grasp_left = cfg.grasp_ticks
    elif human_action != HumanAction.GraspAndPlace:
        env.grasp_left = 0
    grasping = env.grasp_left > 0

    # one uniform per tick, used by whichever placement resolves, keeps the
    # random stream aligned across controllers that act differently
    u = rng.random()
    outcome = None
    if env.grasp_left > 0:
        env.grasp_left -= 1
        if env.grasp_left == 0:
            p = placement_probability(env.human_type, env.experience, cfg)
            outcome = (bool(u < p), Actor.Human)
            env.experience += 1
    if env.robot_left > 0:
        env.robot_left -= 1
        if env.robot_left == 0 and outcome is None:
            outcome = (bool(u < cfg.robot_success), Actor.Robot)
    if outcome is None and not grasping and env.robot_left == 0:
        env.cube_wait += 1
        if env.cube_wait >= cfg.belt_timeout_ticks:
            # the cube falls off the belt; the assignee is accountable
            outcome = (False, env.assignee)

    reward = 0.0
    sigma = np.zeros(N_FLAGS, dtype=bool)
    sigma[FLAG_INDEX["humanDetected"]] = human_action != HumanAction.Leave
    sigma[FLAG_INDEX["lookingAround"]] = human_action == HumanAction.LookAround
    sigma[FLAG_INDEX["attemptGrasp"]] = grasping
    sigma[FLAG_INDEX["warnsRobot"]] = human_action == HumanAction.Warn
    sigma[FLAG_INDEX["idle"]] = human_action == HumanAction.Idle
    if human_action == HumanAction.Warn:
        events.append(EventKind.WarningInterrupt)
        reward += spec.warningPenalty

    if outcome is not None:
        success, actor = outcome
        _record(env, success, actor)
        reward += score(success, actor, spec)
        sigma[FLAG_INDEX["subtaskSuccess" if success else "subtaskFail"]] = True
        events.append(EventKind.ContainerUpdate)
        env.grasp_left = 0
        env.robot_left = 0
        env.cube_wait = 0
        env.cube_index += 1
        if env.terminal:
            sigma[FLAG_INDEX["taskSuccess" if env.task_success else "taskFail"]] = True
            if cfg.terminal_bonus:
                reward += spec.globalSuccess if env.task_success else spec.globalFail

    env.last_human_action = human_action
    env.tick += 1
    return TickResult(events=events, sigma=sigma, reward=reward, outcome=outcome)


def _record(env: EnvState, success: bool, actor: Actor) -> None:
    env.subtasks_done += 1
    if success:
        env.n_s += 1
        if actor == Actor.Human:
            env.n_s_human += 1
        else:
            env.n_s_robot += 1
    else:
        env.n_f += 1
        if actor == Actor.Human:
            env.n_f_human += 1
        else:
            env.n_f_robot += 1


TIMEOUT_TICKS = 3
_PREEMPTING = (EventKind.ContainerUpdate, EventKind.WarningInterrupt)


def decision_trigger(prev_action, cur_action, events, ticks_since_decision: int, decision_in_flight: bool = False) -> Trigger:
    """Turn the latest events into a decision request."""
    if ticks_since_decision < 0:
        raise ConfigurationError("ticks_since_decision must be >= 0")
    kinds = {EventKind(e) for e in events}
    if kinds & set(_PREEMPTING):
        return Trigger.TriggerNow
    changed = prev_action is not None and cur_action != prev_action
    if decision_in_flight and (changed or ticks_since_decision >= TIMEOUT_TICKS):
        return Trigger.Queue
    if changed or ticks_since_decision >= TIMEOUT_TICKS:
        return Trigger.TriggerNow
    return Trigger.Skip


class DecisionGate:
    """Holds at most the latest pending observation while a decision is running.

    Preempting events (container update, warning) bypass the gate.
    """

    def __init__(self):
        self.busy = False
        self.pending = None

    def offer(self, observation, trigger: Trigger, preempt: bool = False):
        """Return the observation to decide on now, or None."""
        if trigger == Trigger.Skip:
            return None
        if preempt or not self.busy:
            self.busy = True
            self.pending = None
            return observation
        self.pending = observation
        return None

    def finish(self):
        """Mark the running decision done; returns the queued observation if any."""
        self.busy = False
        nxt, self.pending = self.pending, None
        if nxt is not None:
            self.busy = True
        return nxt


# ---------------------------------------------------------------------------
# Episode logs


@dataclass
class EpisodeLog:
    """Tick records of one task plus a summary written once the task ends."""

    records: list = field(default_factory=list)
    summary: dict | None = None

    @property
    def complete(self) -> bool:
        return self.summary is not None

    def sigmas(self) -> np.ndarray:
        return np.array([r["sigma"] for r in self.records], dtype=bool).reshape(-1, N_FLAGS)

    def decision_sigmas(self) -> np.ndarray:
        """Observation vectors seen at decision points (what the robot accumulates for type inference)."""
        rows = [r["sigma"] for r in self.records if r.get("decided")]
        return np.array(rows, dtype=bool).reshape(-1, N_FLAGS)

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, separators=(",", ":")) for r in self.records]
        if self.summary is not None:
            lines.append(json.dumps({"summary": self.summary}, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> EpisodeLog:
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if "summary" in rec:
                log.summary = rec["summary"]
            else:
                log.records.append(rec)
        return log


def write_logs(logs, path) -> None:
    Path(path).write_text("".join(log.to_jsonl() for log in logs))


def read_logs(path) -> list[EpisodeLog]:
    """Split a JSON-lines file holding several tasks back into one log per task."""
    logs, current = [], EpisodeLog()
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if "summary" in rec:
            current.summary = rec["summary"]
            logs.append(current)
            current = EpisodeLog()
        else:
            current.records.append(rec)
    if current.records:
        logs.append(current)
    return logs


def with_task_type(cfg: TaskConfig, task_type: int) -> TaskConfig:
    return replace(cfg, task_type=task_type, rule_table=None, stroop=None)
