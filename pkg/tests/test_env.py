import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cobotadapt.apomdp import (
    FLAG_INDEX,
    RewardSpec,
    RobotAction,
    build_base_model,
    make_reactive_policy,
)
from cobotadapt.env import (
    Actor,
    DecisionGate,
    EpisodeLog,
    EventKind,
    TaskConfig,
    Trigger,
    decision_trigger,
    new_task,
    placement_probability,
    read_logs,
    score,
    tick,
    write_logs,
)
from cobotadapt.errors import ConfigurationError, ContractViolation
from cobotadapt.human import (
    HumanAction,
    HumanType,
    InteractionCounters,
    Level,
    build_human_model,
    make_type_space,
)
from cobotadapt.simulation import (
    AloneController,
    ProactiveController,
    ReactiveController,
    run_episode,
)
from cobotadapt.solver import SolverConfig

TYPES = make_type_space()


class FixedRng:
    """Stand-in generator whose uniform draws are a constant."""

    def __init__(self, u: float):
        self.u = u

    def random(self, *args):
        return self.u


def _t(expertise: str) -> HumanType:
    return HumanType(Level(expertise), Level.High, Level.High, Level.High)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TaskConfig(num_subtasks=0)
    with pytest.raises(ConfigurationError):
        TaskConfig(task_type=6)
    with pytest.raises(ConfigurationError):
        TaskConfig(rule_table={"red": "left"})
    assert TaskConfig.from_dict({"taskType": 2, "numSubtasks": 4}).num_subtasks == 4
    with pytest.raises(ConfigurationError):
        TaskConfig.from_dict({"nope": 1})


def test_new_task_is_fresh_and_seeded():
    cfg = TaskConfig(num_subtasks=10)
    a, b = new_task(cfg, 5), new_task(cfg, 5)
    assert a.cubes == b.cubes and len(a.cubes) == 10
    assert a.n_s == a.n_f == 0 and not a.terminal


def test_task_ends_after_num_subtasks():
    cfg = TaskConfig(num_subtasks=10)
    env = new_task(cfg, 0)
    rng = np.random.default_rng(0)
    ticks = 0
    while not env.terminal:
        tick(env, HumanAction.GraspAndPlace, RobotAction.Idle, rng)
        ticks += 1
    assert env.subtasks_done == 10 and env.n_s + env.n_f == 10
    assert ticks == 10 * cfg.grasp_ticks
    with pytest.raises(ContractViolation):
        tick(env, HumanAction.Idle, RobotAction.Idle, rng)


def test_warn_sets_flag_and_interrupt():
    env = new_task(TaskConfig(), 0)
    res = tick(env, HumanAction.Warn, RobotAction.Idle, np.random.default_rng(0))
    assert res.sigma[FLAG_INDEX["warnsRobot"]]
    assert EventKind.WarningInterrupt in res.events
    assert res.reward == RewardSpec().warningPenalty


def test_belt_timeout_fails_subtask():
    cfg = TaskConfig(belt_timeout_ticks=12)
    env = new_task(cfg, 0)
    rng = np.random.default_rng(0)
    for _ in range(11):
        res = tick(env, HumanAction.Idle, RobotAction.Idle, rng)
        assert res.outcome is None
    res = tick(env, HumanAction.Idle, RobotAction.Idle, rng)
    assert env.n_f == 1 and env.n_f_human == 1
    assert res.sigma[FLAG_INDEX["subtaskFail"]]
    assert EventKind.ContainerUpdate in res.events


def test_forced_robot_success():
    cfg = TaskConfig()
    env = new_task(cfg, 0)
    rng = FixedRng(0.0)
    for _ in range(cfg.robot_ticks):
        res = tick(env, HumanAction.Idle, RobotAction.TakeOver, rng)
    assert env.n_s == 1 and env.n_s_robot == 1
    assert res.sigma[FLAG_INDEX["subtaskSuccess"]]
    assert res.reward == RewardSpec().subtaskSuccessByOther


def test_cancel_aborts_motion():
    env = new_task(TaskConfig(robot_ticks=3), 0)
    rng = np.random.default_rng(0)
    tick(env, HumanAction.Idle, RobotAction.TakeOver, rng)
    assert env.robot_motion_in_progress
    tick(env, HumanAction.Idle, RobotAction.Cancel, rng)
    assert not env.robot_motion_in_progress and env.subtasks_done == 0


def test_flag_synthesis():
    env = new_task(TaskConfig(), 0)
    rng = np.random.default_rng(0)
    s = tick(env, HumanAction.Leave, RobotAction.Idle, rng).sigma
    assert not s[FLAG_INDEX["humanDetected"]]
    s = tick(env, HumanAction.LookAround, RobotAction.Idle, rng).sigma
    assert s[FLAG_INDEX["humanDetected"]] and s[FLAG_INDEX["lookingAround"]]
    s = tick(env, HumanAction.GraspAndPlace, RobotAction.Idle, rng).sigma
    assert s[FLAG_INDEX["attemptGrasp"]]
    s = tick(env, HumanAction.Idle, RobotAction.Idle, rng).sigma
    assert s[FLAG_INDEX["idle"]] and not s[FLAG_INDEX["attemptGrasp"]]


def test_task_flag_on_last_subtask():
    cfg = TaskConfig(num_subtasks=1)
    env = new_task(cfg, 0)
    res = None
    for _ in range(cfg.grasp_ticks):
        res = tick(env, HumanAction.GraspAndPlace, RobotAction.Idle, FixedRng(0.0))
    assert res.sigma[FLAG_INDEX["taskSuccess"]] and not res.sigma[FLAG_INDEX["taskFail"]]


def test_score_table():
    spec = RewardSpec()
    assert score(True, Actor.Human, spec) == 2
    assert score(True, Actor.Robot, spec) == 1
    assert score(False, Actor.Human, spec) == score(False, Actor.Robot, spec) == -2


def test_placement_probability_formula():
    assert placement_probability(_t("High"), 0, TaskConfig(task_type=1)) >= placement_probability(_t("Low"), 0, TaskConfig(task_type=1))
    for t in TYPES:
        assert placement_probability(t, 0, TaskConfig(task_type=4)) < placement_probability(t, 0, TaskConfig(task_type=1))
    # learning limit for type 5: p_base + gain
    assert placement_probability(_t("Low"), 10**6, TaskConfig(task_type=5)) == pytest.approx(0.30 + 0.35)
    assert placement_probability(_t("Low"), 40, TaskConfig(task_type=5)) == pytest.approx(0.30 + 0.35 * (1 - np.exp(-1)))


def test_trigger_rules():
    assert decision_trigger(HumanAction.Idle, HumanAction.Idle, [], 2) == Trigger.Skip
    assert decision_trigger(HumanAction.Idle, HumanAction.Idle, [], 3) == Trigger.TriggerNow
    assert decision_trigger(HumanAction.Idle, HumanAction.Idle, [EventKind.WarningInterrupt], 0) == Trigger.TriggerNow
    assert decision_trigger(HumanAction.Idle, HumanAction.LookAround, [], 0) == Trigger.TriggerNow
    assert decision_trigger(HumanAction.Idle, HumanAction.LookAround, [], 0, decision_in_flight=True) == Trigger.Queue
    assert decision_trigger(HumanAction.Idle, HumanAction.LookAround, [EventKind.ContainerUpdate], 0, True) == Trigger.TriggerNow


def test_gate_holds_only_latest():
    g = DecisionGate()
    assert g.offer("a", Trigger.TriggerNow) == "a"
    assert g.offer("b", Trigger.Queue) is None
    assert g.offer("c", Trigger.Queue) is None
    assert g.finish() == "c"
    assert g.finish() is None
    assert g.offer("d", Trigger.Skip) is None
    g.offer("e", Trigger.TriggerNow)
    assert g.offer("f", Trigger.TriggerNow, preempt=True) == "f"


def _controllers():
    base = build_base_model()
    return [
        lambda: ProactiveController(base, SolverConfig(depth=2, width=3)),
        lambda: ReactiveController(make_reactive_policy(8)),
        lambda: AloneController(),
    ]


@given(seed=st.integers(0, 10_000), ti=st.integers(0, 15), ci=st.integers(0, 2), task_type=st.integers(1, 5))
def test_episode_invariants(seed, ti, ci, task_type):
    cfg = TaskConfig(task_type=task_type)
    human = build_human_model(TYPES[ti], seed=seed % 7)
    res = run_episode(cfg, human, _controllers()[ci](), seed, InteractionCounters(), 0)
    log = res.log
    c = log.summary
    assert c["n_s"] + c["n_f"] == cfg.num_subtasks
    assert c["n_s"] == c["n_s_human"] + c["n_s_robot"]
    assert c["n_f"] == c["n_f_human"] + c["n_f_robot"]
    resolved = 0
    last_decision = 0
    for r in log.records:
        sig = r["sigma"]
        resolved += sig[FLAG_INDEX["subtaskSuccess"]] + sig[FLAG_INDEX["subtaskFail"]]
        assert resolved <= cfg.num_subtasks
        if r["humanAction"] == "Warn":
            assert sig[FLAG_INDEX["warnsRobot"]] and "WarningInterrupt" in r["events"]
        if r.get("decided"):
            assert r["tick"] - last_decision <= 3
            last_decision = r["tick"]
    if ci == 2:
        assert c["n_s_robot"] == 0
    assert res.counters.k_t == 1


def test_episode_determinism_and_jsonl(tmp_path):
    human = build_human_model(TYPES[2], seed=1)
    runs = [run_episode(TaskConfig(), human, _controllers()[0](), 42, InteractionCounters(), 0) for _ in range(2)]
    assert runs[0].log.to_jsonl() == runs[1].log.to_jsonl()
    back = EpisodeLog.from_jsonl(runs[0].log.to_jsonl())
    assert back.records == runs[0].log.records and back.summary == runs[0].log.summary
    write_logs([runs[0].log, runs[1].log], tmp_path / "e.jsonl")
    assert len(read_logs(tmp_path / "e.jsonl")) == 2
    rec = runs[0].log.records[0]
    for key in ("tick", "humanAction", "robotAction", "sigma", "events", "score"):
        assert key in rec
