"""Run one collaboration task between a simulated human and a robot controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .apomdp import (
    ApomdpModel,
    ReactivePolicy,
    RewardSpec,
    RobotAction,
    belief_update,
    reset_belief,
)
from .env import (
    Actor,
    EpisodeLog,
    TaskConfig,
    Trigger,
    decision_trigger,
    new_task,
    tick,
)
from .errors import ImpossibleObservation
from .human import (
    STATE_ACTION,
    HumanAction,
    HumanModel,
    HumanState,
    InteractionCounters,
    initial_human_state,
    step_human_with,
)
from .solver import SolverConfig, plan_action


class ProactiveController:
    """Belief tracking on an A-POMDP plus online lookahead planning."""

    kind = "proactive"

    def __init__(self, model: ApomdpModel, solver: SolverConfig = SolverConfig()):
        self.model = model
        self.solver = solver
        self.belief = model.initial_belief()
        self.last_action = RobotAction.Idle
        self.resets = 0
        self._calls = 0

    def start(self, seed: int) -> RobotAction:
        self.belief = self.model.initial_belief()
        self._seed = int(seed)
        self._calls = 0
        self.resets = 0
        self.last_action = self._plan()
        return self.last_action

    def _plan(self) -> RobotAction:
        cfg = SolverConfig(self.solver.depth, self.solver.width, self._seed * 1_000_003 + self._calls)
        self._calls += 1
        return RobotAction(plan_action(self.model, self.belief, cfg))

    def decide(self, sigma: np.ndarray, elapsed: int, motion_in_progress: bool) -> RobotAction:
        try:
            self.belief = belief_update(self.model, self.belief, self.last_action, sigma)
        except ImpossibleObservation:
            self.belief = reset_belief(self.model)
            self.resets += 1
        action = self._plan()
        if action == RobotAction.Cancel and not motion_in_progress:
            action = RobotAction.Idle
        self.last_action = action
        return action


class ReactiveController:
    """Wraps the deterministic baseline; elapsed ticks count from the last subtask event."""

    kind = "reactive"

    def __init__(self, policy: ReactivePolicy):
        self.policy = policy
        self.belief = None

    def start(self, seed: int) -> RobotAction:
        return RobotAction.Idle

    def decide(self, sigma: np.ndarray, elapsed: int, motion_in_progress: bool) -> RobotAction:
        return self.policy.decide(sigma, elapsed)


class AloneController:
    """The robot stays idle; the human works alone."""

    kind = "alone"
    belief = None

    def start(self, seed: int) -> RobotAction:
        return RobotAction.Idle

    def decide(self, sigma, elapsed, motion_in_progress) -> RobotAction:
        return RobotAction.Idle


@dataclass
class EpisodeResult:
    log: EpisodeLog
    counters: InteractionCounters
    experience: int


def _streams(seed) -> tuple:
    ss = np.random.SeedSequence(seed)
    human_ss, env_ss, plan_ss, cube_ss = ss.spawn(4)
    return (
        np.random.default_rng(human_ss),
        np.random.default_rng(env_ss),
        int(plan_ss.generate_state(1)[0]),
        int(cube_ss.generate_state(1)[0]),
    )


def run_episode(
    cfg: TaskConfig,
    human: HumanModel,
    controller,
    seed,
    counters: InteractionCounters = InteractionCounters(),
    experience: int = 0,
    record_belief: bool = False,
    gamma: float = 0.95,
    max_ticks: int = 10_000,
) -> EpisodeResult:
    """Simulate one task to completion.

    Within a tick: the human steps (unless locked in a grasp or a warning)
    using the robot's action from the previous tick as context, the
    environment advances, and on a trigger the controller picks the action
    applied from the next tick on. Independent random streams drive the
    human, the environment and the planner, so two controllers facing the
    same seed see the same cubes and the same outcome draws for as long as
    their behavior coincides.
    """
    human_rng, env_rng, plan_seed, cube_seed = _streams(seed)
    env = new_task(cfg, cube_seed, human.type, experience)
    spec = getattr(getattr(controller, "model", None), "rewards", None) or RewardSpec()
    log = EpisodeLog()

    h_state: HumanState = initial_human_state(human_rng)
    h_action: HumanAction = STATE_ACTION[h_state]
    warn_left = 0
    robot_action = controller.start(plan_seed)
    context = RobotAction.Idle
    decision_step = 0
    since_decision = 0
    since_subtask = 0
    prev_h_action = None
    n_r = counters.n_r
    discounted = 0.0
    warnings = 0

    while not env.terminal:
        if env.tick >= max_ticks:
            raise RuntimeError("episode exceeded max_ticks")
        u = human_rng.random()
        if env.tick > 0:
            if env.grasp_left > 0:
                pass
            elif warn_left > 0:
                warn_left -= 1
            else:
                c = InteractionCounters(n_r=n_r, k_t=counters.k_t)
                h_action, h_state = step_human_with(human, h_state, context, c, u)
                if h_state == HumanState.WarnTheRobot:
                    warn_left = cfg.warn_ticks - 1
        starts_before = env.robot_starts
        res = tick(env, h_action, robot_action, env_rng, spec)
        n_r += env.robot_starts - starts_before
        discounted += gamma**decision_step * res.reward
        warnings += int(res.sigma[3])
        since_decision += 1
        since_subtask = 0 if res.outcome is not None else since_subtask + 1

        rec = {
            "tick": env.tick - 1,
            "humanAction": h_action.name,
            "humanState": h_state.name,
            "robotAction": robot_action.name,
            "sigma": [int(x) for x in res.sigma],
            "events": [e.value for e in res.events],
            "score": res.reward,
            "decisionStep": decision_step,
            "decided": False,
            "cubeWait": env.cube_wait,
            "resolvedBy": None if res.outcome is None else res.outcome[1].value,
        }
        robot_busy = env.robot_motion_in_progress or (res.outcome is not None and res.outcome[1] == Actor.Robot)
        context = RobotAction.TakeOver if robot_busy else robot_action

        trig = decision_trigger(prev_h_action, h_action, res.events, since_decision)
        prev_h_action = h_action
        if not env.terminal and trig == Trigger.TriggerNow:
            robot_action = controller.decide(res.sigma, since_subtask, env.robot_motion_in_progress)
            decision_step += 1
            since_decision = 0
            rec["decided"] = True
            if record_belief and controller.belief is not None:
                rec["belief"] = [round(float(x), 6) for x in controller.belief]
        elif robot_action in (RobotAction.TakeOver, RobotAction.Cancel, RobotAction.PointToRemind):
            # one-shot commands are not repeated without a new decision
            robot_action = RobotAction.Idle if not env.robot_motion_in_progress else RobotAction.TakeOver
        log.records.append(rec)

    log.summary = {
        "taskType": cfg.task_type,
        "numSubtasks": cfg.num_subtasks,
        **env.counts(),
        "taskSuccess": bool(env.task_success),
        "ticks": env.tick,
        "decisions": decision_step,
        "warnings": warnings,
        "robotInterferences": env.robot_starts,
        "gamma": gamma,
        "discountedReturn": discounted,
        "controller": controller.kind,
        "humanType": human.type.encode(),
    }
    return EpisodeResult(log=log, counters=InteractionCounters(n_r=n_r, k_t=counters.k_t + 1), experience=env.experience)
