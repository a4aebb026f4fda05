"""Simulated human collaborators as type-dependent Markov decision processes.

Each tick the human samples a next mental state from a transition row that
depends on the robot's last action and on two interaction counters (robot
interferences so far, tasks handled so far), then emits the action coupled
to that state.
"""

from __future__ import annotations

import enum
import itertools
import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .apomdp import RobotAction
from .errors import ConfigurationError, ContractViolation

LIKELIHOOD_FLOOR = 1e-12


class Level(str, enum.Enum):
    Low = "Low"
    High = "High"


@dataclass(frozen=True)
class HumanType:
    expertise: Level
    stamina: Level
    attention: Level
    collaborativeness: Level

    def encode(self) -> list[str]:
        return [self.expertise.value, self.stamina.value, self.attention.value, self.collaborativeness.value]

    @classmethod
    def decode(cls, values: Sequence[str]) -> HumanType:
        if len(values) != 4:
            raise ConfigurationError("a human type is four Low/High strings")
        return cls(*(Level(v) for v in values))

    def label(self) -> str:
        return "".join(v[0] for v in self.encode())


def make_type_space() -> list[HumanType]:
    """All 16 combinations of Low/High characteristics, Low first."""
    levels = (Level.Low, Level.High)
    return [HumanType(*combo) for combo in itertools.product(levels, repeat=4)]


class HumanState(enum.IntEnum):
    Attending = 0
    Evaluating = 1
    Working = 2
    NoAttention = 3
    Tired = 4
    LostMotivation = 5
    WarnTheRobot = 6
    GlobalSuccess = 7
    GlobalFail = 8


class HumanAction(enum.IntEnum):
    GraspAndPlace = 0
    Idle = 1
    LookAround = 2
    Warn = 3
    Leave = 4


H = HumanState
TERMINAL_HUMAN = (H.GlobalSuccess, H.GlobalFail)
ACTIVE_HUMAN = tuple(s for s in HumanState if s not in TERMINAL_HUMAN)
ENGAGED = (H.Attending, H.Evaluating, H.Working)

STATE_ACTION = {
    H.Attending: HumanAction.Idle,
    H.Evaluating: HumanAction.Idle,
    H.Working: HumanAction.GraspAndPlace,
    H.NoAttention: HumanAction.LookAround,
    H.Tired: HumanAction.Idle,
    H.LostMotivation: HumanAction.Leave,
    H.WarnTheRobot: HumanAction.Warn,
    H.GlobalSuccess: HumanAction.Idle,
    H.GlobalFail: HumanAction.Idle,
}
# emission matrix E[s, action] (deterministic coupling)
EMISSION = np.zeros((len(HumanState), len(HumanAction)))
for _s, _a in STATE_ACTION.items():
    EMISSION[_s, _a] = 1.0

INITIAL_DISTRIBUTION = np.zeros(len(HumanState))
INITIAL_DISTRIBUTION[H.Attending] = 0.8
INITIAL_DISTRIBUTION[H.Evaluating] = 0.2


@dataclass(frozen=True)
class InteractionCounters:
    """Robot interferences so far (n_r) and tasks handled so far (k_t)."""

    n_r: int = 0
    k_t: int = 0

    def __post_init__(self):
        if self.n_r < 0 or self.k_t < 0:
            raise ConfigurationError("counters must be non-negative")


@dataclass(frozen=True)
class Modifiers:
    """Logistic counter adjustments p' = p + (p_max - p) * sigmoid(alpha * counter - beta).

    The warn modifier acts on P(-> WarnTheRobot) under robot take-over and
    is driven by n_r; the fatigue modifier acts on P(-> Tired) and is
    driven by k_t.
    """

    warn_alpha: float
    warn_beta: float
    warn_max: float
    tired_alpha: float
    tired_beta: float
    tired_max: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def _boost(p: float, p_max: float, alpha: float, beta: float, counter: int) -> float:
    if p_max <= p:
        return p
    return p + (p_max - p) * _sigmoid(alpha * counter - beta)


def _set_entry(row: np.ndarray, target: int, value: float) -> np.ndarray:
    """Set row[target] = value and rescale the other entries to keep the sum at 1."""
    out = row.copy()
    rest = 1.0 - row[target]
    out[target] = 0.0
    if rest > 0:
        out *= (1.0 - value) / rest
    else:
        spread = np.ones_like(out)
        spread[target] = 0.0
        spread[list(TERMINAL_HUMAN)] = 0.0
        out = spread * (1.0 - value) / spread.sum()
    out[target] = value
    return out


@dataclass(frozen=True, eq=False)
class HumanModel:
    """A human type's MDP: base transitions T[s, robot_action, s'], rewards and counter modifiers."""

    type: HumanType
    T: np.ndarray
    R: np.ndarray
    gamma: float
    modifiers: Modifiers
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        T = np.array(self.T, dtype=float)
        T.setflags(write=False)
        R = np.array(self.R, dtype=float)
        R.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "R", R)

    def transition_row(self, s: int, robot_action: int, counters: InteractionCounters) -> np.ndarray:
        """Effective P(s' | s, robot action, n_r, k_t)."""
        key = (int(s), int(robot_action), counters.n_r, counters.k_t)
        row = self._cache.get(key)
        if row is not None:
            return row
        m = self.modifiers
        row = self.T[s, robot_action].copy()
        if s in TERMINAL_HUMAN:
            return row
        if robot_action == RobotAction.TakeOver:
            p = _boost(row[H.WarnTheRobot], m.warn_max, m.warn_alpha, m.warn_beta, counters.n_r)
            row = _set_entry(row, H.WarnTheRobot, p)
        p = _boost(row[H.Tired], m.tired_max, m.tired_alpha, m.tired_beta, counters.k_t)
        row = _set_entry(row, H.Tired, p)
        row.setflags(write=False)
        if len(self._cache) < 50_000:
            self._cache[key] = row
        return row

    def to_dict(self) -> dict:
        return {
            "type": self.type.encode(),
            "T": self.T.tolist(),
            "R": self.R.tolist(),
            "gamma": self.gamma,
            "modifiers": self.modifiers.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> HumanModel:
        return cls(
            type=HumanType.decode(d["type"]),
            T=np.array(d["T"], dtype=float),
            R=np.array(d["R"], dtype=float),
            gamma=float(d["gamma"]),
            modifiers=Modifiers(**d["modifiers"]),
        )


def save_human_model(m: HumanModel, path) -> None:
    Path(path).write_text(json.dumps(m.to_dict(), indent=1))


def load_human_model(path) -> HumanModel:
    return HumanModel.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Construction

# passive rows (robot Idle / Plan / Cancel) for a human High in every trait
_PASSIVE = {
    H.Attending: {H.Attending: 0.25, H.Evaluating: 0.10, H.Working: 0.55, H.NoAttention: 0.04, H.Tired: 0.03, H.LostMotivation: 0.03},
    H.Evaluating: {H.Evaluating: 0.35, H.Working: 0.50, H.Attending: 0.05, H.NoAttention: 0.04, H.Tired: 0.03, H.LostMotivation: 0.03},
    H.Working: {H.Attending: 0.55, H.Evaluating: 0.30, H.NoAttention: 0.05, H.Tired: 0.05, H.LostMotivation: 0.05},
    H.NoAttention: {H.NoAttention: 0.50, H.Attending: 0.40, H.Evaluating: 0.10},
    H.Tired: {H.Tired: 0.55, H.Evaluating: 0.20, H.Working: 0.15, H.LostMotivation: 0.10},
    H.LostMotivation: {H.LostMotivation: 0.70, H.Attending: 0.25, H.Tired: 0.05},
    H.WarnTheRobot: {H.Attending: 0.50, H.Working: 0.40, H.Evaluating: 0.10},
}

# being reminded pulls a drifting human back to the task
_REMIND_OVERRIDES = {
    H.NoAttention: {H.Attending: 0.75, H.NoAttention: 0.15, H.Evaluating: 0.10},
    H.Tired: {H.Tired: 0.40, H.Working: 0.30, H.Evaluating: 0.20, H.LostMotivation: 0.10},
    H.LostMotivation: {H.Attending: 0.50, H.LostMotivation: 0.45, H.Tired: 0.05},
}


@dataclass(frozen=True)
class TraitParameters:
    """Numbers by which each Low/High trait shapes the transition tables."""

    attention_drift: dict = field(default_factory=lambda: {Level.Low: 0.15, Level.High: 0.04})
    attention_persist: dict = field(default_factory=lambda: {Level.Low: 0.70, Level.High: 0.50})
    evaluate_from_attending: dict = field(default_factory=lambda: {Level.Low: 0.30, Level.High: 0.10})
    evaluate_persist: dict = field(default_factory=lambda: {Level.Low: 0.50, Level.High: 0.35})
    tired_base: dict = field(default_factory=lambda: {Level.Low: 0.05, Level.High: 0.03})
    tired_alpha: dict = field(default_factory=lambda: {Level.Low: 0.45, Level.High: 0.12})
    warn_engaged: dict = field(default_factory=lambda: {Level.Low: 0.40, Level.High: 0.08})
    warn_disengaged: dict = field(default_factory=lambda: {Level.Low: 0.15, Level.High: 0.02})
    warn_on_remind: dict = field(default_factory=lambda: {Level.Low: 0.08, Level.High: 0.01})
    warn_repeat: dict = field(default_factory=lambda: {Level.Low: 0.30, Level.High: 0.05})
    warn_max: dict = field(default_factory=lambda: {Level.Low: 0.80, Level.High: 0.40})
    warn_alpha: dict = field(default_factory=lambda: {Level.Low: 0.25, Level.High: 0.10})


DEFAULT_TRAITS = TraitParameters()


def _row_from(d: dict) -> np.ndarray:
    row = np.zeros(len(HumanState))
    for s, p in d.items():
        row[s] = p
    return row


def build_human_model(t: HumanType, seed: int = 0, traits: TraitParameters = DEFAULT_TRAITS, jitter: float = 0.05) -> HumanModel:
    """Instantiate the base tables for a human type, with a small seeded random factor."""
    rng = np.random.default_rng([int(seed), *[int(v == Level.High) for v in t.encode()]])
    nS, nA = len(HumanState), len(RobotAction)
    base = np.zeros((nS, nS))
    for s, d in _PASSIVE.items():
        base[s] = _row_from(d)

    # attention: drift into NoAttention and how long it lasts
    for s in ENGAGED:
        base[s] = _set_entry(base[s], H.NoAttention, traits.attention_drift[t.attention])
    base[H.NoAttention] = _set_entry(base[H.NoAttention], H.NoAttention, traits.attention_persist[t.attention])
    # expertise: time spent evaluating the rules
    base[H.Attending] = _set_entry(base[H.Attending], H.Evaluating, traits.evaluate_from_attending[t.expertise])
    base[H.Evaluating] = _set_entry(base[H.Evaluating], H.Evaluating, traits.evaluate_persist[t.expertise])
    # stamina: baseline fatigue
    for s in ENGAGED:
        base[s] = _set_entry(base[s], H.Tired, traits.tired_base[t.stamina])

    if jitter > 0:
        active = list(ACTIVE_HUMAN)
        base[active] *= rng.uniform(1 - jitter, 1 + jitter, size=base[active].shape)
        base[active] /= base[active].sum(axis=1, keepdims=True)

    T = np.zeros((nS, nA, nS))
    for a in RobotAction:
        T[:, a, :] = base
    c = t.collaborativeness
    for s in ENGAGED:
        T[s, RobotAction.TakeOver] = _set_entry(base[s], H.WarnTheRobot, traits.warn_engaged[c])
        T[s, RobotAction.PointToRemind] = _set_entry(base[s], H.WarnTheRobot, traits.warn_on_remind[c])
    for s in (H.NoAttention, H.Tired, H.LostMotivation):
        T[s, RobotAction.TakeOver] = _set_entry(base[s], H.WarnTheRobot, traits.warn_disengaged[c])
        T[s, RobotAction.PointToRemind] = _row_from(_REMIND_OVERRIDES[s])
    T[H.WarnTheRobot, RobotAction.TakeOver] = _set_entry(base[H.WarnTheRobot], H.WarnTheRobot, traits.warn_repeat[c])
    for s in TERMINAL_HUMAN:
        T[s, :, s] = 1.0

    R = np.zeros(nS)
    R[H.GlobalSuccess], R[H.GlobalFail] = 10.0, -10.0
    R[H.Working] = 1.0 if t.expertise == Level.High else 0.5
    R[H.NoAttention] = 1.0 if t.attention == Level.Low else 0.0
    R[H.Tired] = 1.0 if t.stamina == Level.Low else 0.0
    R[H.WarnTheRobot] = 1.0 if c == Level.Low else -0.5

    mods = Modifiers(
        warn_alpha=traits.warn_alpha[c],
        warn_beta=3.0,
        warn_max=traits.warn_max[c],
        tired_alpha=traits.tired_alpha[t.stamina],
        tired_beta=4.0,
        tired_max=0.35,
    )
    return HumanModel(type=t, T=T, R=R, gamma=0.95, modifiers=mods)


# ---------------------------------------------------------------------------
# Sampling and scoring


def initial_human_state(rng: np.random.Generator) -> HumanState:
    return HumanState(int(rng.choice(len(HumanState), p=INITIAL_DISTRIBUTION)))


def step_human(
    m: HumanModel,
    s: int,
    robot_action: int,
    counters: InteractionCounters,
    rng: np.random.Generator,
) -> tuple[HumanAction, HumanState]:
    """Forward-sample the next state and emit its coupled action."""
    return step_human_with(m, s, robot_action, counters, rng.random())


def step_human_with(m: HumanModel, s: int, robot_action: int, counters: InteractionCounters, u: float) -> tuple[HumanAction, HumanState]:
    """step_human driven by a given uniform draw u in [0, 1)."""
    if s in TERMINAL_HUMAN:
        raise ContractViolation("cannot step a human in a terminal state")
    row = m.transition_row(s, robot_action, counters)
    s_next = int(np.searchsorted(np.cumsum(row), u * row.sum(), side="right"))
    s_next = min(s_next, len(row) - 1)
    return STATE_ACTION[HumanState(s_next)], HumanState(s_next)


def sample_trace(
    m: HumanModel,
    length: int,
    rng: np.random.Generator,
    robot_actions: Sequence[int] | None = None,
    counters: InteractionCounters = InteractionCounters(),
) -> list[HumanAction]:
    """One task's action trace; the first action is emitted from the initial state."""
    s = initial_human_state(rng)
    trace = [STATE_ACTION[s]]
    for i in range(1, length):
        ra = RobotAction.Idle if robot_actions is None else robot_actions[i - 1]
        a, s = step_human(m, s, ra, counters, rng)
        trace.append(a)
    return trace


def trace_likelihood(
    m: HumanModel,
    traces,
    robot_actions=None,
    counters=None,
) -> float:
    """Average over tasks of the geometric-mean per-step action likelihood.

    ``traces`` is one action sequence or a list of them (one per task).
    ``robot_actions`` and ``counters`` give the robot context of each task;
    a single InteractionCounters value applies to every task.
    """
    if len(traces) == 0:
        raise ConfigurationError("trace must be non-empty")
    if isinstance(traces[0], (int, np.integer)):
        traces = [traces]
        robot_actions = None if robot_actions is None else [robot_actions]
        if isinstance(counters, list):
            counters = counters[0]
    if counters is None:
        counters = InteractionCounters()
    scores = []
    for i, trace in enumerate(traces):
        if len(trace) == 0:
            raise ConfigurationError("trace must be non-empty")
        ras = None if robot_actions is None else robot_actions[i]
        c = counters[i] if isinstance(counters, (list, tuple)) else counters
        scores.append(_task_score(m, trace, ras, c))
    return float(np.mean(scores))


def _task_score(m: HumanModel, trace, robot_actions, counters: InteractionCounters) -> float:
    belief = INITIAL_DISTRIBUTION.copy()
    logs = []
    for t, action in enumerate(trace):
        if t > 0:
            ra = RobotAction.Idle if robot_actions is None else robot_actions[t - 1]
            belief = belief @ np.stack([m.transition_row(s, ra, counters) for s in HumanState])
        action_prob = EMISSION[:, int(action)]
        lik = float(belief @ action_prob)
        logs.append(np.log(max(lik, LIKELIHOOD_FLOOR)))
        if lik > 0:
            belief = belief * action_prob / lik
    return float(np.exp(np.mean(logs)))


def validation_types() -> list[HumanType]:
    """Eight types forming a half fraction of the 2^4 design (any two differ in >= 2 traits)."""
    out = []
    for t in make_type_space():
        highs = sum(v == Level.High for v in (t.expertise, t.stamina, t.attention, t.collaborativeness))
        if highs % 2 == 0:
            out.append(t)
    return out


def validation_context(n_tasks: int, length: int, seed: int) -> list[list[int]]:
    """Seeded random robot actions shared by every model in a validation run."""
    rng = np.random.default_rng(seed)
    p = np.array([0.55, 0.1, 0.2, 0.1, 0.05])
    return [rng.choice(len(RobotAction), size=length, p=p).tolist() for _ in range(n_tasks)]


def likelihood_matrix(models: Sequence[HumanModel], n_tasks: int = 100, length: int = 40, seed: int = 0) -> np.ndarray:
    """L[i, j] = score of model j on traces generated by model i.

    Task k runs with k_t = k and n_r equal to the take-overs of earlier tasks.
    """
    context = validation_context(n_tasks, length, seed)
    counters = []
    n_r = 0
    for k, ras in enumerate(context):
        counters.append(InteractionCounters(n_r=n_r, k_t=k))
        n_r += sum(1 for a in ras if a == RobotAction.TakeOver)
    L = np.zeros((len(models), len(models)))
    for i, gen in enumerate(models):
        rng = np.random.default_rng([seed, i])
        traces = [sample_trace(gen, length, rng, context[k], counters[k]) for k in range(n_tasks)]
        for j, m in enumerate(models):
            L[i, j] = trace_likelihood(m, traces, context, counters)
    return L
