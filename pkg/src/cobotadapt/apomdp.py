"""Anticipatory robot decision model: states, tables, belief filtering.

The model is a discrete POMDP whose observation is a vector of nine boolean
flags. Observation probabilities are stored per flag as Bernoulli rates
``O[s', a, k] = P(flag k is true | s', a)`` and the joint likelihood of a flag
vector is the product over flags.
"""

from __future__ import annotations

import enum
import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ImpossibleObservation

ROW_TOL = 1e-9


class RobotState(enum.IntEnum):
    TaskAssignedToHuman = 0
    TaskAssignedToRobot = 1
    HumanNotStruggling = 2
    MayBeTired = 3
    MayHaveLostAttention = 4
    MayNotBeCapable = 5
    NeedsAssistance = 6
    NoAssistanceNeeded = 7
    WarningReceived = 8
    GlobalSuccess = 9
    GlobalFail = 10


STATE_KIND = {
    RobotState.TaskAssignedToHuman: "initial",
    RobotState.TaskAssignedToRobot: "initial",
    RobotState.HumanNotStruggling: "tracking",
    RobotState.MayBeTired: "stage1",
    RobotState.MayHaveLostAttention: "stage1",
    RobotState.MayNotBeCapable: "stage1",
    RobotState.NeedsAssistance: "stage2",
    RobotState.NoAssistanceNeeded: "stage2",
    RobotState.WarningReceived: "warning",
    RobotState.GlobalSuccess: "terminal",
    RobotState.GlobalFail: "terminal",
}


class RobotAction(enum.IntEnum):
    Idle = 0
    Plan = 1
    TakeOver = 2
    PointToRemind = 3
    Cancel = 4


FLAGS = (
    "humanDetected",
    "lookingAround",
    "attemptGrasp",
    "warnsRobot",
    "idle",
    "taskSuccess",
    "taskFail",
    "subtaskSuccess",
    "subtaskFail",
)
N_FLAGS = len(FLAGS)
FLAG_INDEX = {name: i for i, name in enumerate(FLAGS)}


def observation(**flags: bool) -> np.ndarray:
    """Build a flag vector from keyword flags; unspecified flags are false."""
    sigma = np.zeros(N_FLAGS, dtype=bool)
    for name, value in flags.items():
        if name not in FLAG_INDEX:
            raise ConfigurationError(f"unknown observation flag {name!r}")
        sigma[FLAG_INDEX[name]] = bool(value)
    return sigma


def check_observation(sigma) -> np.ndarray:
    """Validate the mutual-exclusion rules of a flag vector and return it as bool array."""
    s = np.asarray(sigma, dtype=bool)
    if s.shape != (N_FLAGS,):
        raise ConfigurationError(f"observation must have {N_FLAGS} flags, got shape {s.shape}")
    if s[5] and s[6]:
        raise ConfigurationError("taskSuccess and taskFail are exclusive")
    if s[7] and s[8]:
        raise ConfigurationError("subtaskSuccess and subtaskFail are exclusive")
    if int(s[2]) + int(s[3]) + int(s[4]) > 1:
        raise ConfigurationError("at most one of attemptGrasp, warnsRobot, idle may be set")
    return s


@dataclass(frozen=True)
class RewardSpec:
    """Score points for subtask outcomes, warnings and task termination."""

    subtaskSuccessByAssignee: float = 2.0
    subtaskSuccessByOther: float = 1.0
    subtaskFail: float = -2.0
    warningPenalty: float = -2.0
    globalSuccess: float = 10.0
    globalFail: float = -10.0

    def validate(self) -> None:
        if not self.warningPenalty < 0:
            raise ConfigurationError("warningPenalty must be negative")
        if not self.subtaskFail < 0:
            raise ConfigurationError("subtaskFail must be negative")
        if not self.subtaskSuccessByAssignee > self.subtaskSuccessByOther > 0:
            raise ConfigurationError("need subtaskSuccessByAssignee > subtaskSuccessByOther > 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class ApomdpModel:
    """Immutable discrete POMDP with factored Bernoulli observations.

    ``T`` has shape (S, A, S), ``O`` has shape (S, A, F) and ``R`` (S, A).
    """

    states: tuple
    actions: tuple
    T: np.ndarray
    O: np.ndarray
    R: np.ndarray
    gamma: float
    initial_state: int = 0
    terminal: tuple = ()
    rewards: RewardSpec | None = None
    _T_by_action: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        T = np.array(self.T, dtype=float)
        O = np.array(self.O, dtype=float)
        R = np.array(self.R, dtype=float)
        S, A = len(self.states), len(self.actions)
        if T.shape != (S, A, S):
            raise ConfigurationError(f"T must have shape {(S, A, S)}, got {T.shape}")
        if O.ndim != 3 or O.shape[:2] != (S, A):
            raise ConfigurationError(f"O must have shape {(S, A, 'F')}, got {O.shape}")
        if R.shape != (S, A):
            raise ConfigurationError(f"R must have shape {(S, A)}, got {R.shape}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if (T < 0).any() or (np.abs(T.sum(axis=2) - 1.0) > ROW_TOL).any():
            raise ConfigurationError("every T(.|s,a) row must be a probability vector")
        if (O < 0).any() or (O > 1).any():
            raise ConfigurationError("observation rates must lie in [0, 1]")
        for s in self.terminal:
            if not np.allclose(T[s, :, s], 1.0, atol=ROW_TOL):
                raise ConfigurationError(f"terminal state {self.states[s]} must be absorbing")
        for arr in (T, O, R):
            arr.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "O", O)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "terminal", tuple(int(s) for s in self.terminal))
        by_action = np.ascontiguousarray(T.transpose(1, 0, 2))
        by_action.setflags(write=False)
        object.__setattr__(self, "_T_by_action", by_action)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_flags(self) -> int:
        return self.O.shape[2]

    def predict(self, belief: np.ndarray, action: int) -> np.ndarray:
        """Predicted next-state distribution sum_s T(s'|s,a) b(s)."""
        return belief @ self._T_by_action[action]

    def likelihood(self, sigma, action: int) -> np.ndarray:
        """Vector over s' of the joint flag-vector likelihood O(sigma|s',a)."""
        rates = self.O[:, action, :]
        return np.where(np.asarray(sigma, dtype=bool), rates, 1.0 - rates).prod(axis=1)

    def initial_belief(self) -> np.ndarray:
        b = np.zeros(self.n_states)
        b[self.initial_state] = 1.0
        return b

    def terminal_mass(self, belief: np.ndarray) -> float:
        return float(belief[list(self.terminal)].sum()) if self.terminal else 0.0

    def equals(self, other: ApomdpModel, atol: float = 0.0) -> bool:
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.gamma == other.gamma
            and np.allclose(self.T, other.T, rtol=0, atol=atol)
            and np.allclose(self.O, other.O, rtol=0, atol=atol)
            and np.allclose(self.R, other.R, rtol=0, atol=atol)
        )

    def with_tables(self, T=None, O=None) -> ApomdpModel:
        return ApomdpModel(
            states=self.states,
            actions=self.actions,
            T=self.T if T is None else T,
            O=self.O if O is None else O,
            R=self.R,
            gamma=self.gamma,
            initial_state=self.initial_state,
            terminal=self.terminal,
            rewards=self.rewards,
        )

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        rewards = {"R": self.R.tolist()}
        if self.rewards is not None:
            rewards.update(self.rewards.to_dict())
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "gamma": self.gamma,
            "rewards": rewards,
            "T": self.T.tolist(),
            "O": {"flags": list(FLAGS[: self.n_flags]), "rates": self.O.tolist()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> ApomdpModel:
        rewards = dict(data["rewards"])
        R = rewards.pop("R")
        spec = RewardSpec(**rewards) if rewards else None
        states = tuple(data["states"])
        terminal = tuple(i for i, name in enumerate(states) if name in ("GlobalSuccess", "GlobalFail"))
        return cls(
            states=states,
            actions=tuple(data["actions"]),
            T=np.array(data["T"], dtype=float),
            O=np.array(data["O"]["rates"], dtype=float),
            R=np.array(R, dtype=float),
            gamma=float(data["gamma"]),
            terminal=terminal,
            rewards=spec,
        )


def save_model(model: ApomdpModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def load_model(path) -> ApomdpModel:
    return ApomdpModel.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Base model tables

S = RobotState
_TAH, _TAR, _HNS = S.TaskAssignedToHuman, S.TaskAssignedToRobot, S.HumanNotStruggling
_MBT, _MHLA, _MNBC = S.MayBeTired, S.MayHaveLostAttention, S.MayNotBeCapable
_NA, _NAN, _WR = S.NeedsAssistance, S.NoAssistanceNeeded, S.WarningReceived
_GS, _GF = S.GlobalSuccess, S.GlobalFail

_IDLE_ROWS = {
    _TAH: {_HNS: 0.5, _TAH: 0.25, _MHLA: 0.08, _MBT: 0.05, _MNBC: 0.07, _NAN: 0.05},
    _TAR: {_TAR: 0.7, _NAN: 0.2, _HNS: 0.1},
    _HNS: {_HNS: 0.7, _MHLA: 0.08, _MBT: 0.06, _MNBC: 0.06, _NAN: 0.06, _GS: 0.02, _GF: 0.02},
    _MBT: {_MBT: 0.7, _NA: 0.12, _NAN: 0.08, _HNS: 0.1},
    _MHLA: {_MHLA: 0.7, _NA: 0.12, _NAN: 0.08, _HNS: 0.1},
    _MNBC: {_MNBC: 0.7, _NA: 0.14, _NAN: 0.06, _HNS: 0.1},
    _NA: {_NA: 0.7, _HNS: 0.1, _NAN: 0.05, _MBT: 0.04, _MNBC: 0.04, _GS: 0.02, _GF: 0.05},
    _NAN: {_NAN: 0.7, _HNS: 0.2, _MHLA: 0.03, _MBT: 0.03, _NA: 0.02, _GS: 0.02},
    _WR: {_WR: 0.3, _NAN: 0.5, _HNS: 0.2},
}

_TAKEOVER_ROWS = {
    _TAH: {_WR: 0.3, _HNS: 0.45, _NAN: 0.15, _TAH: 0.1},
    _TAR: {_TAR: 0.3, _NAN: 0.4, _HNS: 0.3},
    _HNS: {_WR: 0.3, _HNS: 0.5, _NAN: 0.14, _GS: 0.03, _GF: 0.03},
    _MBT: {_HNS: 0.4, _WR: 0.15, _MBT: 0.3, _NA: 0.15},
    _MHLA: {_HNS: 0.35, _WR: 0.2, _MHLA: 0.35, _NA: 0.1},
    _MNBC: {_HNS: 0.4, _WR: 0.15, _MNBC: 0.35, _NA: 0.1},
    _NA: {_HNS: 0.6, _NA: 0.25, _WR: 0.05, _GS: 0.05, _GF: 0.05},
    _NAN: {_WR: 0.45, _NAN: 0.4, _HNS: 0.15},
    _WR: {_WR: 0.6, _NAN: 0.3, _HNS: 0.1},
}

_POINT_ROWS = {
    _TAH: {_HNS: 0.55, _TAH: 0.25, _MHLA: 0.04, _MBT: 0.05, _MNBC: 0.06, _NAN: 0.05},
    _TAR: {_TAR: 0.7, _NAN: 0.2, _HNS: 0.1},
    _HNS: {_HNS: 0.72, _WR: 0.06, _MHLA: 0.04, _MBT: 0.06, _MNBC: 0.06, _NAN: 0.02, _GS: 0.02, _GF: 0.02},
    _MBT: {_MBT: 0.6, _HNS: 0.15, _NA: 0.2, _NAN: 0.05},
    _MHLA: {_HNS: 0.55, _MHLA: 0.3, _NA: 0.1, _NAN: 0.05},
    _MNBC: {_MNBC: 0.6, _HNS: 0.15, _NA: 0.2, _NAN: 0.05},
    _NA: {_NA: 0.65, _HNS: 0.15, _MBT: 0.05, _MNBC: 0.05, _GS: 0.02, _GF: 0.08},
    _NAN: {_NAN: 0.55, _WR: 0.2, _HNS: 0.2, _MHLA: 0.05},
    _WR: {_WR: 0.5, _NAN: 0.4, _HNS: 0.1},
}

_CANCEL_ROWS = dict(_IDLE_ROWS)
_CANCEL_ROWS[_WR] = {_NAN: 0.7, _HNS: 0.25, _WR: 0.05}

_ACTION_ROWS = {
    RobotAction.Idle: _IDLE_ROWS,
    RobotAction.Plan: _IDLE_ROWS,
    RobotAction.TakeOver: _TAKEOVER_ROWS,
    RobotAction.PointToRemind: _POINT_ROWS,
    RobotAction.Cancel: _CANCEL_ROWS,
}

# Per-state flag rates, in FLAGS order.
_OBS_RATES = {
    _TAH: [0.95, 0.10, 0.40, 0.02, 0.45, 0, 0, 0.05, 0.05],
    _TAR: [0.90, 0.10, 0.10, 0.02, 0.60, 0, 0, 0.20, 0.05],
    _HNS: [0.98, 0.05, 0.55, 0.02, 0.35, 0, 0, 0.35, 0.05],
    _MBT: [0.85, 0.10, 0.10, 0.02, 0.75, 0, 0, 0.05, 0.20],
    _MHLA: [0.90, 0.75, 0.05, 0.02, 0.15, 0, 0, 0.05, 0.15],
    _MNBC: [0.95, 0.10, 0.45, 0.02, 0.40, 0, 0, 0.05, 0.45],
    _NA: [0.40, 0.20, 0.10, 0.02, 0.40, 0, 0, 0.05, 0.40],
    _NAN: [0.98, 0.05, 0.50, 0.05, 0.40, 0, 0, 0.30, 0.05],
    _WR: [0.98, 0.05, 0.05, 0.90, 0.05, 0, 0, 0.05, 0.05],
    _GS: [0.90, 0.10, 0.20, 0.02, 0.50, 1, 0, 0.50, 0.20],
    _GF: [0.90, 0.10, 0.20, 0.02, 0.50, 0, 1, 0.20, 0.50],
}
_TAKEOVER_SUCCESS_BOOST = 0.3


def _reward_table(spec: RewardSpec) -> np.ndarray:
    su, f, w = spec.subtaskSuccessByOther, spec.subtaskFail, spec.warningPenalty
    A = RobotAction
    rows = {
        _TAH: {A.TakeOver: 0.5 * w, A.PointToRemind: 0.1 * w},
        _TAR: {A.Idle: 0.5 * f, A.Plan: 0.25 * f, A.TakeOver: su, A.Cancel: 0.5 * f},
        _HNS: {A.Idle: 0.25 * su, A.TakeOver: w, A.PointToRemind: 0.25 * w},
        _MBT: {A.Idle: 0.125 * f, A.Plan: 0.1 * su, A.TakeOver: 0.5 * (su + w) / 2},
        _MHLA: {A.Idle: 0.125 * f, A.Plan: 0.1 * su, A.TakeOver: 0.5 * (su + w), A.PointToRemind: 0.5 * su},
        _MNBC: {A.Idle: 0.125 * f, A.Plan: 0.1 * su, A.TakeOver: 0.5 * (su + w) / 2, A.PointToRemind: 0.25 * su},
        _NA: {A.Idle: 0.5 * f, A.TakeOver: su, A.PointToRemind: 0.25 * f, A.Cancel: 0.5 * f},
        _NAN: {A.Idle: 0.25 * su, A.Plan: 0.25 * w, A.TakeOver: w, A.PointToRemind: 0.5 * w},
    }
    R = np.zeros((len(RobotState), len(RobotAction)))
    for s, entries in rows.items():
        for a, value in entries.items():
            R[s, a] = value
    R[_WR, :] = w
    R[_GS, :] = spec.globalSuccess
    R[_GF, :] = spec.globalFail
    return R


def build_base_model(spec: RewardSpec | None = None, gamma: float = 0.95) -> ApomdpModel:
    """Return the hand-authored 11-state, 5-action base model."""
    spec = RewardSpec() if spec is None else spec
    spec.validate()
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError("gamma must lie in (0, 1)")
    nS, nA = len(RobotState), len(RobotAction)
    T = np.zeros((nS, nA, nS))
    for a, rows in _ACTION_ROWS.items():
        for s, row in rows.items():
            for s2, p in row.items():
                T[s, a, s2] = p
    for s in (_GS, _GF):
        T[s, :, s] = 1.0
    O = np.zeros((nS, nA, N_FLAGS))
    for s, rates in _OBS_RATES.items():
        O[s, :, :] = rates
    nonterminal = [s for s in RobotState if STATE_KIND[s] != "terminal"]
    boosted = O[nonterminal, RobotAction.TakeOver, FLAG_INDEX["subtaskSuccess"]] + _TAKEOVER_SUCCESS_BOOST
    O[nonterminal, RobotAction.TakeOver, FLAG_INDEX["subtaskSuccess"]] = np.minimum(boosted, 0.95)
    return ApomdpModel(
        states=tuple(s.name for s in RobotState),
        actions=tuple(a.name for a in RobotAction),
        T=T,
        O=O,
        R=_reward_table(spec),
        gamma=gamma,
        initial_state=int(RobotState.TaskAssignedToHuman),
        terminal=(int(_GS), int(_GF)),
        rewards=spec,
    )


# ---------------------------------------------------------------------------
# Belief maintenance


def belief_update(model: ApomdpModel, belief: np.ndarray, action: int, sigma) -> np.ndarray:
    """Bayes filter step b'(s') ∝ O(σ|s',a) Σ_s T(s'|s,a) b(s)."""
    unnorm = model.likelihood(sigma, action) * model.predict(belief, action)
    z = unnorm.sum()
    if not z > 0.0:
        raise ImpossibleObservation(f"observation {np.asarray(sigma, dtype=int).tolist()} has zero likelihood")
    return unnorm / z


def reset_belief(model: ApomdpModel) -> np.ndarray:
    """Fallback belief after an impossible observation."""
    return model.initial_belief()


# ---------------------------------------------------------------------------
# Library generation


def perturb_model(base: ApomdpModel, magnitude: float, seed: int) -> ApomdpModel:
    """Multiply nonzero T and O entries by Uniform(1-m, 1+m) factors and renormalize."""
    if not 0.0 < magnitude <= 1.0:
        raise ConfigurationError("magnitude must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    lo, hi = 1.0 - magnitude, 1.0 + magnitude
    T = base.T * rng.uniform(lo, hi, size=base.T.shape)
    T = np.where(base.T > 0, np.maximum(T, 1e-12), 0.0)
    for s in base.terminal:
        T[s] = 0.0
        T[s, :, s] = 1.0
    T = T / T.sum(axis=2, keepdims=True)
    on = base.O * rng.uniform(lo, hi, size=base.O.shape)
    off = (1.0 - base.O) * rng.uniform(lo, hi, size=base.O.shape)
    on = np.where(base.O > 0, np.maximum(on, 1e-12), 0.0)
    off = np.where(base.O < 1, np.maximum(off, 1e-12), 0.0)
    O = on / (on + off)
    return base.with_tables(T=T, O=O)


def sharpen_observations(model: ApomdpModel, power: float, states: Iterable[int] | None = None) -> ApomdpModel:
    """Push flag rates toward 0/1 (power > 1) to make states closer to fully observable."""
    O = np.array(model.O)
    idx = list(range(model.n_states)) if states is None else list(states)
    r = O[idx]
    num = r**power
    O[idx] = num / (num + (1.0 - r) ** power)
    return model.with_tables(O=O)


# ---------------------------------------------------------------------------
# Reactive baseline


@dataclass(frozen=True)
class ReactivePolicy:
    """Deterministic controller treating the need for help as directly observable."""

    timeout_ticks: int

    def decide(self, sigma, elapsed_ticks: int) -> RobotAction:
        s = np.asarray(sigma, dtype=bool)
        if elapsed_ticks >= self.timeout_ticks:
            return RobotAction.TakeOver
        if not s[FLAG_INDEX["humanDetected"]]:
            return RobotAction.TakeOver
        if s[FLAG_INDEX["subtaskFail"]]:
            return RobotAction.TakeOver
        return RobotAction.Idle


def make_reactive_policy(timeout_ticks: int) -> ReactivePolicy:
    if timeout_ticks < 1:
        raise ConfigurationError("timeout_ticks must be >= 1")
    return ReactivePolicy(int(timeout_ticks))


def random_flag_vector(rng: np.random.Generator) -> np.ndarray:
    """Uniform random flag vector, ignoring the exclusion rules."""
    return rng.random(N_FLAGS) < 0.5


def flags_to_str(sigma: Sequence[bool]) -> str:
    return "".join("1" if x else "0" for x in sigma)
