"""Online action selection by depth-bounded lookahead over the belief tree.

``plan_action`` is the planner used in simulation. ``exact_plan`` is a slow
pure-Python enumeration used as a test oracle on tiny models.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .apomdp import ApomdpModel
from .errors import ConfigurationError, SizeGuardError

TIE_TOL = 1e-12
MAX_ENUM_FLAGS = 12


@dataclass(frozen=True)
class SolverConfig:
    """Lookahead depth (decision steps), observation samples per action node, and RNG seed.

    ``width=None`` replaces sampling by an exact expectation over every
    observation vector with nonzero probability.
    """

    depth: int = 2
    width: int | None = 4
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError("depth must be >= 1")
        if self.width is not None and self.width < 1:
            raise ConfigurationError("width must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> SolverConfig:
        return cls(depth=int(d.get("depth", 2)), width=d.get("width", 4), seed=int(d.get("seed", 0)))


def _argmax_first(values) -> int:
    best = max(values)
    for i, v in enumerate(values):
        if v >= best - TIE_TOL:
            return i
    return 0


def _informative_flags(rates: np.ndarray) -> np.ndarray:
    """Flags whose rate differs between states; the rest cancel in the posterior."""
    return np.flatnonzero(np.ptp(rates, axis=0) > 0)


class _Lookahead:
    def __init__(self, model: ApomdpModel, cfg: SolverConfig):
        self.model = model
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.R = model.R
        self.gamma = model.gamma
        self.nA = model.n_actions
        self.pow2 = 1 << np.arange(model.n_flags, dtype=np.int64)
        self._enum_cache: dict = {}

    def q_values(self, belief: np.ndarray, depth: int) -> np.ndarray:
        return np.array([self._q(belief, a, depth) for a in range(self.nA)])

    def _value(self, belief: np.ndarray, depth: int) -> float:
        if depth == 0:
            return 0.0
        if depth == 1:
            return float((belief @ self.R).max())
        return max(self._q(belief, a, depth) for a in range(self.nA))

    def _children(self, pred: np.ndarray, a: int):
        """Posterior beliefs and their weights for one action node."""
        O = self.model.O[:, a, :]
        if self.cfg.width is None:
            inf, combos = self._enumeration(a)
            Oi = O[:, inf]
            lik = np.where(combos[:, None, :], Oi[None], 1.0 - Oi[None]).prod(axis=2)
            joint = lik * pred
            prob = joint.sum(axis=1)
            keep = prob > 0
            return joint[keep] / prob[keep, None], prob[keep]
        width = self.cfg.width
        cdf = np.cumsum(pred)
        states = np.minimum(np.searchsorted(cdf, self.rng.random(width) * cdf[-1], side="right"), len(pred) - 1)
        flags = self.rng.random((width, O.shape[1])) < O[states]
        keys = flags @ self.pow2
        _, first, counts = np.unique(keys, return_index=True, return_counts=True)
        sig = flags[first]
        lik = np.where(sig[:, None, :], O[None], 1.0 - O[None]).prod(axis=2)
        joint = lik * pred
        return joint / joint.sum(axis=1, keepdims=True), counts / width

    def _enumeration(self, a: int):
        # flags with equal rates in every state cancel from the posterior and
        # marginalize to 1 in the branch probability, so only the rest branch
        if a not in self._enum_cache:
            inf = _informative_flags(self.model.O[:, a, :])
            if len(inf) > MAX_ENUM_FLAGS:
                raise SizeGuardError(f"{len(inf)} informative flags is too many to enumerate")
            combos = np.array(list(itertools.product([False, True], repeat=len(inf))), dtype=bool)
            self._enum_cache[a] = (inf, combos.reshape(-1, len(inf)))
        return self._enum_cache[a]

    def _q(self, belief: np.ndarray, a: int, depth: int) -> float:
        r = float(belief @ self.R[:, a])
        if depth == 1:
            return r
        pred = self.model.predict(belief, a)
        posts, weights = self._children(pred, a)
        if depth == 2:
            future = float(weights @ (posts @ self.R).max(axis=1))
        else:
            future = sum(w * self._value(p, depth - 1) for p, w in zip(posts, weights))
        return r + self.gamma * future


def lookahead_q(model: ApomdpModel, belief: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Root Q-values of the (sampled or enumerated) lookahead tree."""
    return _Lookahead(model, cfg).q_values(np.asarray(belief, dtype=float), cfg.depth)


def plan_action(model: ApomdpModel, belief: np.ndarray, cfg: SolverConfig) -> int:
    """Action with the best lookahead value; ties go to the earliest declared action."""
    b = np.asarray(belief, dtype=float)
    if model.terminal and model.terminal_mass(b) >= 1.0 - 1e-12:
        return 0
    return _argmax_first(lookahead_q(model, b, cfg).tolist())


# ---------------------------------------------------------------------------
# Exhaustive oracle


def exact_q_values(model: ApomdpModel, belief, horizon: int) -> list[float]:
    """Exact finite-horizon Q-values by full belief-tree expansion (tiny models only)."""
    if model.n_states > 4 or horizon > 5:
        raise SizeGuardError("exact planning needs |S| <= 4 and horizon <= 5")
    T = model.T.tolist()
    O = model.O.tolist()
    R = model.R.tolist()
    nS, nA, nF = model.n_states, model.n_actions, model.n_flags
    gamma = model.gamma

    informative = []
    for a in range(nA):
        flags = [k for k in range(nF) if len({O[s][a][k] for s in range(nS)}) > 1]
        informative.append(flags)

    def q(b, a, h):
        total = sum(b[s] * R[s][a] for s in range(nS))
        if h == 1:
            return total
        pred = [sum(b[s] * T[s][a][s2] for s in range(nS)) for s2 in range(nS)]
        future = 0.0
        flags = informative[a]
        for bits in itertools.product((0, 1), repeat=len(flags)):
            joint = []
            for s2 in range(nS):
                lik = 1.0
                for k, bit in zip(flags, bits):
                    lik *= O[s2][a][k] if bit else 1.0 - O[s2][a][k]
                joint.append(lik * pred[s2])
            p = sum(joint)
            if p <= 0.0:
                continue
            post = [x / p for x in joint]
            future += p * value(post, h - 1)
        return total + gamma * future

    def value(b, h):
        if h == 0:
            return 0.0
        return max(q(b, a, h) for a in range(nA))

    b = [float(x) for x in belief]
    if horizon == 0:
        return [0.0] * nA
    return [q(b, a, horizon) for a in range(nA)]


def exact_plan(model: ApomdpModel, belief, horizon: int) -> tuple[int, float]:
    """Exact finite-horizon optimal action and value."""
    qs = exact_q_values(model, belief, horizon)
    if horizon == 0:
        return 0, 0.0
    a = _argmax_first(qs)
    return a, qs[a]
