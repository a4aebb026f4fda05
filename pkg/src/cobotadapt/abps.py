"""Bayesian policy selection over a library of pre-built decision models.

A belief over human types is updated once per task from the observation
vectors collected during that task. The next policy is the one with the
largest belief-weighted probability of beating the current best estimate
(expected improvement).
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .apomdp import N_FLAGS, ApomdpModel
from .errors import ConfigurationError
from .human import HumanType

DEFAULT_BINS = 20
NORM_TOL = 1e-9


@dataclass
class PolicyLibrary:
    ids: list
    models: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ids) != len(self.models):
            raise ConfigurationError("ids and models differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ConfigurationError("policy ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    def model(self, pid) -> ApomdpModel:
        return self.models[self.ids.index(pid)]

    def subset(self, keep_ids: Sequence) -> PolicyLibrary:
        order = [pid for pid in self.ids if pid in set(keep_ids)]
        meta = dict(self.metadata)
        per = meta.get("perPolicy")
        if isinstance(per, dict):
            meta["perPolicy"] = {str(p): per[str(p)] for p in order if str(p) in per}
        return PolicyLibrary(order, [self.model(p) for p in order], meta)

    def to_dict(self) -> dict:
        return {
            "ids": list(self.ids),
            "metadata": self.metadata,
            "models": [m.to_dict() for m in self.models],
        }

    @classmethod
    def from_dict(cls, d: dict) -> PolicyLibrary:
        return cls(list(d["ids"]), [ApomdpModel.from_dict(m) for m in d["models"]], dict(d.get("metadata", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> PolicyLibrary:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _type_keys(types) -> list[str]:
    return [t.label() if isinstance(t, HumanType) else str(t) for t in types]


class ObservationModel:
    """Per (type, policy) Bernoulli rates of the 9 flags, Laplace-smoothed."""

    def __init__(self, types: Sequence, policies: Sequence, true_counts: np.ndarray, totals: np.ndarray):
        self.types = list(types)
        self.policies = list(policies)
        self.true_counts = np.asarray(true_counts, dtype=float)
        self.totals = np.asarray(totals, dtype=float)
        shape = (len(self.types), len(self.policies), N_FLAGS)
        if self.true_counts.shape != shape or self.totals.shape != shape[:2]:
            raise ConfigurationError(f"observation counts must have shape {shape}")
        self.rates = (self.true_counts + 1.0) / (self.totals[..., None] + 2.0)

    @classmethod
    def from_rates(cls, types, policies, rates: np.ndarray) -> ObservationModel:
        """Wrap fixed rates (no counts), e.g. for synthetic tests."""
        rates = np.asarray(rates, dtype=float)
        if np.any(rates <= 0) or np.any(rates >= 1):
            raise ConfigurationError("rates must lie strictly inside (0, 1)")
        m = cls(types, policies, np.zeros(rates.shape), np.zeros(rates.shape[:2]))
        m.rates = rates
        return m

    def column(self, pid) -> int:
        try:
            return self.policies.index(pid)
        except ValueError:
            raise ConfigurationError(f"unknown policy {pid!r}") from None

    def log_likelihood(self, pid, sigmas) -> np.ndarray:
        """log P(observations | type, pid) for every type."""
        X = np.asarray(sigmas, dtype=float).reshape(-1, N_FLAGS)
        r = self.rates[:, self.column(pid), :]
        ones = X.sum(axis=0)
        zeros = X.shape[0] - ones
        return np.log(r) @ ones + np.log1p(-r) @ zeros

    def to_dict(self) -> dict:
        return {
            "types": _type_keys(self.types),
            "policies": list(self.policies),
            "bernoulliRates": self.rates.tolist(),
            "trueCounts": self.true_counts.tolist(),
            "totals": self.totals.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ObservationModel:
        m = cls(d["types"], d["policies"], np.array(d["trueCounts"]), np.array(d["totals"]))
        m.rates = np.array(d["bernoulliRates"], dtype=float)
        return m


class PerformanceModel:
    """Per (type, policy) histograms of discounted task returns on shared bins."""

    def __init__(self, types: Sequence, policies: Sequence, edges: np.ndarray, masses: np.ndarray):
        self.types = list(types)
        self.policies = list(policies)
        self.edges = np.asarray(edges, dtype=float)
        self.masses = np.asarray(masses, dtype=float)
        if self.edges.ndim != 1 or len(self.edges) < 2 or np.any(np.diff(self.edges) <= 0):
            raise ConfigurationError("bin edges must be strictly increasing")
        if self.masses.shape != (len(self.types), len(self.policies), len(self.edges) - 1):
            raise ConfigurationError("mass table shape does not match types, policies and bins")
        if np.any(self.masses < 0) or np.any(np.abs(self.masses.sum(axis=2) - 1.0) > NORM_TOL):
            raise ConfigurationError("every histogram must be a probability distribution")
        self.midpoints = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.expected = self.masses @ self.midpoints

    @classmethod
    def fit(cls, types, policies, returns: dict, bins: int = DEFAULT_BINS, pseudo: float = 1.0) -> PerformanceModel:
        """``returns[(i, j)]`` lists the training returns of type i with policy j."""
        all_values = np.concatenate([np.asarray(v, dtype=float) for v in returns.values()])
        lo, hi = float(all_values.min()), float(all_values.max())
        if hi - lo < 1e-9:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        masses = np.zeros((len(types), len(policies), bins))
        for i in range(len(types)):
            for j in range(len(policies)):
                if (i, j) not in returns:
                    raise ConfigurationError(f"no returns for pair {(i, j)}")
                counts, _ = np.histogram(returns[(i, j)], bins=edges)
                masses[i, j] = (counts + pseudo) / (counts.sum() + pseudo * bins)
        return cls(types, policies, edges, masses)

    def cdf(self, u: float) -> np.ndarray:
        """F(u | type, policy) with linear interpolation inside the bin holding u."""
        e = self.edges
        if u <= e[0]:
            return np.zeros(self.masses.shape[:2])
        if u >= e[-1]:
            return np.ones(self.masses.shape[:2])
        b = int(np.searchsorted(e, u, side="right")) - 1
        below = self.masses[..., :b].sum(axis=-1)
        frac = (u - e[b]) / (e[b + 1] - e[b])
        return below + frac * self.masses[..., b]

    def bin_of(self, u: float) -> int:
        b = int(np.searchsorted(self.edges, u, side="right")) - 1
        return min(max(b, 0), len(self.edges) - 2)

    def to_dict(self) -> dict:
        return {
            "types": _type_keys(self.types),
            "policies": list(self.policies),
            "histogram": {"edges": self.edges.tolist(), "masses": self.masses.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> PerformanceModel:
        h = d["histogram"]
        return cls(d["types"], d["policies"], np.array(h["edges"]), np.array(h["masses"]))


def save_trained(obs: ObservationModel, perf: PerformanceModel, path) -> None:
    doc = {
        "types": _type_keys(obs.types),
        "policies": list(obs.policies),
        "bernoulliRates": obs.rates.tolist(),
        "observationCounts": {"trueCounts": obs.true_counts.tolist(), "totals": obs.totals.tolist()},
        "histogram": {"edges": perf.edges.tolist(), "masses": perf.masses.tolist()},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_trained(path) -> tuple[ObservationModel, PerformanceModel]:
    d = json.loads(Path(path).read_text())
    c = d["observationCounts"]
    obs = ObservationModel.from_dict(
        {
            "types": d["types"],
            "policies": d["policies"],
            "bernoulliRates": d["bernoulliRates"],
            "trueCounts": c["trueCounts"],
            "totals": c["totals"],
        }
    )
    perf = PerformanceModel.from_dict({"types": d["types"], "policies": d["policies"], "histogram": d["histogram"]})
    return obs, perf


# ---------------------------------------------------------------------------
# Selection


def uniform_type_belief(n_types: int) -> np.ndarray:
    return np.full(n_types, 1.0 / n_types)


def update_type_belief(beta: np.ndarray, obs: ObservationModel, pid, sigmas) -> np.ndarray:
    """beta'(type) ∝ P(observations | type, pid) beta(type), computed in log space."""
    X = np.asarray(sigmas).reshape(-1, N_FLAGS)
    beta = np.asarray(beta, dtype=float)
    if X.shape[0] == 0:
        return beta.copy()
    with np.errstate(divide="ignore"):
        logp = np.log(beta) + obs.log_likelihood(pid, X)
    if not np.isfinite(logp).any():
        return beta.copy()
    return np.exp(logp - logsumexp(logp))


def _check_pairs(perf: PerformanceModel, beta: np.ndarray) -> None:
    if len(beta) != len(perf.types):
        raise ConfigurationError("type belief does not match the performance model")


def u_beta(perf: PerformanceModel, beta: np.ndarray) -> float:
    """Best belief-weighted expected utility over the library."""
    beta = np.asarray(beta, dtype=float)
    _check_pairs(perf, beta)
    return float((beta @ perf.expected).max())


def expected_improvement(perf: PerformanceModel, beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    ub = u_beta(perf, beta)
    return beta @ (1.0 - perf.cdf(ub))


def _first_max(values: np.ndarray) -> int:
    return int(np.flatnonzero(values >= values.max() - 1e-12)[0])


def select_policy_ei(perf: PerformanceModel, beta: np.ndarray):
    """Policy with the largest belief-weighted mass above U^beta; ties to the lowest id."""
    return perf.policies[_first_max(expected_improvement(perf, beta))]


def select_policy_pi(perf: PerformanceModel, beta: np.ndarray, u_plus: float):
    """Policy most likely to land in the bin of the target utility u_plus."""
    beta = np.asarray(beta, dtype=float)
    _check_pairs(perf, beta)
    b = perf.bin_of(u_plus)
    return perf.policies[_first_max(beta @ perf.masses[..., b])]


@dataclass(frozen=True)
class RegretRecord:
    task_id: int
    utility: float
    reference: float

    @property
    def regret(self) -> float:
        return self.reference - self.utility


def regret_reference(perf: PerformanceModel) -> float:
    """Mean over types of the best expected return in the library."""
    return float(perf.expected.max(axis=1).mean())


def task_regret(utility: float, perf: PerformanceModel, task_id: int = 0) -> RegretRecord:
    return RegretRecord(task_id=task_id, utility=float(utility), reference=regret_reference(perf))
