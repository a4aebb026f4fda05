"""Offline training: table estimation from labeled traces, library generation, pair simulation and pruning."""

from __future__ import annotations

import csv
import io
import itertools
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .abps import ObservationModel, PerformanceModel, PolicyLibrary
from .apomdp import (
    N_FLAGS,
    ApomdpModel,
    RobotAction,
    RobotState,
    perturb_model,
    sharpen_observations,
)
from .env import EpisodeLog, TaskConfig
from .errors import TrainingError
from .human import HumanState, HumanType, InteractionCounters, build_human_model
from .simulation import ProactiveController, run_episode
from .solver import SolverConfig

TV_THRESHOLD = 0.15


def estimate_tables(
    transitions: Sequence[tuple],
    observations: Sequence[tuple],
    n_states: int,
    n_actions: int,
    n_flags: int = N_FLAGS,
    support: np.ndarray | None = None,
    fixed_rates: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Add-one smoothed maximum-likelihood T and per-flag O from labeled tuples.

    ``transitions`` holds (s, a, s') and ``observations`` holds (s', a, sigma).
    ``support`` (bool, shape of T) restricts smoothing to allowed entries.
    ``fixed_rates`` (shape of O, NaN where free) pins rates that are 0 or 1
    by construction.
    """
    if len(transitions) == 0 and len(observations) == 0:
        raise TrainingError("no traces to estimate from")
    counts = np.zeros((n_states, n_actions, n_states))
    for s, a, s2 in transitions:
        counts[s, a, s2] += 1
    mask = np.ones_like(counts, dtype=bool) if support is None else np.asarray(support, dtype=bool)
    smoothed = np.where(mask, counts + 1.0, 0.0)
    sums = smoothed.sum(axis=2, keepdims=True)
    T = np.divide(smoothed, sums, out=np.zeros_like(smoothed), where=sums > 0)

    true = np.zeros((n_states, n_actions, n_flags))
    total = np.zeros((n_states, n_actions))
    for s2, a, sigma in observations:
        true[s2, a] += np.asarray(sigma, dtype=float)
        total[s2, a] += 1
    O = (true + 1.0) / (total[..., None] + 2.0)
    if fixed_rates is not None:
        fixed = np.asarray(fixed_rates, dtype=float)
        O = np.where(np.isnan(fixed), O, fixed)
    return T, O


def sample_chain(T: np.ndarray, start: int, steps: int, rng: np.random.Generator, action: int = 0) -> list[tuple]:
    """(s, a, s') tuples of a Markov chain run under one fixed action."""
    out, s = [], start
    cdf = np.cumsum(T[:, action, :], axis=1)
    u = rng.random(steps)
    for k in range(steps):
        s2 = int(min(np.searchsorted(cdf[s], u[k] * cdf[s, -1], side="right"), T.shape[2] - 1))
        out.append((s, action, s2))
        s = s2
    return out


# ---------------------------------------------------------------------------
# Labeling simulated traces with decision-model states

S = RobotState
_STAGE1 = (S.MayBeTired, S.MayHaveLostAttention, S.MayNotBeCapable)


def label_decisions(log: EpisodeLog, timeout_ticks: int) -> list[tuple[int, int, np.ndarray]]:
    """Decision-step sequence of (robot state, action in force, observation).

    The simulator's ground-truth human state stands in for the hidden
    decision-model state. A stage-1 suspicion follows a drifting human
    state or a failed placement; it becomes NeedsAssistance when the cube
    has waited half the belt timeout, and an engaged human right after a
    suspicion is labeled NoAssistanceNeeded.
    """
    recs = log.records
    out = [(int(S.TaskAssignedToHuman), int(RobotAction.Idle), None)]
    action = RobotAction[recs[0]["robotAction"]] if recs else RobotAction.Idle
    prev = S.TaskAssignedToHuman
    human_failed = False
    for i, r in enumerate(recs):
        if r["resolvedBy"] is not None:
            human_failed = r["resolvedBy"] == "Human" and bool(r["sigma"][8])
        last = i == len(recs) - 1
        if not (r["decided"] or last):
            continue
        hs = HumanState[r["humanState"]]
        waited = r["cubeWait"] >= timeout_ticks / 2
        if last:
            lab = S.GlobalSuccess if log.summary and log.summary.get("taskSuccess") else S.GlobalFail
        elif hs == HumanState.WarnTheRobot:
            lab = S.WarningReceived
        elif hs == HumanState.LostMotivation:
            lab = S.NeedsAssistance
        elif hs in (HumanState.NoAttention, HumanState.Tired):
            if waited:
                lab = S.NeedsAssistance
            else:
                lab = S.MayHaveLostAttention if hs == HumanState.NoAttention else S.MayBeTired
        elif human_failed:
            lab = S.NeedsAssistance if waited else S.MayNotBeCapable
        elif prev in _STAGE1 or prev == S.NeedsAssistance:
            lab = S.NoAssistanceNeeded
        else:
            lab = S.HumanNotStruggling
        out.append((int(lab), int(action), np.asarray(r["sigma"], dtype=bool)))
        action = RobotAction[r["robotAction"]] if last else _next_action(recs, i)
        prev = lab
    return out


def _next_action(recs, i) -> RobotAction:
    return RobotAction[recs[i + 1]["robotAction"]] if i + 1 < len(recs) else RobotAction.Idle


def labeled_tuples(logs: Sequence[EpisodeLog], timeout_ticks: int) -> tuple[list, list]:
    transitions, observations = [], []
    for log in logs:
        seq = label_decisions(log, timeout_ticks)
        for (s, _, _), (s2, a, sigma) in itertools.pairwise(seq):
            transitions.append((s, a, s2))
            observations.append((s2, a, sigma))
    return transitions, observations


def retrain_model(base: ApomdpModel, logs: Sequence[EpisodeLog], timeout_ticks: int, min_count: int = 30) -> ApomdpModel:
    """Refit T and O on labeled traces, keeping base rows where data is thin.

    Base structural zeros stay zero, and flag rates that are exactly 0 or 1
    in the base model stay pinned.
    """
    transitions, observations = labeled_tuples(logs, timeout_ticks)
    nS, nA, nF = base.n_states, base.n_actions, base.n_flags
    fixed = np.where((base.O == 0) | (base.O == 1), base.O, np.nan)
    T, O = estimate_tables(transitions, observations, nS, nA, nF, support=base.T > 0, fixed_rates=fixed)
    t_rows = np.zeros((nS, nA))
    o_rows = np.zeros((nS, nA))
    for s, a, _ in transitions:
        t_rows[s, a] += 1
    for s2, a, _ in observations:
        o_rows[s2, a] += 1
    T = np.where((t_rows >= min_count)[..., None], T, base.T)
    O = np.where((o_rows >= min_count)[..., None], O, base.O)
    for s in base.terminal:
        T[s] = 0.0
        T[s, :, s] = 1.0
        O[s] = base.O[s]
    return base.with_tables(T=T, O=O)


# ---------------------------------------------------------------------------
# Library generation and pair training


@dataclass(frozen=True)
class LibrarySpec:
    """How candidate policies are derived from the base model."""

    size: int = 8
    magnitudes: tuple = (0.2, 0.5, 0.8)
    sharpen_every: int = 3
    sharpen_power: float = 2.0
    seed: int = 0


def generate_library(base: ApomdpModel, spec: LibrarySpec) -> PolicyLibrary:
    """Base model plus seeded perturbations; every ``sharpen_every``-th one is made more observable."""
    ids, models, meta = [0], [base], {"0": {"magnitude": 0.0, "seed": None, "sharpened": False}}
    ss = np.random.SeedSequence(spec.seed)
    seeds = [int(x) for x in ss.generate_state(max(spec.size - 1, 1))]
    for k in range(1, spec.size):
        mag = spec.magnitudes[(k - 1) % len(spec.magnitudes)]
        m = perturb_model(base, mag, seeds[k - 1])
        sharp = spec.sharpen_every > 0 and k % spec.sharpen_every == 0
        if sharp:
            m = sharpen_observations(m, spec.sharpen_power)
        ids.append(k)
        models.append(m)
        meta[str(k)] = {"magnitude": mag, "seed": seeds[k - 1], "sharpened": sharp}
    return PolicyLibrary(ids, models, {"librarySeed": spec.seed, "perPolicy": meta})


@dataclass
class TrainingPlan:
    types: list
    library: PolicyLibrary
    episodes_per_pair: int = 10
    seed: int = 0
    task: TaskConfig = field(default_factory=TaskConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    human_seed: int = 0

    def __post_init__(self):
        if self.episodes_per_pair < 1:
            raise TrainingError("episodes_per_pair must be >= 1")

    @property
    def scheduled_episodes(self) -> int:
        return len(self.types) * len(self.library) * self.episodes_per_pair


@dataclass
class TrainingResult:
    observation: ObservationModel
    performance: PerformanceModel
    returns: dict
    logs: dict

    def summary_rows(self) -> list[dict]:
        rows = []
        for (i, j), values in sorted(self.returns.items()):
            v = np.asarray(values, dtype=float)
            rows.append(
                {
                    "type": self.performance.types[i],
                    "policy": self.performance.policies[j],
                    "meanReturn": float(v.mean()),
                    "stdReturn": float(v.std()),
                    "episodes": len(v),
                }
            )
        return rows


def summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["type", "policy", "meanReturn", "stdReturn", "episodes"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "meanReturn": f"{r['meanReturn']:.6f}", "stdReturn": f"{r['stdReturn']:.6f}"})
    return buf.getvalue()


def run_cell(plan: TrainingPlan, i: int, j: int, keep_logs: bool = False) -> tuple[list, np.ndarray, np.ndarray, list]:
    """Episodes of type i against policy j, run as one sequence of tasks.

    Returns (discounted returns, flag true-counts, tick count, logs).
    """
    t: HumanType = plan.types[i]
    human = build_human_model(t, seed=plan.human_seed)
    controller = ProactiveController(plan.library.models[j], plan.solver)
    counters, experience = InteractionCounters(), 0
    returns, true, total, logs = [], np.zeros(N_FLAGS), 0, []
    for e in range(plan.episodes_per_pair):
        res = run_episode(plan.task, human, controller, [plan.seed, i, j, e], counters, experience)
        counters, experience = res.counters, res.experience
        returns.append(res.log.summary["discountedReturn"])
        sig = res.log.sigmas()
        true += sig.sum(axis=0)
        total += sig.shape[0]
        if keep_logs:
            logs.append(res.log)
    return returns, true, total, logs


def train_models(plan: TrainingPlan, keep_logs: bool = False, bins: int = 20) -> TrainingResult:
    """Simulate every (type, policy) cell and fit the observation and performance models."""
    nT, nP = len(plan.types), len(plan.library)
    true = np.zeros((nT, nP, N_FLAGS))
    totals = np.zeros((nT, nP))
    returns, logs = {}, {}
    for i in range(nT):
        for j in range(nP):
            r, tc, n, lg = run_cell(plan, i, j, keep_logs)
            returns[(i, j)] = r
            true[i, j] = tc
            totals[i, j] = n
            if keep_logs:
                logs[(i, j)] = lg
    labels = [t.label() for t in plan.types]
    obs = ObservationModel(labels, list(plan.library.ids), true, totals)
    perf = PerformanceModel.fit(labels, list(plan.library.ids), returns, bins=bins)
    return TrainingResult(obs, perf, returns, logs)


# ---------------------------------------------------------------------------
# Pruning


def _tv(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def policy_signatures(perf: PerformanceModel, beta: np.ndarray | None = None) -> np.ndarray:
    """Belief-averaged return histogram of each policy (uniform belief by default)."""
    nT = len(perf.types)
    beta = np.full(nT, 1.0 / nT) if beta is None else np.asarray(beta, dtype=float)
    return np.einsum("t,tpb->pb", beta, perf.masses)


def prune_library(candidates: PolicyLibrary, perf: PerformanceModel, keep: int, threshold: float = TV_THRESHOLD) -> PolicyLibrary:
    """Drop the worst quartile by mean return, then keep distinct performers.

    Policies whose averaged histograms lie within ``threshold`` total
    variation of each other form one cluster (single linkage). One
    representative per cluster is taken, best mean return first; leftover
    slots are filled by farthest-point selection.
    """
    n = len(candidates)
    if keep < 1 or keep > n:
        raise TrainingError("keep must lie in 1..len(candidates)")
    if list(perf.policies) != list(candidates.ids):
        raise TrainingError("performance model does not match the candidate library")
    mean_return = perf.expected.mean(axis=0)
    order = sorted(range(n), key=lambda j: (-mean_return[j], j))
    n_drop = min(n // 4, n - keep)
    survivors = sorted(order[: n - n_drop], key=lambda j: (-mean_return[j], j))
    sig = policy_signatures(perf)

    parent = {j: j for j in survivors}

    def find(j):
        while parent[j] != j:
            parent[j] = parent[parent[j]]
            j = parent[j]
        return j

    for a in survivors:
        for b in survivors:
            if a < b and _tv(sig[a], sig[b]) < threshold:
                parent[find(b)] = find(a)
    chosen, seen = [], set()
    for j in survivors:
        root = find(j)
        if root not in seen:
            seen.add(root)
            chosen.append(j)
    if len(chosen) > keep:
        chosen = _farthest(chosen[:1], chosen[1:], sig, keep)
    elif len(chosen) < keep:
        rest = [j for j in survivors if j not in chosen]
        chosen = _farthest(chosen, rest, sig, keep)
    keep_ids = [candidates.ids[j] for j in sorted(chosen)]
    return candidates.subset(keep_ids)


def _farthest(chosen: list, pool: list, sig: np.ndarray, keep: int) -> list:
    chosen, pool = list(chosen), list(pool)
    while len(chosen) < keep and pool:
        best = max(pool, key=lambda j: (min(_tv(sig[j], sig[c]) for c in chosen), -j))
        chosen.append(best)
        pool.remove(best)
    return chosen
