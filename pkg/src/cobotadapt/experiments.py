"""Experiment drivers behind the command line: library generation, training, evaluation runs and reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar

import numpy as np

from .abps import (
    ObservationModel,
    PerformanceModel,
    PolicyLibrary,
    load_trained,
    regret_reference,
    save_trained,
    select_policy_ei,
    select_policy_pi,
    uniform_type_belief,
    update_type_belief,
)
from .apomdp import (
    RewardSpec,
    build_base_model,
    load_model,
    make_reactive_policy,
    save_model,
)
from .env import TaskConfig, write_logs
from .errors import ConfigurationError
from .human import (
    HumanType,
    InteractionCounters,
    Level,
    build_human_model,
    likelihood_matrix,
    make_type_space,
    validation_types,
)
from .metrics import compute_metrics, metrics_csv, moving_average
from .simulation import (
    AloneController,
    ProactiveController,
    ReactiveController,
    run_episode,
)
from .solver import SolverConfig
from .trainer import (
    LibrarySpec,
    TrainingPlan,
    generate_library,
    prune_library,
    retrain_model,
    summary_csv,
    train_models,
)

MODES = ("gen-library", "train", "short-term", "long-term", "validate-human", "report")
TRAITS = ("expertise", "stamina", "attention", "collaborativeness")


@dataclass
class ExperimentConfig:
    mode: str | None = None
    K: int = 8
    task_type: int = 5
    seeds: list = field(default_factory=lambda: list(range(11)))
    out_dir: str = "out"
    paths: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    task: dict = field(default_factory=dict)
    rewards: dict = field(default_factory=dict)
    gamma: float = 0.95
    library: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    human_types: dict = field(default_factory=dict)
    type_switch: dict | None = None
    selection: str = "ei"
    u_plus: float | None = None
    reactive_timeout: int = 8
    short_term: dict = field(default_factory=dict)
    validation: dict = field(default_factory=dict)
    record_belief: bool = False
    ma_window: int = 3

    def __post_init__(self):
        if self.mode is not None and self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.K < 1:
            raise ConfigurationError("K must be >= 1")
        if self.task_type not in (1, 2, 3, 4, 5):
            raise ConfigurationError("taskType must be 1..5")
        if self.selection not in ("ei", "pi", "random"):
            raise ConfigurationError("selection must be ei, pi or random")

    _KEYS: ClassVar[dict[str, str]] = {
        "mode": "mode",
        "K": "K",
        "taskType": "task_type",
        "seeds": "seeds",
        "outDir": "out_dir",
        "paths": "paths",
        "solver": "solver",
        "task": "task",
        "rewards": "rewards",
        "gamma": "gamma",
        "library": "library",
        "training": "training",
        "humanTypes": "human_types",
        "typeSwitch": "type_switch",
        "selection": "selection",
        "uPlus": "u_plus",
        "reactiveTimeout": "reactive_timeout",
        "shortTerm": "short_term",
        "validation": "validation",
        "recordBelief": "record_belief",
        "maWindow": "ma_window",
    }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        kwargs = {}
        for k, v in d.items():
            if k not in cls._KEYS:
                raise ConfigurationError(f"unknown configuration key {k!r}")
            kwargs[cls._KEYS[k]] = v
        if "solver" in kwargs:
            kwargs["solver"] = SolverConfig.from_dict(kwargs["solver"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    # -- derived settings

    def task_config(self, task_type: int | None = None) -> TaskConfig:
        d = dict(self.task)
        d["taskType"] = self.task_type if task_type is None else task_type
        return TaskConfig.from_dict(d)

    def reward_spec(self) -> RewardSpec:
        return RewardSpec(**self.rewards)

    def path(self, key: str, default: str) -> Path:
        p = Path(self.paths.get(key, default))
        return p if p.is_absolute() else Path(self.out_dir) / p


# ---------------------------------------------------------------------------
# helpers


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def _cell(x):
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else f"{float(x):.6f}"
    return x


def participant_types(cfg: ExperimentConfig, seed: int) -> tuple[HumanType, HumanType | None]:
    """The simulated participant of a seed, and the type it switches to (if configured)."""
    rng = np.random.default_rng([int(seed), 7919])
    allowed = cfg.human_types.get("types")
    if allowed:
        pool = [HumanType.decode(t) for t in allowed]
    else:
        pool = make_type_space()
    if cfg.type_switch:
        fixed = {t: rng.integers(2) for t in TRAITS}
        before = dict(cfg.type_switch.get("from", {}))
        after = dict(cfg.type_switch.get("to", {}))
        shared = {t: ("Low", "High")[int(fixed[t])] for t in TRAITS}
        t0 = HumanType(*(Level(before.get(t, shared[t])) for t in TRAITS))
        t1 = HumanType(*(Level(after.get(t, shared[t])) for t in TRAITS))
        return t0, t1
    return pool[int(rng.integers(len(pool)))], None


# ---------------------------------------------------------------------------
# gen-library


def run_gen_library(cfg: ExperimentConfig) -> dict:
    """Write the base model and the candidate library."""
    base = build_base_model(cfg.reward_spec(), cfg.gamma)
    lib_cfg = cfg.library
    retrain_eps = int(lib_cfg.get("retrainEpisodes", 0))
    if retrain_eps > 0:
        task = cfg.task_config()
        logs = []
        for i, t in enumerate(make_type_space()):
            human = build_human_model(t, seed=i)
            controller = ProactiveController(base, cfg.solver)
            counters, exp = InteractionCounters(), 0
            for e in range(retrain_eps):
                res = run_episode(task, human, controller, [int(lib_cfg.get("seed", 0)), 99, i, e], counters, exp)
                counters, exp = res.counters, res.experience
                logs.append(res.log)
        base = retrain_model(base, logs, task.belt_timeout_ticks)
    spec = LibrarySpec(
        size=int(lib_cfg.get("size", 8)),
        magnitudes=tuple(lib_cfg.get("magnitudes", (0.2, 0.5, 0.8))),
        sharpen_every=int(lib_cfg.get("sharpenEvery", 3)),
        sharpen_power=float(lib_cfg.get("sharpenPower", 2.0)),
        seed=int(lib_cfg.get("seed", 0)),
    )
    library = generate_library(base, spec)
    base_path = cfg.path("baseModel", "base_model.json")
    cand_path = cfg.path("candidates", "library_candidates.json")
    base_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(base, base_path)
    library.save(cand_path)
    return {"baseModel": base_path, "candidates": cand_path}


# ---------------------------------------------------------------------------
# train


def training_plan(cfg: ExperimentConfig, library: PolicyLibrary, episodes: int | None = None) -> TrainingPlan:
    tr = cfg.training
    types = [HumanType.decode(t) for t in tr["types"]] if "types" in tr else make_type_space()
    return TrainingPlan(
        types=types,
        library=library,
        episodes_per_pair=int(episodes if episodes is not None else tr.get("episodesPerPair", 10)),
        seed=int(tr.get("seed", 0)),
        task=cfg.task_config(tr.get("taskType")),
        solver=cfg.solver,
        human_seed=int(tr.get("humanSeed", 0)),
    )


def _subset_models(obs: ObservationModel, perf: PerformanceModel, ids: list) -> tuple[ObservationModel, PerformanceModel]:
    cols = [obs.policies.index(p) for p in ids]
    o = ObservationModel(obs.types, ids, obs.true_counts[:, cols], obs.totals[:, cols])
    p = PerformanceModel(perf.types, ids, perf.edges, perf.masses[:, cols])
    return o, p


def run_train(cfg: ExperimentConfig, episodes: int | None = None) -> dict:
    cand_path = cfg.path("candidates", "library_candidates.json")
    if not cand_path.exists():
        raise ConfigurationError(f"candidate library {cand_path} not found; run gen-library first")
    candidates = PolicyLibrary.load(cand_path)
    plan = training_plan(cfg, candidates, episodes)
    result = train_models(plan, bins=int(cfg.training.get("bins", 20)))
    keep = int(cfg.training.get("keep", min(20, len(candidates))))
    library = prune_library(candidates, result.performance, keep)
    obs, perf = _subset_models(result.observation, result.performance, list(library.ids))
    lib_path = cfg.path("library", "library.json")
    models_path = cfg.path("models", "trained_models.json")
    summary_path = cfg.path("trainingSummary", "training_summary.csv")
    library.save(lib_path)
    save_trained(obs, perf, models_path)
    _write(summary_path, summary_csv(result.summary_rows()))
    return {"library": lib_path, "models": models_path, "trainingSummary": summary_path}


# ---------------------------------------------------------------------------
# long-term


@dataclass
class LongTermTask:
    seed: int
    task: int
    policy: int
    true_type: str
    row: object
    belief: np.ndarray
    log: object


def _select(cfg: ExperimentConfig, perf: PerformanceModel, beta: np.ndarray, rng: np.random.Generator):
    if cfg.selection == "random":
        return perf.policies[int(rng.integers(len(perf.policies)))]
    if cfg.selection == "pi":
        target = cfg.u_plus if cfg.u_plus is not None else float(perf.edges[-1])
        return select_policy_pi(perf, beta, target)
    return select_policy_ei(perf, beta)


def long_term_seed(
    cfg: ExperimentConfig,
    library: PolicyLibrary,
    obs: ObservationModel,
    perf: PerformanceModel,
    seed: int,
    K: int,
) -> list[LongTermTask]:
    """One simulated participant working K tasks in a row with per-task policy selection."""
    t0, t1 = participant_types(cfg, seed)
    switch_after = int(cfg.type_switch.get("afterTask", K)) if cfg.type_switch else K
    task_cfg = cfg.task_config()
    select_rng = np.random.default_rng([int(seed), 104729])
    humans = {t0: build_human_model(t0, seed=seed)}
    if t1 is not None:
        humans[t1] = build_human_model(t1, seed=seed)
    beta = uniform_type_belief(len(obs.types))
    reference = regret_reference(perf)
    counters, experience = InteractionCounters(), 0
    prev = None
    out = []
    for k in range(K):
        human_type = t1 if (t1 is not None and k >= switch_after) else t0
        pid = _select(cfg, perf, beta, select_rng)
        controller = ProactiveController(library.model(pid), cfg.solver)
        res = run_episode(task_cfg, humans[human_type], controller, [int(seed), 31, k], counters, experience, cfg.record_belief)
        counters, experience = res.counters, res.experience
        beta = update_type_belief(beta, obs, pid, res.log.sigmas())
        row = compute_metrics(res.log, task_id=k, regret=reference - res.log.summary["discountedReturn"], policy_changed=prev is not None and pid != prev)
        out.append(LongTermTask(seed, k, pid, human_type.label(), row, beta.copy(), res.log))
        prev = pid
    return out


def run_long_term(cfg: ExperimentConfig, K: int | None = None) -> dict:
    lib_path = cfg.path("library", "library.json")
    models_path = cfg.path("models", "trained_models.json")
    for p in (lib_path, models_path):
        if not p.exists():
            raise ConfigurationError(f"{p} not found; run gen-library and train first")
    library = PolicyLibrary.load(lib_path)
    obs, perf = load_trained(models_path)
    if list(obs.policies) != list(library.ids):
        raise ConfigurationError("trained models do not match the policy library")
    K = cfg.K if K is None else K
    rows, tasks, beliefs, logs = [], [], [], []
    for si, seed in enumerate(cfg.seeds):
        for t in long_term_seed(cfg, library, obs, perf, seed, K):
            rows.append(replace(t.row, taskId=si * K + t.task))
            tasks.append([seed, t.task, t.policy, t.true_type, t.row.human_attempts, t.row.regret])
            beliefs.append([seed, t.task, *t.belief.tolist()])
            logs.append(t.log)
    prefix = cfg.paths.get("prefix", "long_term")
    out = {
        "metrics": _write(cfg.path("metrics", f"{prefix}_metrics.csv"), metrics_csv(rows)),
        "tasks": _write(
            cfg.path("tasks", f"{prefix}_tasks.csv"),
            _csv(["seed", "task", "policy", "trueType", "humanAttempts", "regret"], tasks),
        ),
        "beliefs": _write(cfg.path("beliefs", f"{prefix}_beliefs.csv"), _csv(["seed", "task", *obs.types], beliefs)),
    }
    episodes = cfg.path("episodes", f"{prefix}_episodes.jsonl")
    write_logs(logs, episodes)
    out["episodes"] = episodes
    return out


# ---------------------------------------------------------------------------
# short-term


CONDITIONS = ("alone", "reactive", "proactive")


def short_term_seed(cfg: ExperimentConfig, proactive_model, seed: int, tasks_per_condition: int = 3) -> list[tuple]:
    """Alone task, then reactive and proactive blocks (order by seed parity)."""
    human_type, _ = participant_types(cfg, seed)
    human = build_human_model(human_type, seed=seed)
    task_cfg = cfg.task_config(cfg.short_term.get("taskType", 4))
    order = ["alone"] + (["reactive", "proactive"] if seed % 2 == 0 else ["proactive", "reactive"])
    counters, experience = InteractionCounters(), 0
    out = []
    k = 0
    for cond in order:
        n = 1 if cond == "alone" else tasks_per_condition
        for _ in range(n):
            if cond == "alone":
                ctrl = AloneController()
            elif cond == "reactive":
                ctrl = ReactiveController(make_reactive_policy(cfg.reactive_timeout))
            else:
                ctrl = ProactiveController(proactive_model, cfg.solver)
            res = run_episode(task_cfg, human, ctrl, [int(seed), 17, k], counters, experience, cfg.record_belief)
            counters, experience = res.counters, res.experience
            out.append((cond, k, human_type.label(), res.log))
            k += 1
    return out


def run_short_term(cfg: ExperimentConfig) -> dict:
    base_path = cfg.path("baseModel", "base_model.json")
    model = load_model(base_path) if base_path.exists() else build_base_model(cfg.reward_spec(), cfg.gamma)
    per_task = int(cfg.short_term.get("tasksPerCondition", 3))
    rows, task_rows, logs = [], [], []
    by_cond = {c: [] for c in CONDITIONS}
    n = 0
    for seed in cfg.seeds:
        for cond, k, label, log in short_term_seed(cfg, model, seed, per_task):
            m = compute_metrics(log, task_id=n)
            rows.append(m)
            by_cond[cond].append(m)
            task_rows.append([seed, k, cond, label, m.discountedReturn, m.warnings, m.S_task, m.eta_task])
            logs.append(log)
            n += 1
    summary = []
    for cond in CONDITIONS:
        ms = by_cond[cond]
        summary.append(
            [
                cond,
                len(ms),
                float(np.mean([m.discountedReturn for m in ms])) if ms else math.nan,
                int(sum(m.warnings for m in ms)),
                float(np.mean([m.warnings for m in ms])) if ms else math.nan,
                float(np.mean([m.S_task for m in ms])) if ms else math.nan,
                float(np.mean([m.eta_task for m in ms])) if ms else math.nan,
            ]
        )
    out = {
        "metrics": _write(cfg.path("metrics", "short_term_metrics.csv"), metrics_csv(rows)),
        "tasks": _write(
            cfg.path("tasks", "short_term_tasks.csv"),
            _csv(["seed", "task", "condition", "trueType", "discountedReturn", "warnings", "S_task", "eta_task"], task_rows),
        ),
        "summary": _write(
            cfg.path("summary", "short_term_summary.csv"),
            _csv(["condition", "tasks", "meanReward", "totalWarnings", "meanWarnings", "meanS_task", "meanEta"], summary),
        ),
    }
    episodes = cfg.path("episodes", "short_term_episodes.jsonl")
    write_logs(logs, episodes)
    out["episodes"] = episodes
    return out


# ---------------------------------------------------------------------------
# validate-human


def run_validate_human(cfg: ExperimentConfig) -> dict:
    v = cfg.validation
    if "types" in v:
        types = [HumanType.decode(t) for t in v["types"]]
    else:
        types = validation_types()[: int(v.get("models", 8))]
    seed = int(cfg.seeds[0]) if cfg.seeds else 0
    models = [build_human_model(t, seed=seed + i) for i, t in enumerate(types)]
    L = likelihood_matrix(models, n_tasks=int(v.get("tasks", 100)), length=int(v.get("length", 40)), seed=seed)
    labels = [t.label() for t in types]
    dominant = [bool(L[i, i] > np.delete(L[i], i).max()) if len(types) > 1 else True for i in range(len(types))]
    rows = [[labels[i], *L[i].tolist()] for i in range(len(types))]
    verdict = {"models": labels, "diagonalDominant": all(dominant), "rowsDominant": dominant}
    return {
        "matrix": _write(cfg.path("likelihoodMatrix", "likelihood_matrix.csv"), _csv(["generator", *labels], rows)),
        "verdict": _write(cfg.path("validation", "validation.json"), json.dumps(verdict, indent=1) + "\n"),
    }


# ---------------------------------------------------------------------------
# report


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def run_report(cfg: ExperimentConfig) -> dict:
    """Turn whatever run outputs exist in the output directory into x,y plot series."""
    out = {}
    lt = cfg.path("tasks", "long_term_tasks.csv")
    if lt.exists():
        rows = _read_csv(lt)
        by_task: dict = {}
        for r in rows:
            by_task.setdefault(int(r["task"]), []).append(float(r["regret"]))
        xs = sorted(by_task)
        mean_regret = [float(np.mean(by_task[x])) for x in xs]
        ma = moving_average(mean_regret, cfg.ma_window)
        data = [["mean_regret", x, y] for x, y in zip(xs, mean_regret)]
        data += [["moving_average_regret", x, y] for x, y in zip(xs, ma)]
        changes: dict = {}
        for r in _read_csv(cfg.path("metrics", "long_term_metrics.csv")):
            changes.setdefault(int(r["taskId"]) % max(len(xs), 1), []).append(r["policyChanged"] == "true")
        data += [["policy_change_rate", x, float(np.mean(changes.get(x, [False])))] for x in xs]
        out["longTerm"] = _write(cfg.path("plotLongTerm", "plot_long_term.csv"), _csv(["series", "x", "y"], data))
    st = cfg.path("tasks", "short_term_tasks.csv")
    if st.exists():
        rows = _read_csv(st)
        data = []
        for i, cond in enumerate(CONDITIONS):
            sel = [r for r in rows if r["condition"] == cond]
            if not sel:
                continue
            for key in ("discountedReturn", "warnings", "S_task", "eta_task"):
                data.append([f"{cond}_{key}", i, float(np.mean([float(r[key]) for r in sel]))])
        out["shortTerm"] = _write(cfg.path("plotShortTerm", "plot_short_term.csv"), _csv(["series", "x", "y"], data))
    lm = cfg.path("likelihoodMatrix", "likelihood_matrix.csv")
    if lm.exists():
        rows = _read_csv(lm)
        data = []
        for i, r in enumerate(rows):
            for j, key in enumerate(k for k in r if k != "generator"):
                data.append([f"generator_{r['generator']}", j, float(r[key])])
        out["validation"] = _write(cfg.path("plotValidation", "plot_likelihood.csv"), _csv(["series", "x", "y"], data))
    if not out:
        raise ConfigurationError(f"no run outputs found under {cfg.out_dir}")
    return out
