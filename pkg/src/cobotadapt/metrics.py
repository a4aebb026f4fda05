"""Per-task collaboration metrics computed from episode logs."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .env import EpisodeLog
from .errors import ConfigurationError

METRICS_HEADER = ["taskId", "S_task", "S_human", "C_human", "eta_task", "warnings", "discountedReturn", "regret", "policyChanged"]
WARN_FLAG = 3
SUCCESS_FLAG = 7


@dataclass(frozen=True)
class MetricsRow:
    taskId: int
    S_task: float
    S_human: float
    C_human: float
    eta_task: float
    warnings: int
    discountedReturn: float
    regret: float = math.nan
    policyChanged: bool = False
    human_attempts: int = 0

    def as_csv_dict(self) -> dict:
        return {
            "taskId": self.taskId,
            "S_task": _fmt(self.S_task),
            "S_human": _fmt(self.S_human),
            "C_human": _fmt(self.C_human),
            "eta_task": _fmt(self.eta_task),
            "warnings": self.warnings,
            "discountedReturn": _fmt(self.discountedReturn),
            "regret": "" if math.isnan(self.regret) else _fmt(self.regret),
            "policyChanged": str(bool(self.policyChanged)).lower(),
        }


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def tally(log: EpisodeLog) -> dict:
    """Subtask outcome counts recovered from the tick records."""
    t = {"n_s_human": 0, "n_f_human": 0, "n_s_robot": 0, "n_f_robot": 0}
    for r in log.records:
        actor = r.get("resolvedBy")
        if actor is None:
            continue
        ok = bool(r["sigma"][SUCCESS_FLAG])
        key = ("n_s_" if ok else "n_f_") + actor.lower()
        t[key] += 1
    t["n_s"] = t["n_s_human"] + t["n_s_robot"]
    t["n_f"] = t["n_f_human"] + t["n_f_robot"]
    return t


def compute_metrics(log: EpisodeLog, task_id: int = 0, regret: float = math.nan, policy_changed: bool = False) -> MetricsRow:
    if log.summary is None:
        raise ConfigurationError("episode log has no summary record")
    n_total = int(log.summary["numSubtasks"])
    t = tally(log)
    if t["n_s"] + t["n_f"] != n_total:
        raise ConfigurationError(f"log resolves {t['n_s'] + t['n_f']} of {n_total} subtasks")
    attempts = t["n_s_human"] + t["n_f_human"]
    s_task = t["n_s"] / n_total
    s_human = t["n_s_human"] / attempts if attempts else 0.0
    c_human = t["n_s_human"] / n_total
    gamma = float(log.summary.get("gamma", 0.95))
    ret = sum(gamma ** r["decisionStep"] * r["score"] for r in log.records)
    warnings = sum(int(r["sigma"][WARN_FLAG]) for r in log.records)
    return MetricsRow(
        taskId=task_id,
        S_task=s_task,
        S_human=s_human,
        C_human=c_human,
        eta_task=s_task * c_human,
        warnings=warnings,
        discountedReturn=ret,
        regret=regret,
        policyChanged=policy_changed,
        human_attempts=attempts,
    )


def moving_average(series, window: int = 3) -> list[float]:
    """Trailing mean over the last min(window, i + 1) points."""
    if window < 1:
        raise ConfigurationError("window must be >= 1")
    values = [float(v) for v in series]
    out = []
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1) : i + 1]
        out.append(sum(chunk) / len(chunk))
    return out


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRICS_HEADER, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.as_csv_dict())
    return buf.getvalue()
