import csv
import json
from dataclasses import replace

import pytest

from cobotadapt.abps import PolicyLibrary, load_trained
from cobotadapt.apomdp import build_base_model
from cobotadapt.cli import main
from cobotadapt.env import read_logs
from cobotadapt.errors import ConfigurationError
from cobotadapt.experiments import ExperimentConfig, long_term_seed, participant_types
from cobotadapt.metrics import METRICS_HEADER, compute_metrics

TINY = {
    "K": 3,
    "taskType": 5,
    "seeds": [0, 1],
    "solver": {"depth": 2, "width": 2, "seed": 0},
    "library": {"size": 3, "seed": 1},
    "training": {"episodesPerPair": 2, "keep": 2, "types": [["Low", "Low", "Low", "Low"], ["High", "High", "High", "High"]]},
    "shortTerm": {"tasksPerCondition": 2},
    "validation": {"models": 2, "tasks": 5, "length": 15},
}


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    cfg_path = d / "cfg.json"
    cfg_path.write_text(json.dumps({**TINY, "outDir": str(d / "out")}))
    assert main(["gen-library", "--config", str(cfg_path)]) == 0
    assert main(["train", "--config", str(cfg_path)]) == 0
    return cfg_path, d / "out"


def test_gen_library_outputs(trained):
    _, out = trained
    assert PolicyLibrary.load(out / "library_candidates.json").ids == [0, 1, 2]
    doc = json.loads((out / "base_model.json").read_text())
    assert set(doc) >= {"states", "actions", "gamma", "rewards", "T", "O"}


def test_train_outputs(trained):
    _, out = trained
    lib = PolicyLibrary.load(out / "library.json")
    obs, perf = load_trained(out / "trained_models.json")
    assert len(lib) == 2 and obs.policies == perf.policies == list(lib.ids)
    doc = json.loads((out / "trained_models.json").read_text())
    assert {"types", "policies", "bernoulliRates", "histogram"} <= set(doc)
    assert set(doc["histogram"]) == {"edges", "masses"}
    rows = _rows(out / "training_summary.csv")
    assert list(rows[0]) == ["type", "policy", "meanReturn", "stdReturn", "episodes"]
    assert len(rows) == 2 * 3 and all(r["episodes"] == "2" for r in rows)


def test_long_term_outputs(trained, tmp_path):
    cfg_path, out = trained
    assert main(["long-term", "--config", str(cfg_path)]) == 0
    text = (out / "long_term_metrics.csv").read_text()
    assert text.splitlines()[0] == ",".join(METRICS_HEADER)
    rows = _rows(out / "long_term_metrics.csv")
    assert len(rows) == 2 * 3
    assert all(r["regret"] != "" for r in rows)
    assert rows[0]["policyChanged"] == "false"
    logs = read_logs(out / "long_term_episodes.jsonl")
    assert len(logs) == 6
    for r, log in zip(rows, logs):
        assert float(r["discountedReturn"]) == pytest.approx(compute_metrics(log).discountedReturn, abs=1e-6)
    first = text
    assert main(["long-term", "--config", str(cfg_path)]) == 0
    assert (out / "long_term_metrics.csv").read_text() == first


def test_seed_and_tasks_flags(trained, tmp_path):
    cfg_path, out = trained
    alt = tmp_path / "alt"
    for name in ("library.json", "trained_models.json"):
        alt.mkdir(exist_ok=True)
        (alt / name).write_text((out / name).read_text())
    assert main(["long-term", "--config", str(cfg_path), "--seed", "4", "--tasks", "2", "--out-dir", str(alt)]) == 0
    assert len(_rows(alt / "long_term_metrics.csv")) == 2


def test_episodes_flag(trained, tmp_path):
    cfg_path, out = trained
    alt = tmp_path / "alt"
    alt.mkdir()
    (alt / "library_candidates.json").write_text((out / "library_candidates.json").read_text())
    assert main(["train", "--config", str(cfg_path), "--out-dir", str(alt), "--episodes", "1"]) == 0
    assert {r["episodes"] for r in _rows(alt / "training_summary.csv")} == {"1"}


def test_single_policy_never_changes(trained):
    cfg_path, out = trained
    cfg = ExperimentConfig.load(cfg_path)
    lib = PolicyLibrary.load(out / "library.json")
    obs, perf = load_trained(out / "trained_models.json")
    pid = lib.ids[0]
    from cobotadapt.experiments import _subset_models

    o1, p1 = _subset_models(obs, perf, [pid])
    tasks = long_term_seed(cfg, lib.subset([pid]), o1, p1, seed=3, K=4)
    assert [t.row.policyChanged for t in tasks] == [False] * 4


def test_short_term(trained):
    cfg_path, out = trained
    assert main(["short-term", "--config", str(cfg_path)]) == 0
    tasks = _rows(out / "short_term_tasks.csv")
    # one alone task and two per robot condition, per seed
    assert len(tasks) == 2 * 5
    for seed in ("0", "1"):
        conds = [r["condition"] for r in tasks if r["seed"] == seed]
        assert conds[0] == "alone" and conds.count("reactive") == conds.count("proactive") == 2
    assert [r["condition"] for r in tasks if r["seed"] == "0"][1] == "reactive"
    assert [r["condition"] for r in tasks if r["seed"] == "1"][1] == "proactive"
    summary = _rows(out / "short_term_summary.csv")
    assert [r["condition"] for r in summary] == ["alone", "reactive", "proactive"]
    for log in read_logs(out / "short_term_episodes.jsonl"):
        if log.summary["controller"] == "alone":
            assert log.summary["n_s_robot"] == 0


def test_validate_and_report(trained):
    cfg_path, out = trained
    assert main(["validate-human", "--config", str(cfg_path)]) == 0
    verdict = json.loads((out / "validation.json").read_text())
    assert len(verdict["models"]) == 2
    rows = _rows(out / "likelihood_matrix.csv")
    assert len(rows) == 2
    assert main(["report", "--config", str(cfg_path)]) == 0
    for name in ("plot_long_term.csv", "plot_short_term.csv", "plot_likelihood.csv"):
        assert list(_rows(out / name)[0]) == ["series", "x", "y"]


def test_seven_tasks_per_short_term_seed():
    from cobotadapt.experiments import short_term_seed

    cfg = ExperimentConfig(seeds=[0], solver=replace(ExperimentConfig().solver, width=2))
    assert len(short_term_seed(cfg, build_base_model(), 0)) == 7


def test_missing_inputs_exit_code(tmp_path):
    assert main(["long-term", "--out-dir", str(tmp_path)]) == 2
    assert main(["report", "--out-dir", str(tmp_path)]) == 2


def test_config_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"K": 0})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"bogus": 1})
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"selection": "greedy"}))
    assert main(["long-term", "--config", str(bad)]) == 2


def test_participants_are_seeded():
    cfg = ExperimentConfig()
    assert participant_types(cfg, 5) == participant_types(cfg, 5)
    sw = ExperimentConfig(type_switch={"afterTask": 15, "from": {"expertise": "Low"}, "to": {"expertise": "High"}})
    t0, t1 = participant_types(sw, 2)
    assert t0.expertise.value == "Low" and t1.expertise.value == "High"
    assert (t0.stamina, t0.attention, t0.collaborativeness) == (t1.stamina, t1.attention, t1.collaborativeness)
