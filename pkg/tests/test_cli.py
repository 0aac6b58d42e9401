import json

import pytest
import yaml

from app import __version__
from app.main import main
from app.repositories.archive_repository import ArchiveRepository
from app.repositories.model_repository import ModelRepository
from app.repositories.training_log_repository import TrainingLogRepository
from app.routers import gen_data
from app.routers.common import load_env, load_schema, read_structured
from app.schemas.campaign import CampaignPlan
from app.schemas.search import SearchConfig
from app.services.analysis_service import failure_metrics
from app.services.testbed_service import TrainingLog, execute_archive, generate_training_log, make_env, schema_for
from seed_data import seed_demo_files

SEARCH_FLAGS = ["--generations", "2", "--population-size", "6"]


@pytest.fixture(scope="module")
def walker_files(tmp_path_factory):
    """A walker training log and a small surrogate trained on it."""
    root = tmp_path_factory.mktemp("walker")
    log, model = str(root / "train.jsonl"), str(root / "model.json")
    assert main(["gen-data", "--env", "walker", "--n", "200", "--seed", "1", "--out", log]) == 0
    assert main(["train", "--log", log, "--epochs", "5", "--hidden", "8", "--out", model]) == 0
    return log, model


def search_args(walker_files, out, *extra) -> list[str]:
    log, model = walker_files
    return ["search", "--model", model, "--seeds-file", log, "--env", "walker", "--out", str(out), *extra]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------
def test_version_exits_cleanly(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_missing_command_is_a_usage_error():
    assert main([]) == 1


def test_unknown_flag_is_a_usage_error(walker_files, tmp_path):
    assert main(search_args(walker_files, tmp_path / "a.jsonl", "--frobnicate")) == 1


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------
def test_gen_data_writes_log_and_manifest(tmp_path):
    out = tmp_path / "train.jsonl"
    assert main(["gen-data", "--env", "parking", "--n", "10", "--seed", "2", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 10
    manifest = json.loads((tmp_path / "train.jsonl.manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["seed"] == 2


def test_gen_data_is_reproducible(tmp_path):
    for name in ("a.jsonl", "b.jsonl"):
        assert main(["gen-data", "--env", "track", "--n", "15", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_gen_data_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["gen-data", "--env", "parking", "--n", "3", "--out", str(blocker / "train.jsonl")]) == 2


def test_gen_data_from_environment_file(tmp_path):
    env_file = tmp_path / "env.yaml"
    env_file.write_text(yaml.safe_dump({"env": {"kind": "parking", "lane_count": 6}}))
    out = tmp_path / "train.jsonl"
    assert main(["gen-data", "--env", str(env_file), "--n", "5", "--out", str(out)]) == 0
    lanes = [json.loads(line)["config"]["goal_lane_idx"] for line in out.read_text().splitlines()]
    assert all(0 <= lane < 6 for lane in lanes)


def test_unknown_environment_name(tmp_path):
    assert main(["gen-data", "--env", "mujoco", "--out", str(tmp_path / "t.jsonl")]) == 1


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------
def test_train_writes_loadable_model(walker_files):
    model = ModelRepository(walker_files[1]).load()
    assert model.layers == [3, 8, 1]


def test_train_prints_accuracy(walker_files, tmp_path, capsys):
    log, _ = walker_files
    assert main(["train", "--log", log, "--epochs", "2", "--hidden", "4", "--out", str(tmp_path / "m.json")]) == 0
    assert capsys.readouterr().out.startswith("train accuracy: ")


def test_train_on_one_class_fails(tmp_path, parking_env):
    full = generate_training_log(parking_env, 5, seed=0)
    log = TrainingLog(configs=full.configs, labels=[0] * 5)
    TrainingLogRepository(tmp_path / "train.jsonl").save("parking", log)
    assert main(["train", "--log", str(tmp_path / "train.jsonl"), "--out", str(tmp_path / "m.json")]) == 1


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------
def test_search_writes_archive_log_and_manifest(walker_files, tmp_path):
    out = tmp_path / "archive.jsonl"
    assert main(search_args(walker_files, out, "--test-runs", "2", *SEARCH_FLAGS)) == 0
    assert len(out.read_text().splitlines()) == 2
    assert (tmp_path / "archive.log.csv").exists()
    manifest = json.loads((tmp_path / "archive.jsonl.manifest.json").read_text())
    assert len(manifest["selection_seconds"]) == 2
    assert set(manifest["inputs"]) == set(walker_files)


def test_search_accepts_approach_flags(walker_files, tmp_path):
    flags = ["--test-runs", "2", "--algorithm", "agemoea", "--diversity", "euclidean", "--select", "knee"]
    assert main(search_args(walker_files, tmp_path / "a.jsonl", *flags, *SEARCH_FLAGS)) == 0


def test_search_rejects_unknown_algorithm(walker_files, tmp_path):
    assert main(search_args(walker_files, tmp_path / "a.jsonl", "--algorithm", "spea2")) == 1


def test_search_flags_override_config_file(walker_files, tmp_path):
    config = tmp_path / "search.yaml"
    config.write_text(yaml.safe_dump({"test_runs": 3, "generations": 2, "population_size": 6, "seed": 4}))
    out = tmp_path / "archive.jsonl"
    assert main(search_args(walker_files, out, "--config", str(config), "--test-runs", "1")) == 0
    manifest = json.loads((tmp_path / "archive.jsonl.manifest.json").read_text())
    assert manifest["config"]["test_runs"] == 1
    assert manifest["config"]["seed"] == 4
    assert len(out.read_text().splitlines()) == 1


def test_search_evaluation_budget_flag(walker_files, tmp_path):
    out = tmp_path / "archive.jsonl"
    assert main(search_args(walker_files, out, "--max-evaluations", "15", *SEARCH_FLAGS)) == 0
    manifest = json.loads((tmp_path / "archive.jsonl.manifest.json").read_text())
    assert manifest["config"]["max_evaluations"] == 15
    assert json.loads(out.read_text().splitlines()[-1])["evaluations"] == 15


def test_search_rejects_bad_reference_point(walker_files, tmp_path):
    assert main(search_args(walker_files, tmp_path / "a.jsonl", "--reference-point", "0.5", "20.2")) == 1


# ---------------------------------------------------------------------------
# analyze and campaign
# ---------------------------------------------------------------------------
def test_analyze_empty_archive(tmp_path):
    archive = tmp_path / "archive.jsonl"
    archive.write_text("")
    assert main(["analyze", "--archive", str(archive), "--env", "parking", "--out", str(tmp_path / "report")]) == 0
    summary = json.loads((tmp_path / "report" / "summary.json").read_text())
    assert summary["total_failures"] == 0 and summary["ttf_evaluations"] is None


def test_analyze_matches_library_calls(walker_files, tmp_path):
    archive = tmp_path / "archive.jsonl"
    assert main(search_args(walker_files, archive, "--test-runs", "3", *SEARCH_FLAGS)) == 0
    assert main(["analyze", "--archive", str(archive), "--env", "walker", "--seed", "2", "--out", str(tmp_path / "r")]) == 0

    env = make_env("walker")
    records = execute_archive(env, ArchiveRepository(archive).load(schema_for(env)))
    expected = failure_metrics(records, schema_for(env), seed=2).model_dump(mode="json", exclude={"ttf_wall_clock"})
    assert json.loads((tmp_path / "r" / "summary.json").read_text()) == expected
    assert len((tmp_path / "r" / "records.jsonl").read_text().splitlines()) == 3
    assert (tmp_path / "r" / "summary.json.manifest.json").exists()


def test_analyze_archive_with_invalid_utf8(tmp_path):
    archive = tmp_path / "archive.jsonl"
    archive.write_bytes(b"\xff\xfe\n")
    assert main(["analyze", "--archive", str(archive), "--env", "parking", "--out", str(tmp_path / "r")]) == 1


def test_unexpected_failure_is_a_runtime_error(monkeypatch, tmp_path):
    def broken(*args, **kwargs):
        raise RuntimeError("simulator crashed")

    monkeypatch.setattr(gen_data, "generate_training_log", broken)
    assert main(["gen-data", "--env", "parking", "--n", "3", "--out", str(tmp_path / "t.jsonl")]) == 2


def test_malformed_campaign_plan(tmp_path):
    plan = tmp_path / "plan.yaml"
    plan.write_text("env: parking\napproaches: [{name: a, algorithm: nsga2}]\nseeds: [0, 1]\n")
    assert main(["campaign", "--plan", str(plan), "--out", str(tmp_path / "c")]) == 1


def test_unparseable_campaign_plan(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text("{not json")
    assert main(["campaign", "--plan", str(plan), "--out", str(tmp_path / "c")]) == 1


def test_small_campaign_writes_report(tmp_path):
    plan = tmp_path / "plan.yaml"
    plan.write_text(
        yaml.safe_dump(
            {
                "env": "walker",
                "approaches": [{"name": "nsga2", "algorithm": "nsga2"}, {"name": "ga", "algorithm": "ga"}],
                "seeds": [0, 1],
                "search": {"test_runs": 2, "generations": 1, "population_size": 4},
                "training_samples": 150,
                "hyper": {"hidden": [4], "epochs": 5},
            }
        )
    )
    out = tmp_path / "campaign"
    assert main(["campaign", "--plan", str(plan), "--out", str(out)]) == 0
    assert len((out / "rows.csv").read_text().splitlines()) == 5
    assert len((out / "timings.csv").read_text().splitlines()) == 5
    assert set(json.loads((out / "summary.json").read_text())) == {"summary", "comparisons"}


def test_demo_files_load(tmp_path):
    seed_demo_files(str(tmp_path))
    for name in ("parking", "walker", "track"):
        env = load_env(str(tmp_path / f"{name}.env.yaml"))
        assert load_schema(str(tmp_path / f"{name}.schema.yaml"), None) == schema_for(env)
    assert SearchConfig.model_validate(read_structured(str(tmp_path / "search.yaml"))).algorithm.value == "agemoea"
    assert len(CampaignPlan.model_validate(read_structured(str(tmp_path / "campaign.yaml"))).approaches) == 4
