"""End-to-end CLI workflow on a small world, plus error and config paths."""

import json

import pytest
from click.testing import CliRunner

from truckmatch.cli import main

SEED = ["--seed", "4"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """simulate -> build-lanes -> make-dataset -> train chained once."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()

    def run(*args):
        result = runner.invoke(main, list(args), catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    run("simulate", *SEED, "--shipments", "60", "--out", str(root / "world"))
    run("build-lanes", "--world", str(root / "world"), "--out", str(root / "lanes"))
    run(
        "make-dataset",
        "--world", str(root / "world"),
        "--lanes", str(root / "lanes" / "lanes.txt"),
        *SEED,
        "--out", str(root / "data"),
    )
    run(
        "train",
        "--dataset", str(root / "data" / "dataset.csv"),
        *SEED,
        "--trees", "40",
        "--max-leaves", "7",
        "--out", str(root / "model"),
    )
    run(
        "train",
        "--dataset", str(root / "data" / "dataset.csv"),
        *SEED,
        "--trees", "40",
        "--max-leaves", "7",
        "--features", "0,1",
        "--out", str(root / "model2"),
    )
    return root, runner


def test_workflow_artifacts_exist(workspace):
    root, _ = workspace
    for rel in (
        "world/pings.ndjson",
        "world/shipments.ndjson",
        "world/manifest.json",
        "lanes/lanes.txt",
        "data/dataset.csv",
        "model/model.txt",
    ):
        assert (root / rel).exists(), rel


def test_manifests_record_command_and_seed(workspace):
    root, _ = workspace
    m = json.loads((root / "world" / "manifest.json").read_text())
    assert m["command"] == "simulate"
    assert m["seed"] == 4
    assert "pings.ndjson" in m["outputs"]


def test_shadow_eval_and_metrics(workspace):
    root, runner = workspace
    result = runner.invoke(
        main,
        [
            "shadow-eval",
            "--world", str(root / "world"),
            "--lanes", str(root / "lanes" / "lanes.txt"),
            "--model", str(root / "model" / "model.txt"),
            "--out", str(root / "shadow"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "coverage=" in result.output
    assert "eligible = all shipments routed to the engine" in result.output
    decisions = (root / "shadow" / "decisions_itm2.csv").read_text().splitlines()
    assert decisions[0] == "shipment_id,engine,assigned_truck,probability,confidence,eval_count,pings_seen"
    assert all(line.count(",") == 6 for line in decisions[1:])

    result = runner.invoke(
        main,
        [
            "metrics",
            "--world", str(root / "world"),
            "--decisions", str(root / "shadow" / "decisions_itm2.csv"),
            "--out", str(root / "met"),
        ],
    )
    assert result.exit_code == 0, result.output
    report = json.loads((root / "met" / "report.ndjson").read_text())
    shadow_report = [
        json.loads(line)
        for line in (root / "shadow" / "report.ndjson").read_text().splitlines()
    ]
    itm2 = next(r for r in shadow_report if r["run"] == "itm2")
    assert report["n_assigned"] == itm2["n_assigned"]
    assert report["n_correct"] == itm2["n_correct"]


def test_ablate_emits_three_runs(workspace):
    root, runner = workspace
    result = runner.invoke(
        main,
        [
            "ablate",
            "--world", str(root / "world"),
            "--lanes", str(root / "lanes" / "lanes.txt"),
            "--model", str(root / "model" / "model.txt"),
            "--model-no-hexcell", str(root / "model2" / "model.txt"),
            "--out", str(root / "abl"),
        ],
    )
    assert result.exit_code == 0, result.output
    runs = {
        json.loads(line)["run"]
        for line in (root / "abl" / "report.ndjson").read_text().splitlines()
    }
    assert runs == {"full", "no_postprocess", "no_hexcell"}


def test_match_and_export_geojson(workspace):
    root, runner = workspace
    sid = json.loads((root / "world" / "split.json").read_text())["eval"][0]
    result = runner.invoke(
        main,
        [
            "match",
            "--world", str(root / "world"),
            "--lanes", str(root / "lanes" / "lanes.txt"),
            "--model", str(root / "model" / "model.txt"),
            "--shipment", sid,
            "--out", str(root / "one"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert sid in result.output

    result = runner.invoke(
        main,
        [
            "export-geojson",
            "--world", str(root / "world"),
            "--lanes", str(root / "lanes" / "lanes.txt"),
            "--shipment", sid,
            "--out", str(root / "gj"),
        ],
    )
    assert result.exit_code == 0, result.output
    fc = json.loads((root / "gj" / "overlap_cells.geojson").read_text())
    assert fc["type"] == "FeatureCollection"


def test_refresh_lanes(workspace):
    root, runner = workspace
    result = runner.invoke(
        main,
        [
            "refresh-lanes",
            "--lanes", str(root / "lanes" / "lanes.txt"),
            "--world", str(root / "world"),
            "--now", "1800000000",
            "--out", str(root / "lanes2"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert (root / "lanes2" / "lanes.txt").exists()


def test_missing_artifact_is_data_error(workspace, tmp_path):
    root, runner = workspace
    result = runner.invoke(
        main,
        [
            "shadow-eval",
            "--world", str(root / "world"),
            "--lanes", str(root / "lanes" / "lanes.txt"),
            "--model", str(tmp_path / "nope.txt"),
            "--out", str(tmp_path / "x"),
        ],
    )
    assert result.exit_code == 2  # click validates --model existence (usage)
    # a present-but-corrupt model is a data error (status 1)
    bad = tmp_path / "bad.txt"
    bad.write_text("garbage\n")
    result = runner.invoke(
        main,
        [
            "shadow-eval",
            "--world", str(root / "world"),
            "--lanes", str(root / "lanes" / "lanes.txt"),
            "--model", str(bad),
            "--out", str(tmp_path / "x"),
        ],
    )
    assert result.exit_code == 1
    assert "bad.txt" in result.output


def test_usage_error_is_status_2():
    runner = CliRunner()
    result = runner.invoke(main, ["simulate", "--shipments"])
    assert result.exit_code == 2


def test_print_config_dumps_and_skips_run(tmp_path):
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["simulate", "--seed", "9", "--out", str(tmp_path / "w"), "--print-config"],
    )
    assert result.exit_code == 0
    cfg = json.loads(result.output)
    assert cfg["seed"] == 9
    assert not (tmp_path / "w").exists()


def test_config_file_precedence(tmp_path):
    runner = CliRunner()
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"seed": 33, "shipments": 11}))
    # flag beats config file; config file beats default
    result = runner.invoke(
        main,
        [
            "simulate",
            "--seed", "1",
            "--config", str(cfg_path),
            "--out", str(tmp_path / "w"),
            "--print-config",
        ],
    )
    cfg = json.loads(result.output)
    assert cfg["seed"] == 1
    assert cfg["shipments"] == 11
