import importlib
import json

import pytest

from meta_learners.results import RESULT_COLUMNS, read_results

FAST = ["--design", "1", "--learners", "T,DR", "--procedures", "full,split", "--n-train", "60",
        "--replications", "3", "--n-validation", "25", "--trees", "4", "--min-leaf", "2",
        "--seed", "3", "--no-runtime"]


@pytest.fixture
def cli(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("METALEARNERS_WORKERS", raising=False)
    import main
    return importlib.reload(main)


def test_simulate_writes_results(cli, tmp_path):
    out = tmp_path / "results" / "design1.csv"
    assert cli.main(["simulate", *FAST, "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(RESULT_COLUMNS)
    assert len(lines) == 5
    # a missing forest config is written with defaults
    assert (tmp_path / "config" / "forest-config.json").exists()


def test_simulate_is_reproducible(cli, tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["simulate", *FAST, "--out", str(first)]) == 0
    assert cli.main(["simulate", *FAST, "--workers", "2", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_json_output(cli, tmp_path):
    out = tmp_path / "design1.json"
    assert cli.main(["simulate", *FAST, "--format", "json", "--out", str(out)]) == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert {record["procedure"] for record in payload} == {"full", "split"}


def test_metrics_recomputed_from_panels(cli, tmp_path):
    results, panels, metrics = tmp_path / "r.csv", tmp_path / "panels", tmp_path / "m.csv"
    assert cli.main(["simulate", *FAST, "--save-panels", str(panels), "--out", str(results)]) == 0
    assert cli.main(["metrics", "--panels", str(panels), "--out", str(metrics)]) == 0
    original, recomputed = read_results(str(results)), read_results(str(metrics))
    for row in recomputed:
        assert row.summary.rmse_mean == original.get(*row.key).summary.rmse_mean


def test_emit_plotdata(cli, tmp_path):
    results, plot = tmp_path / "r.csv", tmp_path / "plot.csv"
    assert cli.main(["simulate", *FAST, "--out", str(results)]) == 0
    assert cli.main(["emit-plotdata", "--results", str(results), "--out", str(plot)]) == 0
    assert plot.read_text(encoding="utf-8").startswith("design,learner,procedure,n_train,measure,value\n")


def test_describe(cli, tmp_path):
    out = tmp_path / "describe.json"
    assert cli.main(["describe", "--design", "4", "--n-validation", "200", "--out", str(out)]) == 0
    summary = json.loads(out.read_text(encoding="utf-8"))
    assert summary["data"] == "design4"
    assert summary["n"] == 200


def test_errors_and_strict_mode(cli, tmp_path):
    assert cli.main(["simulate", *FAST, "--design", "9", "--out", str(tmp_path / "x.csv")]) == 1
    assert cli.main(["simulate", *FAST, "--n-train", "60,120", "--out", str(tmp_path / "x.csv")]) == 1
    assert cli.main(["metrics", "--panels", str(tmp_path / "nowhere")]) == 1
    assert cli.main(["emit-plotdata", "--results", str(tmp_path / "nowhere.csv")]) == 1

    tiny = ["simulate", *FAST, "--n-train", "6", "--min-leaf", "5", "--out", str(tmp_path / "t.csv")]
    assert cli.main(tiny) == 0
    assert cli.main([*tiny, "--strict"]) == 2
    assert all(row.aborted for row in read_results(str(tmp_path / "t.csv")))


def test_semisynth_requires_data(cli):
    with pytest.raises(SystemExit):
        cli.main(["semisynth", "--learners", "T"])


def test_paper_profile_accepted(cli, tmp_path):
    out = tmp_path / "paper.csv"
    assert cli.main(["simulate", "--profile", "paper", *FAST, "--out", str(out)]) == 0
    assert len(out.read_text(encoding="utf-8").splitlines()) == 5
