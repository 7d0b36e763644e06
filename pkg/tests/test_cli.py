"""Command-line entry points, exercised end to end through main()."""

import json

from avalonsim.cli import main
from avalonsim.game import read_log, write_records
from avalonsim.harness import (
    BELIEF_TRACE_COLUMNS,
    Matchup,
    random_evil_factory,
    random_good_factory,
    run_matchup,
)


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_cli_pipeline_runs_end_to_end(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    assert main(["gen-data", "--games", "80", "--seed", "7", "--out", str(corpus)]) == 0
    assert _json_out(capsys)["games_written"] == 80

    weights = tmp_path / "weights.json"
    assert (
        main(
            ["train", "--corpus", str(corpus), "--out", str(weights),
             "--max-epochs", "2", "--batch-size", "256"]
        )
        == 0
    )
    train_report = _json_out(capsys)
    assert train_report["samples"] > 0 and weights.exists()

    assert main(["calibrate", "--weights", str(weights), "--corpus", str(corpus)]) == 0
    cal = _json_out(capsys)
    assert cal["temperature_after"] > 0
    assert set(cal) == {"temperature_before", "temperature_after", "ece_before", "ece_after"}

    config = tmp_path / "matchup.json"
    logs = tmp_path / "games.jsonl"
    config.write_text(
        json.dumps(
            {
                "n_games": 3,
                "seed": 9,
                "collect_beliefs": True,
                "good": {"policy": "grail", "model_weights": str(weights)},
                "evil": {"policy": "scripted_evil"},
            }
        )
    )
    assert main(["play", "--config", str(config), "--out-logs", str(logs)]) == 0
    play_report = _json_out(capsys)
    assert play_report["n_games"] == 3 and logs.exists()

    assert main(["metrics", "--logs", str(logs)]) == 0
    metrics = _json_out(capsys)
    records, skipped = read_log(str(logs))
    assert metrics["games"] == len(records) and skipped == 0
    assert metrics["good_wins"] == sum(1 for r in records if r.winner == "good")

    traces = tmp_path / "traces.csv"
    assert main(["export-beliefs", "--logs", str(logs), "--out", str(traces)]) == 0
    assert _json_out(capsys)["rows"] > 0
    header = traces.read_text().splitlines()[0]
    assert header == ",".join(BELIEF_TRACE_COLUMNS)


def test_cli_metrics_counts_good_wins(tmp_path, capsys):
    # evil that never plays fail -> Good sweeps every game
    _, logs = run_matchup(
        Matchup(good=random_good_factory(), evil=random_evil_factory(0.0)),
        2,
        seed=3,
    )
    path = tmp_path / "sweep.jsonl"
    write_records(str(path), logs, header={"type": "header"})
    assert main(["metrics", "--logs", str(path)]) == 0
    metrics = _json_out(capsys)
    assert metrics["games"] == 2
    assert metrics["good_wins"] == 2
    assert metrics["good_win_rate"] == 1.0


def test_cli_bench_reports_fit(capsys):
    assert main(["bench-bp", "--counts", "3,4", "--trials", "2", "--seed", "1"]) == 0
    out = _json_out(capsys)
    assert len(out["table"]) == 2
    assert {"linear_r2", "ratio_max_min"} <= set(out)
