"""Command-line entry points for simulation, training, and serving."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import factor_model, harness
from .game import Role, read_log, write_records
from .inference import BPConfig
from .language import BetaSchedule, FixtureProvider, HttpProvider


def _load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _roster_factory(side_cfg: dict) -> harness.AgentFactory:
    policy = side_cfg.get("policy", "random")
    params = dict(side_cfg.get("params", {}))
    if policy == "random":
        return harness.random_good_factory()
    if policy == "random_evil":
        return harness.random_evil_factory(**params)
    if policy == "scripted_evil":
        return harness.scripted_evil_factory(**params)
    if policy == "grail":
        weights = side_cfg.get("model_weights")
        model = factor_model.load_weights(weights) if weights else factor_model.uniform_model()
        provider_factory = None
        provider_cfg = side_cfg.get("provider")
        if provider_cfg:
            provider_factory = _provider_factory(provider_cfg)
        beta = None
        if side_cfg.get("beta_schedule") is not None:
            beta = BetaSchedule(tuple(side_cfg["beta_schedule"]))
        return harness.belief_agent_factory(
            factor_model.conditional_provider(model),
            provider_factory=provider_factory,
            beta_schedule=beta,
        )
    raise SystemExit(f"unknown policy in config: {policy!r}")


def _provider_factory(cfg: dict):
    kind = cfg.get("kind", "http")
    if kind == "fixture":
        directory = cfg["directory"]
        return lambda: FixtureProvider(directory)
    if kind == "http":
        return lambda: HttpProvider(
            base_url=cfg["base_url"],
            model=cfg.get("model", "default"),
            api_key_env=cfg.get("api_key_env", "AVALONSIM_API_KEY"),
            timeout=float(cfg.get("timeout", 30.0)),
        )
    raise SystemExit(f"unknown provider kind: {kind!r}")


def cmd_play(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    matchup = harness.Matchup(
        good=_roster_factory(cfg.get("good", {"policy": "random"})),
        evil=_roster_factory(cfg.get("evil", {"policy": "random_evil"})),
        label=cfg.get("label", "matchup"),
    )
    report, logs = harness.run_matchup(
        matchup,
        n_games=int(cfg.get("n_games", 100)),
        seed=int(cfg.get("seed", 0)),
        chat=bool(cfg.get("chat", False)),
        collect_beliefs=bool(cfg.get("collect_beliefs", False)),
    )
    out_logs = cfg.get("out_logs") or args.out_logs
    if out_logs:
        write_records(out_logs, logs, header={"type": "header", "label": report.label, "n_games": report.n_games})
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    params = {}
    if args.fail_prob:
        params["fail_prob"] = _parse_range(args.fail_prob)
    if args.reject_good_prob:
        params["reject_good_prob"] = _parse_range(args.reject_good_prob)
    records = harness.generate_synthetic_corpus(
        n_games=args.games,
        evil_policy_params=params or None,
        seed=args.seed,
        path=args.out,
    )
    print(json.dumps({"games_written": len(records), "path": args.out}))
    return 0


def _parse_range(text: str):
    parts = [float(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else (parts[0], parts[1])


def cmd_train(args: argparse.Namespace) -> int:
    dataset = factor_model.build_dataset_from_file(args.corpus)
    config = factor_model.TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        split_seed=args.seed,
        init_seed=args.seed,
    )
    model, metrics = factor_model.train(config, dataset)
    factor_model.save_weights(model, args.out)
    print(json.dumps({"samples": len(dataset), **metrics.to_dict()}, indent=2))
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    # the supplied corpus is treated as the held-out set
    model = factor_model.load_weights(args.weights)
    dataset = factor_model.build_dataset_from_file(args.corpus)
    flat = dataset.features.astype(np.int64)
    before = model.temperature
    ece_before = factor_model.expected_calibration_error(
        model.predict_flat(flat), dataset.labels
    )
    factor_model.calibrate(model, dataset)
    ece_after = factor_model.expected_calibration_error(
        model.predict_flat(flat), dataset.labels
    )
    factor_model.save_weights(model, args.out or args.weights)
    print(
        json.dumps(
            {
                "temperature_before": before,
                "temperature_after": model.temperature,
                "ece_before": ece_before,
                "ece_after": ece_after,
            },
            indent=2,
        )
    )
    return 0


def cmd_bench_bp(args: argparse.Namespace) -> int:
    counts = [int(c) for c in args.counts.split(",")]
    table = harness.scalability_bench(role_counts=counts, trials=args.trials, seed=args.seed)
    means = [row["mean_seconds"] for row in table]
    ns = [row["n_roles"] for row in table]
    fit = np.polyfit(ns, means, 1)
    predicted = np.polyval(fit, ns)
    ss_res = float(np.sum((np.array(means) - predicted) ** 2))
    ss_tot = float(np.sum((np.array(means) - np.mean(means)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    print(json.dumps({"table": table, "linear_r2": r2, "ratio_max_min": means[-1] / means[0]}, indent=2))
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    records, skipped = read_log(args.logs)
    good_wins = sum(1 for r in records if r.winner == Role.GOOD.value)
    f1_by_round = {}
    for round_number in range(1, 6):
        try:
            f1, stderr = harness.voting_f1(records, round_number)
            f1_by_round[str(round_number)] = {"f1": f1, "stderr": stderr}
        except ValueError:
            f1_by_round[str(round_number)] = None
    print(
        json.dumps(
            {
                "games": len(records),
                "skipped_lines": skipped,
                "good_wins": good_wins,
                "good_win_rate": good_wins / len(records) if records else 0.0,
                "voting_f1": f1_by_round,
            },
            indent=2,
        )
    )
    return 0


def cmd_export_beliefs(args: argparse.Namespace) -> int:
    records, _ = read_log(args.logs)
    rows = harness.export_belief_traces(records, args.out)
    print(json.dumps({"rows": rows, "path": args.out}))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import build_app

    frontend = args.frontend
    if frontend is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend = str(candidate) if candidate.is_dir() else None
    app = build_app(frontend_dir=frontend)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="avalonsim", description="Hidden-role game lab: simulate, train factors, calibrate, benchmark, serve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("play", help="run a matchup described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-logs", default=None)
    p.set_defaults(fn=cmd_play)

    p = sub.add_parser("gen-data", help="generate a synthetic self-play corpus")
    p.add_argument("--games", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--fail-prob", default=None, help="scalar or lo,hi range")
    p.add_argument("--reject-good-prob", default=None, help="scalar or lo,hi range")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train the conditional factor network")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("calibrate", help="fit the temperature on held-out games")
    p.add_argument("--weights", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("bench-bp", help="time inference across graph sizes")
    p.add_argument("--counts", default="6,8,12,20")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench_bp)

    p = sub.add_parser("metrics", help="recompute a report from logged games")
    p.add_argument("--logs", required=True)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("export-beliefs", help="dump per-round belief traces to CSV")
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_beliefs)

    p = sub.add_parser("serve", help="start the play server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--frontend", default=None, help="static client directory")
    p.set_defaults(fn=cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
