"""Command-line interface: map/data generation, clustering, training,
prediction, simulation, benchmarking and reporting."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np


def _cmd_gen_map(args) -> int:
    from .citygraph import grid_city, line_city, ring_city

    if args.generator == "grid":
        g = grid_city(args.rows, args.cols, args.sectors_x, args.sectors_y,
                      args.eligible_fraction, args.seed)
    elif args.generator == "ring":
        g = ring_city(args.sectors, args.nodes_per_sector,
                      args.eligible_fraction, args.seed)
    else:
        g = line_city(args.nodes, args.sectors)
    g.save(args.out)
    print(f"wrote {args.out}: {g.n} nodes, {g.num_edges} edges, "
          f"{g.num_sectors} sectors")
    return 0


def _cmd_gen_data(args) -> int:
    from .citygraph import CityGraph
    from .demand import save_locale_counts, save_occupancy_schedules, save_trips
    from .events import write_sector_features  # noqa: F401  (format sibling)
    from .prediction import save_dataset
    from .synth import synth_dataset, synth_events, synth_occupancy, synth_trips
    import csv

    g = CityGraph.load(args.map)
    os.makedirs(args.out, exist_ok=True)
    sectors = sorted(g.sectors)
    events, multipliers = synth_events(sectors, args.days, seed=args.seed,
                                       dim=args.dim)
    rows = synth_dataset(sectors, args.days, seed=args.seed + 1,
                         multipliers=multipliers)
    save_dataset(rows, os.path.join(args.out, "dataset.csv"))
    with open(os.path.join(args.out, "events.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_id", "sector", "kind", "date", "start_hour"]
                        + [f"v{i}" for i in range(args.dim)])
        for e in events:
            writer.writerow([e.event_id, e.sector, "title", e.date, e.start_hour]
                            + [repr(float(v)) for v in e.title_embedding])
            for r in e.review_embeddings:
                writer.writerow([e.event_id, e.sector, "review", e.date, e.start_hour]
                                + [repr(float(v)) for v in r])
    table = synth_occupancy(g, seed=args.seed + 2)
    save_occupancy_schedules(table, os.path.join(args.out, "occupancy.csv"))
    save_locale_counts(table.counts, os.path.join(args.out, "locales.csv"))
    save_trips(synth_trips(g, args.trips, seed=args.seed + 3),
               os.path.join(args.out, "trips.csv"))
    print(f"wrote dataset ({len(rows)} rows), {len(events)} events, occupancy, "
          f"locales and trips under {args.out}")
    return 0


def _cmd_cluster(args) -> int:
    from .events import build_sector_features, load_events, write_sector_features

    events = load_events(args.events, max_reviews=args.max_reviews)
    features = build_sector_features(events, b=args.b, seed=args.seed,
                                     gamma=args.gamma)
    write_sector_features(features, args.out)
    dims = {len(v) for v in features.values()}
    print(f"wrote {len(features)} sector features of dimension "
          f"{dims.pop() if dims else 0} to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .events import load_sector_features
    from .prediction import (DemandPredictor, FeatureEncoder, MlpRegressor,
                             load_dataset, save_checkpoint, split_by_date)

    rows = load_dataset(args.dataset)
    train_rows, _ = split_by_date(rows, args.train_fraction)
    features = load_sector_features(args.features) if args.features else {}
    encoder = FeatureEncoder().fit(train_rows)

    base_rows = [r for r in train_rows if (r.date, r.sector) not in features]
    event_rows = [r for r in train_rows if (r.date, r.sector) in features]
    hidden = tuple(int(v) for v in args.hidden.split(","))
    base = MlpRegressor(hidden=hidden, learning_rate=args.lr,
                        weight_decay=args.weight_decay, batch_size=args.batch_size,
                        epochs=args.epochs, seed=args.seed)
    x = encoder.transform(base_rows if base_rows else train_rows)
    y = np.array([r.count for r in (base_rows if base_rows else train_rows)])
    base.fit(x, y)
    print(f"base model: {len(y)} rows, final mse {base.loss_curve_[-1]:.4f}")

    event_model = None
    if features and len(event_rows) >= args.min_event_rows:
        ehidden = tuple(int(v) for v in args.event_hidden.split(","))
        event_model = MlpRegressor(hidden=ehidden, learning_rate=args.lr,
                                   weight_decay=args.weight_decay,
                                   batch_size=args.batch_size,
                                   epochs=args.epochs, seed=args.seed + 1)
        xe = np.array([
            np.concatenate([encoder.transform_row(r), features[(r.date, r.sector)]])
            for r in event_rows])
        ye = np.array([r.count for r in event_rows])
        event_model.fit(xe, ye)
        print(f"event model: {len(ye)} rows, final mse {event_model.loss_curve_[-1]:.4f}")
    elif features:
        print(f"only {len(event_rows)} event rows; skipping the event model")

    config = {
        "hidden": list(hidden), "epochs": args.epochs, "lr": args.lr,
        "weight_decay": args.weight_decay, "batch_size": args.batch_size,
        "seed": args.seed, "train_fraction": args.train_fraction,
    }
    save_checkpoint(args.out, DemandPredictor(base, event_model, encoder, features),
                    config)
    print(f"wrote checkpoint {args.out}")
    return 0


def _cmd_predict(args) -> int:
    from .events import load_sector_features
    from .prediction import (load_checkpoint, load_dataset, percent_error,
                             split_by_date)
    import csv

    features = load_sector_features(args.features) if args.features else {}
    predictor, _ = load_checkpoint(args.model, event_features=features)
    rows = load_dataset(args.dataset)
    if args.split == "test":
        _, rows = split_by_date(rows, args.train_fraction)
    preds = [predictor.predict_row(r) for r in rows]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "hour", "sector", "y_true", "y_pred", "network"])
        for r, p in zip(rows, preds):
            writer.writerow([r.date, r.hour, r.sector, repr(float(r.count)),
                             repr(float(p)), predictor.network_for(r.date, r.sector)])
    pe, excluded = percent_error(preds, [r.count for r in rows])
    print(f"wrote {len(rows)} predictions to {args.out}; "
          f"percent error {pe:.4f} ({excluded} zero-actual rows excluded)")
    return 0


def _cmd_simulate(args) -> int:
    from .harness import (DemandSettings, ExperimentConfig, build_map,
                          generate_scenario, make_policy, predicted_hourly)
    from .demand import destination_matrix
    from .policies import RolloutConfig
    from .simulation import run_episode
    from .synth import synth_occupancy, synth_trips

    config = ExperimentConfig(
        map={"path": args.map},
        fleet_size=args.fleet,
        horizon=args.horizon,
        hours=(args.hour,),
        policies=(args.policy,),
        rollout=RolloutConfig(lookahead=args.lookahead, mc_scenarios=args.scenarios,
                              seed=args.seed),
        demand=DemandSettings(base_rate=args.base_rate,
                              surge_multiplier=args.surge_multiplier,
                              surge_sectors=tuple(args.surge_sectors or ()),
                              surge_hours=(args.hour,) if args.surge_sectors else ()),
        episodes=1,
        seed=args.seed,
    )
    g = build_map(config.map)
    occupancy = synth_occupancy(g, seed=config.seed)
    dest = destination_matrix(synth_trips(g, config.demand.trips, seed=config.seed + 1), g)
    y_hat = predicted_hourly(config, g, args.hour)
    scenario = generate_scenario(config, g, occupancy, dest, args.hour, 0, y_hat)
    policy = make_policy(args.policy, config, scenario.models, scenario.stream)
    trace = run_episode(g, scenario.initial, policy, scenario.stream,
                        config.horizon, seed=args.seed)
    trace.write(args.out)
    print(f"wrote {args.out}: total_cost={trace.total_cost} served={trace.served} "
          f"outstanding={trace.outstanding_end} generated={trace.generated}")
    return 0


def _cmd_benchmark(args) -> int:
    from .harness import ExperimentConfig, run_benchmark

    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    report = run_benchmark(config, out_dir=args.out)
    for row in report.rows:
        print(f"hour={row.hour} policy={row.policy} episodes={row.episodes} "
              f"cost={row.cost_mean:.1f}±{row.cost_se:.1f} "
              f"outstanding={row.outstanding_mean:.2f}")
    if report.errors:
        for err in report.errors:
            print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    from .harness import write_report

    written = write_report(args.records, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetsim",
        description="Taxi-fleet simulation, demand modelling and dispatch benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-map", help="generate a map file")
    p.add_argument("--generator", choices=("grid", "ring", "line"), default="grid")
    p.add_argument("--rows", type=int, default=10)
    p.add_argument("--cols", type=int, default=10)
    p.add_argument("--sectors-x", type=int, default=3)
    p.add_argument("--sectors-y", type=int, default=2)
    p.add_argument("--sectors", type=int, default=6)
    p.add_argument("--nodes-per-sector", type=int, default=16)
    p.add_argument("--nodes", type=int, default=4)
    p.add_argument("--eligible-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_map)

    p = sub.add_parser("gen-data", help="generate synthetic data files")
    p.add_argument("--map", required=True)
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--trips", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("cluster", help="aggregate event embeddings into sector features")
    p.add_argument("--events", required=True)
    p.add_argument("--b", type=int, default=3)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--max-reviews", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("train", help="train the demand prediction networks")
    p.add_argument("--dataset", required=True)
    p.add_argument("--features")
    p.add_argument("--hidden", default="32,32")
    p.add_argument("--event-hidden", default="128,128")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--weight-decay", type=float, default=1e-6)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--train-fraction", type=float, default=8 / 12)
    p.add_argument("--min-event-rows", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="predict hourly demand with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--features")
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--train-fraction", type=float, default=8 / 12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("simulate", help="run one episode and write its trace")
    p.add_argument("--map", required=True)
    p.add_argument("--policy", default="greedy")
    p.add_argument("--hour", type=int, default=17)
    p.add_argument("--horizon", type=int, default=60)
    p.add_argument("--fleet", type=int, default=8)
    p.add_argument("--base-rate", type=float, default=0.08)
    p.add_argument("--surge-multiplier", type=float, default=3.0)
    p.add_argument("--surge-sectors", type=int, nargs="*")
    p.add_argument("--lookahead", type=int, default=10)
    p.add_argument("--scenarios", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("benchmark", help="run a full paired benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("report", help="render plot-ready tables from benchmark records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
