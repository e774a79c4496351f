"""Command-line entry point.

Subcommands: ingest, forecast, backtest, eventstudy, shapley, signals,
regress, synth, run. Exit codes: 0 ok, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import UserError


def _load_forecast_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"report_id": str, "firm_id": str})
    df["release_date"] = pd.to_datetime(df["release_date"])
    return df


def cmd_ingest(args) -> int:
    from .ingest import load_dataset, write_rejects

    dataset = load_dataset(args.config)
    write_rejects(dataset, args.rejects)
    print(f"accepted {len(dataset.reports)} reports, rejected {len(dataset.rejects)}")
    print(f"dataset hash {dataset.content_hash()[:16]}")
    return 0


def cmd_forecast(args) -> int:
    from .forecast import expanding_forecasts, parse_grid
    from .ingest import load_dataset

    dataset = load_dataset(args.config)
    run = expanding_forecasts(
        dataset,
        burn_in_months=args.burn_in,
        label_policy=args.label_policy,
        grid=parse_grid(args.grid),
        folds=args.folds,
    )
    out = run.forecasts.copy()
    out["release_date"] = out["release_date"].dt.strftime("%Y-%m-%d")
    out.to_csv(args.out, index=False)
    print(f"wrote {len(out)} forecasts to {args.out} ({len(run.skipped)} months skipped)")
    return 0


def cmd_backtest(args) -> int:
    import dataclasses

    from .ingest import load_dataset, load_factors
    from .pipeline import backtest_stats, write_json, write_series_csv

    dataset = load_dataset(args.config)
    if args.factors:
        dataset = dataclasses.replace(dataset, factors=load_factors(args.factors))
    forecasts = _load_forecast_csv(args.signal)
    start = pd.Period(args.start, freq="M") if args.start else None
    end = pd.Period(args.end, freq="M") if args.end else None
    combos = args.combos.split(",") if args.combos else None
    stats = backtest_stats(
        dataset, forecasts, args.lb, args.model, [args.cost_bps],
        min_breadth=args.min_breadth, start=start, end=end, combos=combos,
    )
    series = stats.pop("_series")
    if args.series_out:
        write_series_csv(Path(args.series_out), series)
    write_json(Path(args.out), stats)
    hl = stats["deciles"]["hl"]
    print(f"H-L mean {hl['mean']:.2f}%/mo, SR {hl['sharpe']:.2f}, alpha {hl['alpha']:.2f}")
    return 0


def cmd_eventstudy(args) -> int:
    from .eventstudy import event_decile_curves
    from .ingest import load_dataset

    dataset = load_dataset(args.config)
    forecasts = _load_forecast_csv(args.forecasts)
    curves = event_decile_curves(dataset, forecasts, horizon=args.horizon, bins=args.bins)
    with open(args.out, "w") as f:
        f.write("label,day,car,t\n")
        for label in sorted(curves):
            c = curves[label]
            for day in range(len(c.car)):
                t = c.tstats[day]
                f.write(f"{label},{day},{c.car[day]:.10g},{'' if not np.isfinite(t) else f'{t:.10g}'}\n")
    print(f"wrote curves for {len(curves)} portfolios to {args.out}")
    return 0


def cmd_shapley(args) -> int:
    from .attribution import (
        CoalitionEngine, identity_partition, mapped_partition, shapley_exact, shapley_mc,
    )
    from .forecast import expanding_forecasts, parse_grid
    from .ingest import load_config_file, load_dataset
    from .pipeline import write_json

    dataset = load_dataset(args.config)
    run = expanding_forecasts(
        dataset, burn_in_months=args.burn_in, grid=parse_grid(args.grid), folds=args.folds
    )
    labels = dataset.embeddings.labels
    background = args.background.split(",") if args.background else []
    if args.group_map:
        mapping = load_config_file(args.group_map)
        partition = mapped_partition(labels, mapping, background=background)
    else:
        partition = identity_partition(labels, background=background)
    engine = CoalitionEngine(
        dataset, run, partition, lookback=args.lb, threads=args.threads
    )
    if args.mode == "exact":
        report = shapley_exact(engine)
    else:
        report = shapley_mc(engine, samples=args.samples, seed=args.seed)
    write_json(Path(args.out), {"partition": args.partition, **report.as_dict()})
    for i, grp in enumerate(report.groups):
        print(
            f"{grp}: phi(SR)={report.phi['sr'][i]:+.4f} ({report.shares['sr'][i]:+.1%}), "
            f"phi(Ret)={report.phi['ret'][i]:+.4f}%/mo"
        )
    return 0


def cmd_signals(args) -> int:
    from .ingest import load_dataset
    from .signals import report_signals

    dataset = load_dataset(args.config)
    table = report_signals(dataset, include_car01=not args.no_car)
    table.to_csv(args.out, index=False)
    print(f"wrote {len(table)} signal rows to {args.out}")
    return 0


def cmd_regress(args) -> int:
    from .econometrics import panel_regression

    df = pd.read_csv(args.csv)
    fe = args.fe.split(",") if args.fe else []
    cluster = tuple(args.cluster.split(",")) if args.cluster else None
    if cluster is not None and len(cluster) != 2:
        raise UserError("--cluster needs exactly two comma-separated keys")
    nw_lags = 0
    if args.se.startswith("nw"):
        nw_lags = int(args.se.split(":")[1]) if ":" in args.se else 12
    res = panel_regression(
        df, args.y, args.x.split(","), fe_groups=fe, cluster_keys=cluster, nw_lags=nw_lags
    )
    print(json.dumps(res.as_dict(), indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    from .synth import SynthSpec, generate

    spec = SynthSpec.from_file(args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec.seed = args.seed
    manifest = generate(spec, args.out)
    print(f"generated {manifest['derived']['n_reports']} reports in {args.out}")
    return 0


def cmd_run(args) -> int:
    from .pipeline import RunConfig, run

    config = RunConfig.from_file(args.config, seed=args.seed, threads=args.threads)
    outdir = run(config)
    print(f"artifacts in {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="narralpha", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="load and join input files, writing a rejects report")
    s.add_argument("--config", required=True)
    s.add_argument("--rejects", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("forecast", help="expanding-window ridge forecasts")
    s.add_argument("--config", required=True)
    s.add_argument("--burn-in", type=int, default=60)
    s.add_argument("--grid", default="log:1e-2:1e6:9")
    s.add_argument("--label-policy", default="labels-realized",
                   choices=["labels-realized", "release-dated"])
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("backtest", help="decile portfolio backtest")
    s.add_argument("--config", required=True)
    s.add_argument("--signal", required=True, help="forecasts csv")
    s.add_argument("--lb", type=int, default=12)
    s.add_argument("--cost-bps", type=float, default=35.0)
    s.add_argument("--factors", default=None, help="override the config's factor panel")
    s.add_argument("--model", default="ff6")
    s.add_argument("--min-breadth", type=int, default=10)
    s.add_argument("--start", default=None)
    s.add_argument("--end", default=None)
    s.add_argument("--combos", default=None,
                   help="comma-separated factor columns to average 1/N with the spread")
    s.add_argument("--series-out", default=None, help="write monthly return series csv")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_backtest)

    s = sub.add_parser("eventstudy", help="abnormal-return event curves")
    s.add_argument("--config", required=True)
    s.add_argument("--forecasts", required=True)
    s.add_argument("--horizon", type=int, default=252)
    s.add_argument("--bins", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eventstudy)

    s = sub.add_parser("shapley", help="group attribution of portfolio performance")
    s.add_argument("--config", required=True)
    s.add_argument("--partition", default="file",
                   help="file|meta5|topic17|so-timeframe|so-sentiment|so-focus")
    s.add_argument("--group-map", default=None, help="JSON/TOML label->category mapping")
    s.add_argument("--background", default=None, help="comma-separated always-on labels")
    s.add_argument("--functional", default="sr", choices=["sr", "ret"])
    s.add_argument("--mode", default="exact", choices=["exact", "mc"])
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--burn-in", type=int, default=24)
    s.add_argument("--grid", default="log:1e-2:1e6:9")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--lb", type=int, default=12)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_shapley)

    s = sub.add_parser("signals", help="per-report derived measures")
    s.add_argument("--config", "--dataset", dest="config", required=True)
    s.add_argument("--no-car", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_signals)

    s = sub.add_parser("regress", help="ad-hoc regression on a csv")
    s.add_argument("--csv", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--x", required=True, help="comma-separated regressors")
    s.add_argument("--fe", default=None, help="comma-separated FE keys (max 2)")
    s.add_argument("--cluster", default=None, help="two comma-separated cluster keys")
    s.add_argument("--se", default="ols", help="ols | nw[:lags]")
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("synth", help="generate a synthetic input-file set")
    s.add_argument("--spec", default=None, help="JSON spec; defaults when omitted")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="full pipeline from a single config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - map everything else to exit 2
        logging.getLogger(__name__).exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
