"""Command-line interface: ``rmtfolio <command> [flags]``.

Every command writes into its own run directory under ``--out``: a config
echo, the delimited outputs, PNG figures (unless ``--no-figures``) and a
``manifest.json`` with input and output hashes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as rio
from .errors import EmptyNoiseBandError, RmtFolioError
from .marketdata import PricePanel, ReturnPanel, filter_fully_liquid, log_returns, read_prices, serialize_prices
from .markowitz import assemble_covariance, method_correlation, trace_frontier
from .methods import NO_SHORT, MethodConfig, WeightBounds, four_methods
from .pipeline import (
    ROLLING_ASSUMPTION,
    PairResult,
    WindowSpec,
    ibovespa_style_volatility,
    run_rolling,
    run_year_pair,
    spectrum_summary,
)
from .rmt import (
    MPParams,
    clean,
    decompose,
    eigenvalue_bounds_fraction,
    ks_one_sample,
    ks_two_sample,
    mp_bounds,
    mp_reference_sample,
    pearson_correlation,
    qq_points,
    shuffle_eigenvalue_sample,
)
from .singleindex import IndexSeries, eigen_market_index, fit_single_index, read_index
from .synthetic import synthetic_market

log = logging.getLogger("rmtfolio")

COMMANDS = ("ingest", "spectrum", "clean", "residuals", "frontier", "pair", "rolling", "simulate")


# --------------------------------------------------------------------- parsing


def _pair_of(text: str, kind=float) -> tuple:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}")
    try:
        return kind(parts[0]), kind(parts[1])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bounds(text: str) -> tuple[float, float]:
    return _pair_of(text, float)


def _int_pair(text: str) -> tuple[int, int]:
    return _pair_of(text, int)


def _date_range(text: str) -> tuple[str, str]:
    start, end = _pair_of(text, str)
    for d in (start, end):
        try:
            np.datetime64(d, "D")
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid date {d!r}") from None
    return start, end


def _year_pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in str(text).split(","):
        a, _, b = item.strip().partition("-")
        try:
            out.append((int(a), int(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"year pair must look like 2004-2005, got {item!r}") from None
    return out


def _shared_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--config", type=Path, help="file of key=value lines; flags given on the command line win")
    g.add_argument("--input", type=Path, help="price file (long: date,ticker,close; wide: date,<tickers>)")
    g.add_argument("--layout", choices=("long", "wide"), default="long")
    g.add_argument("--missing-token", default="", help="cell text meaning 'not traded' (default: empty cell)")
    g.add_argument("--synthetic", type=_int_pair, metavar="DAYS,ASSETS",
                   help="use a seeded one-factor market instead of --input")
    g.add_argument("--out", type=Path, default=Path("rmtfolio-out"))
    g.add_argument("--name", help="run subdirectory name (default: the command name)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--bins", type=int, default=50, help="histogram bins for the KL distance")
    g.add_argument("--bounds", type=_bounds, default=(0.0, 1.0), metavar="LO,HI", help="per-asset weight bounds")
    g.add_argument("--no-short", action="store_true", help="same as --bounds 0,1")
    g.add_argument("--clean", action="store_true", help="clean the correlation matrix (single-method mode)")
    g.add_argument("--regress", action="store_true", help="remove the market mode first (single-method mode)")
    g.add_argument("--methods", default="all",
                   help="comma-separated method labels (raw-noregress, ..., clean-regress) or 'all'")
    g.add_argument("--grid", type=int, default=100, help="frontier grid size")
    g.add_argument("--window", type=int, default=100)
    g.add_argument("--step", type=int, default=5)
    g.add_argument("--range", type=_date_range, metavar="START,END", help="restrict to an inclusive date range")
    g.add_argument("--index", type=Path, help="external index returns (date,return) for residuals/rolling")
    g.add_argument("--previous", type=_date_range, metavar="START,END")
    g.add_argument("--target", type=_date_range, metavar="START,END")
    g.add_argument("--years", type=_year_pairs, help="year pairs such as 2004-2005,2005-2006")
    g.add_argument("--sims", type=int, default=1000, help="number of shuffles for simulate")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--no-figures", action="store_true")
    g.add_argument("--quiet", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_parser()
    parser = argparse.ArgumentParser(
        prog="rmtfolio",
        description="Random-matrix cleaning and single-index regression for portfolio risk forecasts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "validate a price file and write the fully liquid panel",
        "spectrum": "eigenvalues, noise bands, Marchenko-Pastur overlay, qq points and KS test",
        "clean": "write the cleaned correlation matrix",
        "residuals": "single-index regression coefficients and residuals",
        "frontier": "one efficient frontier from a single window",
        "pair": "predicted vs realised frontiers for year pairs (metric tables)",
        "rolling": "sliding-window forecasts and metric series",
        "simulate": "shuffle baseline against the Marchenko-Pastur law",
    }
    parser.subcommands = {
        name: sub.add_parser(name, parents=[shared], help=helps[name], description=helps[name])
        for name in COMMANDS
    }
    return parser


def read_config(path: Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys use flag names with or without dashes."""
    out = {}
    with open(path, encoding="utf-8") as handle:
        for n, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{n}: expected key=value")
            out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _config_defaults(sub: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    """Convert config strings with the same types the flags use."""
    actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
    out = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ValueError(f"unknown config key {key!r}")
        if action.nargs == 0:
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"config key {key!r} expects true or false, got {text!r}")
            out[key] = lowered in ("true", "1", "yes")
        elif action.type is not None:
            out[key] = action.type(text)
        else:
            if action.choices and text not in action.choices:
                raise ValueError(f"config key {key!r} must be one of {sorted(action.choices)}")
            out[key] = text
    return out


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        sub = parser.subcommands[args.command]
        sub.set_defaults(**_config_defaults(sub, read_config(args.config)))
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- resolution


def resolve_bounds(args) -> WeightBounds:
    return NO_SHORT if args.no_short else WeightBounds(*args.bounds)


def resolve_methods(args) -> list[MethodConfig]:
    """``--clean``/``--regress`` pick one method; otherwise ``--methods`` chooses (default: all four)."""
    bounds = resolve_bounds(args)
    if args.clean or args.regress:
        return [MethodConfig(args.clean, args.regress, bounds, args.grid, args.bins, args.seed)]
    every = four_methods(bounds, grid_size=args.grid, bin_count=args.bins, seed=args.seed)
    if args.methods.strip() == "all":
        return every
    by_label = {m.label: m for m in every}
    chosen = []
    for label in args.methods.split(","):
        label = label.strip()
        if label not in by_label:
            raise ValueError(f"unknown method {label!r}; choose from {sorted(by_label)}")
        chosen.append(by_label[label])
    return chosen


def load_prices(args) -> tuple[PricePanel, list[Path]]:
    if args.synthetic is not None:
        if args.input is not None:
            raise ValueError("give either --input or --synthetic, not both")
        days, assets = args.synthetic
        prices, _ = synthetic_market(days, assets, seed=args.seed)
        return prices, []
    if args.input is None:
        raise ValueError("--input (or --synthetic DAYS,ASSETS) is required")
    return read_prices(args.input, args.layout, missing_token=args.missing_token), [args.input]


def window_returns(args, prices: PricePanel) -> ReturnPanel:
    if args.range is not None:
        prices = prices.select_dates(*args.range)
    return log_returns(filter_fully_liquid(prices))


def config_echo(args) -> dict:
    """Resolved settings; the output location is left out so runs are relocatable."""
    out = {}
    for key, value in sorted(vars(args).items()):
        if key == "out":
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, tuple):
            value = list(value)
        elif isinstance(value, list):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        out[key] = value
    return out


class Run:
    """Collects outputs for one run directory and writes the manifest at the end."""

    def __init__(self, args, inputs: list[Path]):
        self.args = args
        self.dir = Path(args.out) / (args.name or args.command)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs = list(inputs)
        self.figures = not args.no_figures
        self.text("config.json", json.dumps(config_echo(args), indent=2, sort_keys=True) + "\n")

    def text(self, rel: str, content: str) -> Path:
        return rio.write_text(self.dir / rel, content)

    def json(self, rel: str, data) -> Path:
        return self.text(rel, json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")

    def finish(self) -> Path:
        return rio.write_manifest(self.dir, self.inputs, config_echo(self.args))


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def _plotting():
    from . import plotting

    return plotting


# ------------------------------------------------------------------ commands


def cmd_ingest(args, prices: PricePanel, run: Run) -> None:
    liquid = filter_fully_liquid(prices)
    dropped = [t for t in prices.tickers if t not in liquid.tickers]
    run.text("panel.csv", serialize_prices(liquid, "long"))
    run.json(
        "summary.json",
        {
            "n_dates": int(prices.dates.size),
            "n_tickers": len(prices.tickers),
            "n_missing_cells": int(prices.missing.sum()),
            "n_liquid_tickers": len(liquid.tickers),
            "dropped_tickers": dropped,
            "first_date": str(prices.dates[0]),
            "last_date": str(prices.dates[-1]),
        },
    )


def _regressed_correlation(args, returns: ReturnPanel):
    """Correlation of the window, with the market mode regressed out when asked."""
    method = MethodConfig(False, args.regress)
    return method_correlation(returns, method)


def cmd_spectrum(args, prices: PricePanel, run: Run) -> None:
    returns = window_returns(args, prices)
    params = MPParams.for_panel(returns)
    corr = _regressed_correlation(args, returns)
    dec = decompose(corr, params)
    lo, hi = mp_bounds(params)
    run.text("spectrum.csv", rio.spectrum_csv(dec))
    run.text("qq.csv", rio.two_column_csv(qq_points(dec.eigenvalues, params), ("mp_quantile", "eigenvalue")))
    run.text("ks.json", rio.ks_json(ks_one_sample(dec.eigenvalues, params)) + "\n")
    summary = spectrum_summary(returns, corr)
    run.json("summary.json", {**summary.__dict__, "tickers": list(returns.tickers), "lambda_bounds": [lo, hi]})
    if run.figures:
        plotting = _plotting()
        plotting.spectrum(dec, run.dir / "figures" / "spectrum.png")
        plotting.qq(qq_points(dec.eigenvalues, params), run.dir / "figures" / "qq.png")


def cmd_clean(args, prices: PricePanel, run: Run) -> None:
    returns = window_returns(args, prices)
    params = MPParams.for_panel(returns)
    corr = _regressed_correlation(args, returns)
    dec = decompose(corr, params)
    run.text("correlation.csv", rio.correlation_csv(corr))
    run.text("spectrum.csv", rio.spectrum_csv(dec))
    try:
        cleaned = clean(dec)
    except EmptyNoiseBandError as exc:
        raise RmtFolioError(f"nothing to clean: {exc}") from exc
    run.text("cleaned.csv", rio.correlation_csv(cleaned))
    run.json("summary.json", {"mean_noise": dec.mean_noise, "n_noise": int(dec.noise_mask.sum()),
                              "trace_raw": float(np.trace(corr.values)),
                              "trace_cleaned": float(np.trace(cleaned.values)),
                              "diagonal_deviation": cleaned.diagonal_deviation})


def cmd_residuals(args, prices: PricePanel, run: Run) -> None:
    returns = window_returns(args, prices)
    if args.index is not None:
        index: IndexSeries = read_index(args.index).select(returns.dates)
        run.inputs.append(args.index)
    else:
        index = eigen_market_index(returns, decompose(pearson_correlation(returns), MPParams.for_panel(returns)))
    fit = fit_single_index(returns, index)
    rows = [[t, a, b] for t, a, b in zip(fit.tickers, fit.intercept, fit.slope)]
    run.text("coefficients.csv", rio.rows_csv(rows, ["ticker", "intercept", "slope"]))
    res_rows = [[str(d)] + list(r) for d, r in zip(fit.dates, fit.residuals)]
    run.text("residuals.csv", rio.rows_csv(res_rows, ["date"] + list(fit.tickers)))
    idx_rows = [[str(d), v] for d, v in zip(index.dates, index.values)]
    run.text("index.csv", rio.rows_csv(idx_rows, ["date", "return"]))
    run.json("summary.json", {"index_source": index.source, "n_obs": returns.n_obs, "tickers": list(fit.tickers)})


def cmd_frontier(args, prices: PricePanel, run: Run) -> None:
    returns = window_returns(args, prices)
    method = MethodConfig(args.clean, args.regress, resolve_bounds(args), args.grid, args.bins, args.seed)
    corr = method_correlation(returns, method)
    cov = assemble_covariance(corr, returns.std(), cleaned=method.cleaning, residual=method.regression)
    frontier = trace_frontier(cov, returns.mean(), method.bounds, method.grid_size)
    run.text(f"frontier_{method.label}.csv", rio.frontier_csv(frontier))
    run.text(f"frontier_{method.label}.json", rio.frontier_json(frontier) + "\n")
    if run.figures:
        _plotting().frontier_pair(frontier, frontier, run.dir / "figures" / f"frontier_{method.label}.png",
                                  title=method.label)


def _pair_ranges(args) -> list[tuple[str, tuple[str, str], tuple[str, str]]]:
    if args.years:
        return [
            (f"{a}-{b}", (f"{a}-01-01", f"{a}-12-31"), (f"{b}-01-01", f"{b}-12-31"))
            for a, b in args.years
        ]
    if args.previous is None or args.target is None:
        raise ValueError("pair needs --years or both --previous and --target")
    return [(f"{args.previous[0]}_{args.target[0]}", args.previous, args.target)]


def cmd_pair(args, prices: PricePanel, run: Run) -> None:
    methods = resolve_methods(args)
    results: list[PairResult] = []
    spectra = []
    for label, prev_range, targ_range in _pair_ranges(args):
        result = run_year_pair(prices, prev_range, targ_range, methods, label=label)
        results.append(result)
        for side, rng in (("previous", prev_range), ("target", targ_range)):
            panel = log_returns(prices.select_dates(*rng).select_tickers(result.tickers))
            s = spectrum_summary(panel)
            spectra.append([label, side, rng[0], rng[1], s.n_assets, s.n_obs, s.q, s.lambda_minus, s.lambda_plus,
                            s.lambda_1, s.lambda_2, s.mean_noise, s.n_above, s.n_below, s.ks_statistic,
                            s.ks_p_value])
        for rep, (pred, real) in zip(result.reports, result.frontiers):
            stem = f"{label}/{rep.method.label}"
            run.text(f"reports/{stem}.json", rep.to_json() + "\n")
            run.text(f"frontiers/{stem}_predicted.csv", rio.frontier_csv(pred))
            run.text(f"frontiers/{stem}_realized.csv", rio.frontier_csv(real))
            if run.figures:
                _plotting().frontier_pair(pred, real, run.dir / "figures" / f"{label}_{rep.method.label}.png",
                                          title=f"{label} {rep.method.label}")
    run.text("table.csv", rio.table_csv([(r.label, r.reports) for r in results]))
    run.text("reports.csv", rio.reports_csv(rep for r in results for rep in r.reports))
    run.text(
        "spectra.csv",
        rio.rows_csv(
            spectra,
            ["pair", "window", "start", "end", "n_assets", "n_obs", "q", "lambda_minus", "lambda_plus",
             "lambda_1", "lambda_2", "mean_noise", "n_above", "n_below", "ks_statistic", "ks_p_value"],
        ),
    )


def cmd_rolling(args, prices: PricePanel, run: Run) -> None:
    methods = resolve_methods(args)
    spec = WindowSpec(args.window, args.step, "rolling")
    if args.range is not None:
        prices = prices.select_dates(*args.range)
    result = run_rolling(prices, spec, methods, workers=args.workers)
    run.text("reports.csv", rio.reports_csv(rep for w in result.windows for rep in w.reports))
    header = ["window", "estimation_start", "estimation_end", "evaluation_start", "evaluation_end"]
    rows = []
    for w in result.windows:
        row = [w.index, str(w.estimation[0]), str(w.estimation[1]), str(w.evaluation[0]), str(w.evaluation[1])]
        for rep, env in zip(w.reports, w.envelopes):
            row += [rep.mse, rep.ag, rep.angle_deg, env.min_predicted, env.max_predicted, env.min_realized,
                    env.max_realized]
        rows.append(row)
    for m in methods:
        header += [f"{m.label}_{c}" for c in ("mse", "ag", "angle_deg", "min_predicted", "max_predicted",
                                             "min_realized", "max_realized")]
    run.text("series.csv", rio.rows_csv(rows, header))

    returns = log_returns(filter_fully_liquid(prices))
    if args.index is not None:
        index = read_index(args.index).select(returns.dates)
        run.inputs.append(args.index)
        vol_source = "external index"
    else:
        index = IndexSeries(returns.dates, returns.returns.mean(axis=1), "external")
        vol_source = "equal-weighted average return of the universe"
    vol = ibovespa_style_volatility(index, spec)
    run.text("volatility.csv", rio.two_column_csv(np.column_stack([np.arange(vol.size), vol]), ("window", "std")))
    run.json("metadata.json", {"assumption": ROLLING_ASSUMPTION, "volatility_source": vol_source,
                               "n_windows": len(result.windows), "tickers": list(result.tickers),
                               "q": spec.window_length / len(result.tickers),
                               "methods": [m.to_dict() for m in methods]})
    if run.figures:
        plotting = _plotting()
        plotting.series({m.label: result.series("mse", k) for k, m in enumerate(methods)},
                        run.dir / "figures" / "mse.png", "MSE", logy=True)
        plotting.series({"volatility": vol}, run.dir / "figures" / "volatility.png", "std of returns")
        for k, m in enumerate(methods):
            plotting.envelope(result.envelope_series(k), run.dir / "figures" / f"envelope_{m.label}.png")


def cmd_simulate(args, prices: PricePanel, run: Run) -> None:
    returns = window_returns(args, prices)
    params = MPParams.for_panel(returns)
    sample = shuffle_eigenvalue_sample(returns, args.sims, args.seed)
    pooled = np.sort(sample.ravel())
    rows = np.column_stack([np.repeat(np.arange(args.sims), returns.n_assets), sample.ravel()])
    run.text("eigenvalues.csv", rio.two_column_csv(rows, ("simulation", "eigenvalue")))
    run.text("qq.csv", rio.two_column_csv(qq_points(pooled, params), ("mp_quantile", "eigenvalue")))
    run.text("ks.json", rio.ks_json(ks_one_sample(pooled, params)) + "\n")
    reference = mp_reference_sample(params, pooled.size)
    run.text("ks_two_sample.json", rio.ks_json(ks_two_sample(pooled, reference)) + "\n")
    run.json("summary.json", {"n_sims": args.sims, "n_assets": returns.n_assets, "n_obs": returns.n_obs,
                              "q": params.q, "lambda_bounds": list(mp_bounds(params)),
                              "inside_fraction": eigenvalue_bounds_fraction(pooled, params)})
    if run.figures:
        plotting = _plotting()
        dec = decompose(pearson_correlation(returns), params)
        plotting.spectrum(dec, run.dir / "figures" / "spectrum.png", shuffled=sample)
        plotting.qq(qq_points(pooled, params), run.dir / "figures" / "qq.png")


HANDLERS = {
    "ingest": cmd_ingest,
    "spectrum": cmd_spectrum,
    "clean": cmd_clean,
    "residuals": cmd_residuals,
    "frontier": cmd_frontier,
    "pair": cmd_pair,
    "rolling": cmd_rolling,
    "simulate": cmd_simulate,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except (OSError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"rmtfolio: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        prices, inputs = load_prices(args)
        run = Run(args, inputs)
        HANDLERS[args.command](args, prices, run)
        manifest = run.finish()
    except (RmtFolioError, ValueError, OSError) as exc:
        print(f"rmtfolio: error: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %s", manifest.parent)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
