"""Command-line entry point: ingest, regress, acf, synth and report.

Stages talk only through files in the output directory:

    tape.csv --ingest--> panel.csv + summands.csv + ingest_summary.json
    panel.csv --regress--> fit_report.json + scatter_*.csv + partial_bins.csv
    panel.csv + summands.csv (or a tape) --acf--> acf.csv + acf_decomposition.csv

Exit codes: 0 success, 1 analysis/domain error, 2 usage/input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from datetime import datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import acf as acf_mod
from . import flow, regress, synth, tape
from .concentration import Side
from .errors import DomainError, InputError, TradeConcError

log = logging.getLogger("tradeconc")

FWL_RTOL = 1e-9


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict, stamp: bool = False) -> None:
    if stamp:
        payload = dict(payload, generated_at=datetime.now(timezone.utc).isoformat())
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {p}")
    return p


def _parse_clock(text: str) -> time:
    try:
        return time.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a HH:MM time: {text!r}") from None


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1]: {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer: {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def _add_ingest_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("ingest options")
    g.add_argument("--index", help="index returns CSV (date,return_pct); default: equal-weighted proxy")
    g.add_argument("--window", choices=("day", "trades"), default="day", help="session window kind")
    g.add_argument("--n-trades", type=_positive_int, help="trades per window for --window trades")
    g.add_argument("--trim-open", type=float, default=30.0, help="minutes dropped after the open")
    g.add_argument("--trim-close", type=float, default=30.0, help="minutes dropped before the close")
    g.add_argument("--open", type=_parse_clock, default=time(8, 0), help="session open, local HH:MM")
    g.add_argument("--close", type=_parse_clock, default=time(16, 30), help="session close, local HH:MM")
    g.add_argument("--tz", default="UTC", help="exchange time zone for the session clock")
    g.add_argument("--min-trades", type=_positive_int, default=500)
    g.add_argument("--max-move", type=_positive_float, default=5.0, help="max |session return| in percent")
    g.add_argument("--head-frac", type=_positive_float, default=0.10)
    g.add_argument("--tail-frac", type=_positive_float, default=0.10)
    g.add_argument("--max-errors", type=int, default=1000, help="bad rows tolerated before aborting")


def _ingest_config(args) -> dict:
    return {
        "window": args.window, "n_trades": args.n_trades,
        "trim_open_min": args.trim_open, "trim_close_min": args.trim_close,
        "open": args.open.isoformat(), "close": args.close.isoformat(), "tz": args.tz,
        "min_trades": args.min_trades, "max_move_pct": args.max_move,
        "head_frac": args.head_frac, "tail_frac": args.tail_frac,
        "index": Path(args.index).name if args.index else None,
    }


def _run_ingest(args):
    """Tape file -> (panel, summand series per side, summary dict, parse errors)."""
    path = _require_file(args.tape, "tape file")
    if args.window == "trades" and args.n_trades is None:
        raise InputError("--window trades requires --n-trades")
    if args.head_frac + args.tail_frac > 1.0:
        raise InputError("--head-frac + --tail-frac must not exceed 1")
    index = flow.read_index_returns(args.index) if args.index else None
    parsed = tape.parse_tape(path, max_errors=args.max_errors)
    trades = parsed.trades.sort_values(["symbol", "timestamp"], kind="stable").reset_index(drop=True)
    trims = dict(trim_open=timedelta(minutes=args.trim_open), trim_close=timedelta(minutes=args.trim_close))
    window = (tape.WindowSpec.calendar_day(**trims) if args.window == "day"
              else tape.WindowSpec.trade_count(args.n_trades, **trims))
    try:
        calendar = tape.ExchangeCalendar(args.open, args.close, args.tz)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    sessions = tape.sessionize(trades, window, calendar)
    if not sessions:
        raise DomainError("no trades inside the trimmed session windows")
    sessions = tape.filter_sessions(sessions, args.min_trades, args.max_move)
    if args.window == "trades" and index is not None:
        raise InputError("--index is only supported for calendar-day windows")
    panel = flow.build_panel(sessions, index, head_frac=args.head_frac, tail_frac=args.tail_frac)
    kept = set(zip(panel.rows["symbol"], panel.rows["session_id"]))
    in_panel = [s for s in sessions if s.excluded is None and (s.symbol, s.session_id) in kept]
    series = {side: acf_mod.summand_series(in_panel, side) for side in Side}
    summary = {
        "n_trades_parsed": len(parsed.trades),
        "n_bad_rows": len(parsed.errors),
        "n_sessions": len(sessions),
        "n_included": len(panel.rows),
        "excluded": panel.exclusion_counts(),
        "market_source": panel.market_source,
        "config": _ingest_config(args),
    }
    return panel, series, summary, parsed.errors


def cmd_ingest(args) -> int:
    out = _out_dir(args.out_dir)
    panel, series, summary, errors = _run_ingest(args)
    panel_path = out / "panel.csv"
    panel.to_csv(panel_path)
    acf_mod.write_summands(series[Side.BUY] + series[Side.SELL], out / "summands.csv")
    if errors:
        (out / "parse_errors.txt").write_text("".join(f"{e}\n" for e in errors))
    _write_json(out / "ingest_summary.json", summary, args.stamp)
    print(f"panel: {panel_path}")
    print(f"sessions: {summary['n_sessions']}  included: {summary['n_included']}  "
          f"bad rows: {summary['n_bad_rows']}")
    for reason, count in summary["excluded"].items():
        print(f"excluded {reason} = {count}")
    return 0


# ---------------------------------------------------------------------------
# regress
# ---------------------------------------------------------------------------


def _add_regress_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("regression options")
    g.add_argument("--no-bootstrap", action="store_true", help="skip the shuffle bootstrap")
    g.add_argument("--reps", type=_positive_int, default=1000, help="bootstrap replicates")
    g.add_argument("--seed", type=int, help="bootstrap seed (required unless --no-bootstrap)")
    g.add_argument("--q-low", type=_unit_interval, default=0.30)
    g.add_argument("--q-high", type=_unit_interval, default=0.70)
    g.add_argument("--bins", type=_positive_int, default=20, help="bins for the plot-data CSVs")


def _fit_block(fit: regress.RegressionFit) -> dict:
    coefs = {}
    for name in fit.names:
        coefs[name] = {
            "coef": fit.coefficients[name],
            "std_err": fit.std_errors[name],
            "p_classical": fit.p_values[name],
        }
        if name in fit.r2_single:
            coefs[name]["r2_single"] = fit.r2_single[name]
            coefs[name]["r2_partial"] = fit.r2_partial[name]
    terms = [n for n in fit.names if n != regress.CONST]
    return {
        "formula": f"{fit.response} ~ {'1 + ' if fit.intercept else '0 + '}{' + '.join(terms)}",
        "coefficients": coefs,
        "r2": fit.r2,
        "n_samples": fit.n_samples,
        "df_resid": fit.df_resid,
        "sigma": fit.sigma,
    }


def _run_regress(panel: flow.Panel, args, out: Path) -> dict:
    if not args.no_bootstrap and args.seed is None:
        raise InputError("--seed is required for the bootstrap (or pass --no-bootstrap)")
    if not args.q_low < args.q_high:
        raise InputError("--q-low must be below --q-high")
    fit = regress.ols_fit(panel)
    partial = regress.two_stage_partial(panel)
    full = fit.coefficients["dE"]
    if abs(partial.eta - full) > FWL_RTOL * max(1.0, abs(full)):
        raise DomainError(f"two-stage coefficient {partial.eta!r} does not match the full fit {full!r}")
    regimes = regress.regime_classify(panel, args.q_low, args.q_high)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        dummy = regress.dummy_regression(panel, regimes)
    regime_warnings = [str(w.message) for w in caught]
    for msg in regime_warnings:
        log.warning(msg)

    impact = _fit_block(fit)
    report = {
        "n_samples": len(panel.rows),
        "exclusion_counts": panel.exclusion_counts(),
        "impact_fit": impact,
        "partial_r2_definition": "(R2 - R2_without_v) / (1 - R2_without_v)",
        "p_value_definition": "two-sided normal",
        "partial_regression": {
            "eta": partial.eta, "std_err": partial.std_error, "p_value": partial.p_value,
            "r2": partial.r2, "controls": list(regress.ROUTING_REGRESSORS), "matches_full_fit": True,
        },
        "regimes": {
            "quantile_method": regress.QUANTILE_METHOD, "pooled_columns": ["E_b", "E_s"],
            "q_low": regimes.q_low, "q_high": regimes.q_high, "low": regimes.low, "high": regimes.high,
            "counts": regimes.counts(), "warnings": regime_warnings,
        },
        "dummy_fit": _fit_block(dummy),
        "config": {"bootstrap": not args.no_bootstrap, "reps": None if args.no_bootstrap else args.reps,
                   "seed": args.seed, "q_low": args.q_low, "q_high": args.q_high, "bins": args.bins},
    }
    if not args.no_bootstrap:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            boot = regress.bootstrap_null(panel, n_reps=args.reps, seed=args.seed)
        report["bootstrap"] = {"n_reps": boot.n_reps, "seed": boot.seed, "null_std": boot.null_std,
                               "std_ratio": boot.std_ratio}
        for name, row in impact["coefficients"].items():
            row["p_bootstrap"] = boot.p_values[name]
            row["p_discrepancy"] = regress.p_value_discrepancy(row["p_classical"], boot.p_values[name], boot.n_reps)

    flow.scatter_matrix(panel, n_bins=args.bins).write(out, "scatter")
    bins = flow.binned_means(partial.concentration_residuals, partial.price_residuals, args.bins)
    bins.to_csv(out / "partial_bins.csv", index=False, lineterminator="\n")
    return report


def cmd_regress(args) -> int:
    out = _out_dir(args.out_dir)
    panel = flow.Panel.from_csv(_require_file(args.panel, "panel file"))
    report = _run_regress(panel, args, out)
    path = out / "fit_report.json"
    _write_json(path, report, args.stamp)
    print(f"fit report: {path}")
    imp = report["impact_fit"]
    for name, row in imp["coefficients"].items():
        print(f"{name:>6} {row['coef']:10.3f} +/- {row['std_err']:.3f}")
    print(f"R2 = {imp['r2']:.4f}  n = {imp['n_samples']}")
    return 0


# ---------------------------------------------------------------------------
# acf
# ---------------------------------------------------------------------------


def _add_acf_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("ACF options")
    g.add_argument("--max-lag", type=_positive_int, default=20)
    g.add_argument("--month-mask", action="store_true",
                   help="treat same-firm pairs across a month boundary as cross-firm")
    g.add_argument("--summands", help="summand sidecar for panel input (default: summands.csv beside the panel)")


def _is_panel(path: Path) -> bool:
    with path.open("r", newline="") as fh:
        header = fh.readline().strip().split(",")
    return tuple(header) == flow.PANEL_COLUMNS


def _run_acf(panel: flow.Panel, series: dict, args, out: Path) -> dict:
    lags = np.arange(1, args.max_lag + 1)
    frames, summary = [], {}
    for side in Side:
        dec = acf_mod.decompose_acf(series[side], max_lag=args.max_lag, month_mask=args.month_mask)
        rep = acf_mod.acf_report(dec)
        rep.insert(0, "side", side.value)
        frames.append(rep)
        summary[side.value] = {"gamma_lag1": dec.gamma[0], "gamma_same_lag1": dec.gamma_same[0],
                               "gamma_cross_lag1": dec.gamma_cross[0], "n_series": dec.n_series}
    pd.concat(frames, ignore_index=True).to_csv(out / "acf_decomposition.csv", index=False, lineterminator="\n")
    per_stock = [g["dE"].to_numpy() for _, g in panel.rows.groupby("symbol", sort=True)]
    buy = frames[0]
    table = pd.DataFrame({
        "lag": lags,
        "gamma_E_buy": buy["gamma"].to_numpy(),
        "gamma_E_sell": frames[1]["gamma"].to_numpy(),
        "gamma_dE": acf_mod.concentration_acf(per_stock, max_lag=args.max_lag),
        "band": buy["band"].to_numpy(),
    })
    table.to_csv(out / "acf.csv", index=False, lineterminator="\n")
    return summary


def cmd_acf(args) -> int:
    out = _out_dir(args.out_dir)
    src = _require_file(args.input, "input file")
    if _is_panel(src):
        panel = flow.Panel.from_csv(src)
        sidecar = Path(args.summands) if args.summands else src.with_name("summands.csv")
        both = acf_mod.series_from_sidecar(panel.rows, sidecar)
        series = {side: [s for s in both if s.side is side] for side in Side}
    else:
        args.tape = args.input
        panel, series, _, _ = _run_ingest(args)
    summary = _run_acf(panel, series, args, out)
    print(f"acf: {out / 'acf.csv'}")
    for side, vals in summary.items():
        print(f"{side:>4} lag1 gamma={vals['gamma_lag1']:.4f} same={vals['gamma_same_lag1']:.4f} "
              f"cross={vals['gamma_cross_lag1']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = _out_dir(args.out_dir)
    cfg = synth.SynthConfig.from_json(args.config) if args.config else synth.SynthConfig()
    result = synth.generate_tape(cfg, args.seed)
    tape.write_tape(result.trades, out / "tape.csv")
    flow.write_index_returns(result.index_returns, out / "index.csv")
    result.truth.to_csv(out / "truth.csv", index=False, lineterminator="\n")
    echo = {"config": cfg.to_dict(), "seed": args.seed, "noise_bps": result.noise_bps,
            "n_trades": len(result.trades)}
    if args.panel:
        synth.generate_panel(cfg, args.seed).to_csv(out / "synth_panel.csv")
    _write_json(out / "synth_meta.json", echo, args.stamp)
    print(f"tape: {out / 'tape.csv'} ({len(result.trades)} trades)")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    out = _out_dir(args.out_dir)
    panel, series, summary, errors = _run_ingest(args)
    panel.to_csv(out / "panel.csv")
    acf_mod.write_summands(series[Side.BUY] + series[Side.SELL], out / "summands.csv")
    if errors:
        (out / "parse_errors.txt").write_text("".join(f"{e}\n" for e in errors))
    # the regression runs on the panel exactly as written to disk
    panel = flow.Panel.from_csv(out / "panel.csv")
    fit = _run_regress(panel, args, out)
    acf_summary = _run_acf(panel, series, args, out)
    _write_json(out / "report.json", {"ingest": summary, "fit": fit, "acf": acf_summary}, args.stamp)
    print(f"report: {out / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tradeconc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", default=".", help="output directory (default: current)")
        p.add_argument("--stamp", action="store_true", help="embed a generation timestamp in JSON outputs")

    p = sub.add_parser("ingest", help="tape -> panel CSV + summand sidecar + exclusion summary")
    p.add_argument("tape")
    common(p)
    _add_ingest_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("regress", help="panel -> fit report JSON + plot data")
    p.add_argument("panel")
    common(p)
    _add_regress_args(p)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("acf", help="panel (with summands.csv) or tape -> ACF and its decomposition")
    p.add_argument("input")
    common(p)
    _add_acf_args(p)
    _add_ingest_args(p)
    p.set_defaults(func=cmd_acf)

    p = sub.add_parser("synth", help="generate a synthetic tape with planted effects")
    p.add_argument("config", nargs="?", help="JSON config (default: built-in defaults)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--panel", action="store_true", help="also write a directly drawn panel (synth_panel.csv)")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="ingest + regress + acf in one go")
    p.add_argument("tape")
    common(p)
    _add_ingest_args(p)
    _add_regress_args(p)
    _add_acf_args(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except TradeConcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
