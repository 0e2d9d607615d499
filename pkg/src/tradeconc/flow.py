"""Session returns, order-flow imbalances and the per-session regression panel."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .concentration import Side, entropy_concentration, gini, volume_fractions
from .errors import DomainError, InputError, MissingIndexDateError
from .tape import Exclusion, SessionTape

log = logging.getLogger(__name__)

PANEL_COLUMNS = ("symbol", "session_id", "dP_bps", "E_b", "E_s", "G_b", "G_s", "dE", "dG", "dM", "dV", "dN", "excluded")
FEATURE_COLUMNS = PANEL_COLUMNS[2:-1]
IMBALANCE_COLUMNS = ("dE", "dG", "dM", "dV", "dN")
INDEX_SOURCE = "index"
PROXY_SOURCE = "equal-weighted cross-stock mean return (proxy)"


def vwap(price: np.ndarray, size: np.ndarray) -> float:
    return float(np.dot(price, size) / np.sum(size))


def session_return(session: SessionTape, head_frac: float = 0.10, tail_frac: float = 0.10) -> float:
    """Percent change from the VWAP of the first ``head_frac`` of trades to the
    VWAP of the last ``tail_frac``. Slices hold ``max(1, floor(frac * n))`` trades."""
    n = session.n_trades
    if n < 2:
        raise DomainError(f"{session.symbol} {session.session_id}: need at least 2 trades for a return, got {n}")
    if not (0 < head_frac <= 1 and 0 < tail_frac <= 1):
        raise ValueError("slice fractions must lie in (0, 1]")
    k_head = max(1, int(math.floor(head_frac * n)))
    k_tail = max(1, int(math.floor(tail_frac * n)))
    price = session.trades["price"].to_numpy()
    size = session.trades["size"].to_numpy()
    head = vwap(price[:k_head], size[:k_head])
    tail = vwap(price[n - k_tail:], size[n - k_tail:])
    return 100.0 * (tail - head) / head


def imbalance(x_buy: float, x_sell: float) -> float:
    den = x_buy + x_sell
    if den == 0:
        raise DomainError("imbalance undefined: buy and sell totals are both zero")
    return (x_buy - x_sell) / den


class FlowImbalances(NamedTuple):
    dM: float
    dV: float
    dN: float


def flow_imbalances(session: SessionTape) -> FlowImbalances:
    """Aggressive trade-count, aggressive notional and firm-count imbalances (buying positive)."""
    aggr = session.trades["aggressor"].to_numpy()
    notional = session.trades["notional"].to_numpy()
    buy = aggr > 0
    d_m = imbalance(float(np.count_nonzero(buy)), float(np.count_nonzero(~buy)))
    d_v = imbalance(float(notional[buy].sum()), float(notional[~buy].sum()))
    d_n = imbalance(float(session.n_buyers), float(session.n_sellers))
    return FlowImbalances(d_m, d_v, d_n)


@dataclass(frozen=True)
class SessionFeatures:
    symbol: str
    session_id: date | int
    return_pct: float
    E_b: float
    E_s: float
    G_b: float
    G_s: float
    dM: float
    dV: float
    dN: float
    N_b: int
    N_s: int

    @property
    def dE(self) -> float:
        return self.E_b - self.E_s

    @property
    def dG(self) -> float:
        return self.G_b - self.G_s


def session_features(session: SessionTape, head_frac: float = 0.10, tail_frac: float = 0.10) -> SessionFeatures:
    fb = volume_fractions(session, Side.BUY)
    fs = volume_fractions(session, Side.SELL)
    flows = flow_imbalances(session)
    return SessionFeatures(
        symbol=session.symbol,
        session_id=session.session_id,
        return_pct=session_return(session, head_frac, tail_frac),
        E_b=entropy_concentration(fb),
        E_s=entropy_concentration(fs),
        G_b=gini(fb),
        G_s=gini(fs),
        dM=flows.dM,
        dV=flows.dV,
        dN=flows.dN,
        N_b=fb.n,
        N_s=fs.n,
    )


def read_index_returns(path: str | Path) -> pd.Series:
    """Read a ``date,return_pct`` CSV into a Series indexed by :class:`datetime.date`."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"index returns file not found: {path}")
    df = pd.read_csv(path, float_precision="round_trip", dtype={"date": str})
    if list(df.columns) != ["date", "return_pct"]:
        raise InputError(f"{path}: expected columns date,return_pct, got {','.join(df.columns)}")
    try:
        days = [date.fromisoformat(d) for d in df["date"]]
    except ValueError as exc:
        raise InputError(f"{path}: bad date: {exc}") from None
    return pd.Series(df["return_pct"].to_numpy(dtype=float), index=days, name="return_pct")


def write_index_returns(index_returns: pd.Series, path: str | Path) -> None:
    out = pd.DataFrame({"date": [d.isoformat() for d in index_returns.index], "return_pct": index_returns.to_numpy()})
    out.to_csv(path, index=False, lineterminator="\n")


def market_proxy(returns: pd.DataFrame) -> pd.Series:
    """Equal-weighted cross-stock mean raw return per day."""
    return returns.groupby("day", sort=True)["return_pct"].mean()


def market_adjust(returns: pd.DataFrame, index_returns: Mapping | pd.Series | None = None) -> pd.Series:
    """Market-adjust and per-stock demean session returns.

    ``returns`` has columns ``symbol``, ``day`` and ``return_pct``. The index
    return of the day is subtracted, then each stock's mean adjusted return;
    the result is in basis points, aligned to ``returns.index``. Without an
    index series the cross-stock mean return stands in for the market.
    """
    if index_returns is None:
        index_returns = market_proxy(returns)
    index_returns = pd.Series(index_returns)
    days = returns["day"].to_numpy()
    missing = {d for d in set(days) if d not in index_returns.index}
    if missing:
        raise MissingIndexDateError(missing)
    adjusted = returns["return_pct"].to_numpy(dtype=float) - index_returns.loc[list(days)].to_numpy(dtype=float)
    adjusted = pd.Series(adjusted, index=returns.index)
    demeaned = adjusted - adjusted.groupby(returns["symbol"].to_numpy()).transform("mean")
    return 100.0 * demeaned


@dataclass
class Panel:
    """Included sessions' features plus a ledger of excluded sessions.

    ``rows`` holds every column of :data:`PANEL_COLUMNS` except ``excluded``;
    ``exclusions`` has columns ``symbol``, ``session_id``, ``reason``.
    ``scales`` holds the per-stock standard deviations that were divided out.
    """

    rows: pd.DataFrame
    exclusions: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["symbol", "session_id", "reason"]))
    scales: pd.DataFrame | None = None
    standardized: bool = False
    market_source: str = INDEX_SOURCE

    def __len__(self) -> int:
        return len(self.rows)

    def exclusion_counts(self) -> dict[str, int]:
        return {str(k): int(v) for k, v in self.exclusions["reason"].value_counts().sort_index().items()}

    def to_csv(self, path: str | Path) -> None:
        inc = self.rows.loc[:, list(PANEL_COLUMNS[:-1])].copy()
        inc["excluded"] = ""
        exc = pd.DataFrame({c: np.nan for c in PANEL_COLUMNS[2:-1]}, index=range(len(self.exclusions)))
        exc.insert(0, "symbol", self.exclusions["symbol"].to_numpy())
        exc.insert(1, "session_id", self.exclusions["session_id"].to_numpy())
        exc["excluded"] = self.exclusions["reason"].astype(str).to_numpy()
        out = pd.concat([inc, exc], ignore_index=True) if len(exc) else inc
        out["session_id"] = [_sid_str(s) for s in out["session_id"]]
        order = sorted(range(len(out)), key=lambda i: (out["symbol"].iat[i], _sid_key(out["session_id"].iat[i])))
        out = out.iloc[order]
        out.to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "Panel":
        path = Path(path)
        if not path.is_file():
            raise InputError(f"panel file not found: {path}")
        df = pd.read_csv(path, dtype={"symbol": str, "session_id": str, "excluded": str}, keep_default_na=False,
                         float_precision="round_trip",
                         na_values={c: [""] for c in FEATURE_COLUMNS})
        if tuple(df.columns) != PANEL_COLUMNS:
            raise InputError(f"{path}: expected columns {','.join(PANEL_COLUMNS)}")
        excluded = df["excluded"].str.len() > 0
        rows = df.loc[~excluded, list(PANEL_COLUMNS[:-1])].reset_index(drop=True)
        if rows[list(FEATURE_COLUMNS)].isna().any().any():
            raise InputError(f"{path}: included rows with missing values")
        exclusions = df.loc[excluded, ["symbol", "session_id", "excluded"]].rename(columns={"excluded": "reason"})
        return cls(rows, exclusions.reset_index(drop=True), standardized=True)


def _sid_str(s) -> str:
    return s.isoformat() if isinstance(s, date) else str(s)


def _sid_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


def build_panel(
    sessions: Sequence[SessionTape],
    index_returns: Mapping | pd.Series | None = None,
    *,
    head_frac: float = 0.10,
    tail_frac: float = 0.10,
    standardize_columns: bool = True,
) -> Panel:
    """Assemble the regression panel from filtered sessions."""
    included = [s for s in sessions if s.excluded is None]
    excl = pd.DataFrame(
        {"symbol": [s.symbol for s in sessions if s.excluded is not None],
         "session_id": [s.session_id for s in sessions if s.excluded is not None],
         "reason": [s.excluded.value for s in sessions if s.excluded is not None]},
        columns=["symbol", "session_id", "reason"],
    )
    if not included:
        raise DomainError("no included sessions to build a panel from")
    feats = [session_features(s, head_frac, tail_frac) for s in included]
    raw = pd.DataFrame({
        "symbol": [f.symbol for f in feats],
        "day": [s.day for s in included],
        "return_pct": [f.return_pct for f in feats],
    })
    source = INDEX_SOURCE
    if index_returns is None:
        source = PROXY_SOURCE
        log.warning("no index returns given; using %s", PROXY_SOURCE)
    dp = market_adjust(raw, index_returns)
    rows = pd.DataFrame({
        "symbol": raw["symbol"],
        "session_id": [f.session_id for f in feats],
        "dP_bps": dp.to_numpy(),
        "E_b": [f.E_b for f in feats],
        "E_s": [f.E_s for f in feats],
        "G_b": [f.G_b for f in feats],
        "G_s": [f.G_s for f in feats],
        "dE": [f.dE for f in feats],
        "dG": [f.dG for f in feats],
        "dM": [f.dM for f in feats],
        "dV": [f.dV for f in feats],
        "dN": [f.dN for f in feats],
    })
    panel = Panel(rows, excl, market_source=source)
    return standardize(panel) if standardize_columns else panel


def standardize(panel: Panel) -> Panel:
    """Divide each imbalance column by its per-stock sample standard deviation (n - 1).

    Imbalances are not demeaned. Stocks with fewer than two sessions or a
    zero standard deviation in any column are dropped and logged.
    """
    rows = panel.rows
    grouped = rows.groupby("symbol", sort=False)[list(IMBALANCE_COLUMNS)]
    sd = grouped.std(ddof=1)
    counts = grouped.size()
    bad = (counts < 2) | ~(sd > 0).all(axis=1) | ~np.isfinite(sd).all(axis=1)
    dropped = list(sd.index[bad])
    exclusions = panel.exclusions
    if dropped:
        log.warning("dropping %d stock(s) with zero imbalance variance: %s", len(dropped), ", ".join(map(str, dropped)))
        gone = rows[rows["symbol"].isin(dropped)]
        exclusions = pd.concat([exclusions, pd.DataFrame({
            "symbol": gone["symbol"].to_numpy(),
            "session_id": gone["session_id"].to_numpy(),
            "reason": Exclusion.ZERO_VARIANCE.value,
        })], ignore_index=True)
        rows = rows[~rows["symbol"].isin(dropped)]
    sd = sd.loc[~bad]
    out = rows.copy()
    scale = sd.loc[out["symbol"]].to_numpy()
    out[list(IMBALANCE_COLUMNS)] = out[list(IMBALANCE_COLUMNS)].to_numpy() / scale
    return replace(panel, rows=out.reset_index(drop=True), exclusions=exclusions, scales=sd, standardized=True)


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------

SCATTER_COLUMNS = ("dP_bps", "dE", "dM", "dV", "dN")


@dataclass
class ScatterMatrix:
    correlation: pd.DataFrame
    bins: pd.DataFrame
    histograms: pd.DataFrame
    samples: pd.DataFrame

    def write(self, out_dir: str | Path, prefix: str = "scatter") -> list[Path]:
        out_dir = Path(out_dir)
        paths = []
        for name, df, idx in (("corr", self.correlation, True), ("bins", self.bins, False),
                              ("hist", self.histograms, False), ("samples", self.samples, False)):
            p = out_dir / f"{prefix}_{name}.csv"
            df.to_csv(p, index=idx, lineterminator="\n")
            paths.append(p)
        return paths


def binned_means(x: np.ndarray, y: np.ndarray, n_bins: int = 20) -> pd.DataFrame:
    """Equal-count bins along ``x`` with the mean of ``y`` and its standard error per bin."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < n_bins:
        log.warning("only %d rows; reducing bin count from %d", x.size, n_bins)
        n_bins = max(1, x.size)
    order = np.argsort(x, kind="stable")
    recs = []
    for b, idx in enumerate(np.array_split(order, n_bins)):
        yb = y[idx]
        se = float(yb.std(ddof=1) / math.sqrt(yb.size)) if yb.size > 1 else float("nan")
        recs.append((b, float(x[idx].mean()), float(yb.mean()), se, int(yb.size)))
    return pd.DataFrame(recs, columns=["bin", "x_mean", "y_mean", "y_se", "count"])


def scatter_matrix(data, n_bins: int = 20, columns: Sequence[str] = SCATTER_COLUMNS) -> ScatterMatrix:
    """Correlations, binned conditional means and marginal histograms for every column pair."""
    rows = data.rows if isinstance(data, Panel) else data
    cols = list(columns)
    samples = rows.loc[:, cols].reset_index(drop=True)
    corr = samples.corr(method="pearson")
    if len(samples) < n_bins:
        log.warning("only %d rows; reducing bin count from %d", len(samples), n_bins)
        n_bins = max(1, len(samples))
    parts = []
    for xv in cols:
        for yv in cols:
            if xv == yv:
                continue
            b = binned_means(samples[xv].to_numpy(), samples[yv].to_numpy(), n_bins)
            b.insert(0, "y_var", yv)
            b.insert(0, "x_var", xv)
            parts.append(b)
    hists = []
    for v in cols:
        counts, edges = np.histogram(samples[v].to_numpy(), bins=n_bins)
        hists.append(pd.DataFrame({"var": v, "bin": np.arange(n_bins), "left": edges[:-1],
                                   "right": edges[1:], "count": counts}))
    return ScatterMatrix(corr, pd.concat(parts, ignore_index=True), pd.concat(hists, ignore_index=True), samples)
