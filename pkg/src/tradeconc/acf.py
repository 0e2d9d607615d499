"""Autocorrelation of concentration and its same-firm / cross-firm decomposition.

The decomposition works on the normalised raw entropy ``sum_i z_i(t)`` with
``z_i = -w_i log w_i / log N_t``, which is one minus the entropy
concentration score. Demeaning turns the two into negatives of each other,
so every autocorrelation below is the same under either convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .concentration import Side, entropy_concentration, volume_fractions
from .errors import DomainError, InputError

IDENTITY_TOL = 1e-9
SUMMAND_COLUMNS = ("symbol", "session_id", "side", "firm", "z_prime")


class MaxLagError(DomainError):
    def __init__(self, max_lag: int, length: int):
        self.suggested = max(0, length - 2)
        super().__init__(f"max_lag={max_lag} needs a series longer than {max_lag + 1} sessions, "
                         f"shortest series has {length}; use max_lag <= {self.suggested}")


def _lagged_products(x: np.ndarray, max_lag: int) -> np.ndarray:
    return np.array([np.mean(x[:-k] * x[k:]) for k in range(1, max_lag + 1)])


def concentration_acf(series, max_lag: int = 20, include_zero: bool = False) -> np.ndarray:
    """Autocorrelation ``<x(t) x(t+k)> / <x(t) x(t)>`` of demeaned series.

    ``series`` is one 1-D array or a sequence of them; several series are
    averaged with equal weight. Averages run over the available pairs.
    """
    if isinstance(series, np.ndarray) and series.ndim == 1:
        series = [series]
    out = []
    for x in series:
        x = np.asarray(x, dtype=float)
        if x.size <= max_lag + 1:
            raise MaxLagError(max_lag, x.size)
        flat = np.ptp(x) == 0
        x = x - x.mean()
        den = np.mean(x * x)
        if flat or not den > 0:
            raise DomainError("zero-variance series has no autocorrelation")
        g = _lagged_products(x, max_lag) / den
        out.append(np.r_[1.0, g] if include_zero else g)
    if not out:
        raise DomainError("no series given")
    return np.mean(out, axis=0)


@dataclass
class SummandSeries:
    """Demeaned per-firm entropy summands of one (symbol, side) series.

    ``entropy_raw`` is the aggregate normalised entropy per session computed
    independently of the summands; ``z_prime[t]`` sums to
    ``entropy_raw[t] - mean`` for every session.
    """

    symbol: str
    side: Side
    session_ids: list
    firms: list[np.ndarray]
    z_prime: list[np.ndarray]
    entropy_raw: np.ndarray
    mean: float = field(init=False)

    def __post_init__(self):
        self.entropy_raw = np.asarray(self.entropy_raw, dtype=float)
        self.mean = float(self.entropy_raw.mean())
        sums = np.array([z.sum() for z in self.z_prime])
        gap = np.max(np.abs(sums - (self.entropy_raw - self.mean))) if len(sums) else 0.0
        if gap > IDENTITY_TOL:
            raise DomainError(f"{self.symbol}/{self.side.value}: summands do not add up to the "
                              f"demeaned entropy (max gap {gap:.3g})")

    def __len__(self) -> int:
        return len(self.session_ids)

    @property
    def demeaned(self) -> np.ndarray:
        return self.entropy_raw - self.mean


def entropy_summands(w: np.ndarray) -> np.ndarray:
    """``-w_i log w_i / log N``; a single firm gives one zero summand."""
    w = np.asarray(w, dtype=float)
    if w.size == 1:
        return np.zeros(1)
    return -w * np.log(w) / math.log(w.size)


def summand_series(sessions: Sequence, side: Side | str) -> list[SummandSeries]:
    """One series per symbol from included sessions, in session order."""
    side = Side(side)
    by_symbol: dict[str, list] = {}
    for s in sessions:
        if getattr(s, "excluded", None) is None:
            by_symbol.setdefault(s.symbol, []).append(s)
    out = []
    for symbol, group in by_symbol.items():
        firms, z, e_raw, ids = [], [], [], []
        for s in group:
            f = volume_fractions(s, side)
            firms.append(np.asarray(list(f.fractions), dtype=object))
            z.append(entropy_summands(f.values()))
            e_raw.append(1.0 - entropy_concentration(f))
            ids.append(s.session_id)
        mean = float(np.mean(e_raw))
        zp = [zi - mean / zi.size for zi in z]
        out.append(SummandSeries(symbol, side, ids, firms, zp, np.array(e_raw)))
    return out


def _month_keys(session_ids: Sequence) -> np.ndarray | None:
    keys = []
    for s in session_ids:
        if isinstance(s, date):
            keys.append(s.year * 12 + s.month)
        elif isinstance(s, str) and len(s) >= 7 and s[4] == "-":
            keys.append(int(s[:4]) * 12 + int(s[5:7]))
        else:
            return None
    return np.array(keys)


@dataclass
class AcfDecomposition:
    lags: np.ndarray
    gamma: np.ndarray
    gamma_same: np.ndarray
    gamma_cross: np.ndarray
    n_pairs: np.ndarray
    n_series: int
    series_lengths: list[int]

    def check(self, tol: float = IDENTITY_TOL) -> None:
        gap = np.max(np.abs(self.gamma - (self.gamma_same - self.gamma_cross)))
        assert gap <= tol, f"decomposition identity violated: max |gamma - (same - cross)| = {gap:.3g}"


def _series_decomposition(s: SummandSeries, max_lag: int, month_mask: bool):
    T = len(s)
    if T <= max_lag + 1:
        raise MaxLagError(max_lag, T)
    e = s.demeaned
    den = np.mean(e * e)
    # a constant series leaves rounding residue after demeaning
    if np.ptp(s.entropy_raw) == 0 or not den > 0:
        raise DomainError(f"{s.symbol}/{s.side.value}: zero-variance concentration series")
    gamma = _lagged_products(e, max_lag) / den

    firm_index: dict = {}
    rows, cols, vals = [], [], []
    for t, (fs, zs) in enumerate(zip(s.firms, s.z_prime)):
        for f, v in zip(fs, zs):
            rows.append(t)
            cols.append(firm_index.setdefault(f, len(firm_index)))
            vals.append(v)
    Z = sp.csr_matrix((vals, (rows, cols)), shape=(T, len(firm_index)))
    totals = np.asarray(Z.sum(axis=1)).ravel()
    months = _month_keys(s.session_ids) if month_mask else None

    same = np.empty(max_lag)
    cross = np.empty(max_lag)
    for k in range(1, max_lag + 1):
        same_t = np.asarray(Z[:-k].multiply(Z[k:]).sum(axis=1)).ravel()
        if months is not None:
            same_t = np.where(months[:-k] == months[k:], same_t, 0.0)
        cross_t = totals[:-k] * totals[k:] - same_t
        same[k - 1] = same_t.mean() / den
        cross[k - 1] = -cross_t.mean() / den
    return gamma, same, cross, T


def decompose_acf(series: Iterable[SummandSeries], max_lag: int = 20, month_mask: bool = False) -> AcfDecomposition:
    """Split the concentration ACF into same-firm and (sign-flipped) cross-firm parts.

    Same-firm terms pair a firm's summand at ``t`` with its own summand at
    ``t + k`` when it trades in both sessions; all other products are
    cross-firm. With ``month_mask`` same-firm pairs spanning a calendar
    month boundary count as cross-firm (firm codes rotated monthly).
    Per-series results are averaged with equal weight.
    """
    series = list(series)
    if not series:
        raise DomainError("no series to decompose")
    parts = [_series_decomposition(s, max_lag, month_mask) for s in series]
    lengths = [p[3] for p in parts]
    lags = np.arange(1, max_lag + 1)
    dec = AcfDecomposition(
        lags=lags,
        gamma=np.mean([p[0] for p in parts], axis=0),
        gamma_same=np.mean([p[1] for p in parts], axis=0),
        gamma_cross=np.mean([p[2] for p in parts], axis=0),
        n_pairs=np.array([sum(T - k for T in lengths) for k in lags]),
        n_series=len(series),
        series_lengths=lengths,
    )
    dec.check()
    return dec


def acf_report(dec: AcfDecomposition) -> pd.DataFrame:
    """Plot data: ACF components, their logs (NaN where not positive) and a
    ``±2/sqrt(pairs)`` significance band per lag."""
    dec.check()
    with np.errstate(divide="ignore", invalid="ignore"):
        def safe_log(v):
            return np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), np.nan)
        return pd.DataFrame({
            "lag": dec.lags,
            "gamma": dec.gamma,
            "gamma_same": dec.gamma_same,
            "gamma_cross": dec.gamma_cross,
            "log10_lag": np.log10(dec.lags),
            "log10_gamma": safe_log(dec.gamma),
            "log10_gamma_same": safe_log(dec.gamma_same),
            "log10_gamma_cross": safe_log(dec.gamma_cross),
            "band": 2.0 / np.sqrt(dec.n_pairs),
            "n_pairs": dec.n_pairs,
        })


# ---------------------------------------------------------------------------
# Summand sidecar file
# ---------------------------------------------------------------------------


def _sid_str(s) -> str:
    return s.isoformat() if isinstance(s, date) else str(s)


def write_summands(series: Iterable[SummandSeries], path: str | Path) -> None:
    recs = {c: [] for c in SUMMAND_COLUMNS}
    for s in series:
        for sid, fs, zs in zip(s.session_ids, s.firms, s.z_prime):
            n = len(fs)
            recs["symbol"].extend([s.symbol] * n)
            recs["session_id"].extend([_sid_str(sid)] * n)
            recs["side"].extend([s.side.value] * n)
            recs["firm"].extend(str(f) for f in fs)
            recs["z_prime"].extend(zs.tolist())
    pd.DataFrame(recs).to_csv(path, index=False, lineterminator="\n")


def series_from_sidecar(panel_rows: pd.DataFrame, path: str | Path) -> list[SummandSeries]:
    """Rebuild summand series from a panel's rows and the summand sidecar.

    The aggregate entropy series comes from the panel's E_b / E_s columns;
    the sidecar must agree with it.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"summand sidecar not found: {path}")
    side_df = pd.read_csv(path, dtype={"symbol": str, "session_id": str, "side": str, "firm": str},
                          keep_default_na=False, float_precision="round_trip")
    if tuple(side_df.columns) != SUMMAND_COLUMNS:
        raise InputError(f"{path}: expected columns {','.join(SUMMAND_COLUMNS)}")
    groups = {k: g for k, g in side_df.groupby(["symbol", "side", "session_id"], sort=False)}
    out = []
    for symbol, rows in panel_rows.groupby("symbol", sort=False):
        sids = [str(s) for s in rows["session_id"]]
        for side, col in ((Side.BUY, "E_b"), (Side.SELL, "E_s")):
            firms, zp = [], []
            for sid in sids:
                g = groups.get((symbol, side.value, sid))
                if g is None:
                    raise InputError(f"{path}: no summands for {symbol} {side.value} {sid}")
                firms.append(g["firm"].to_numpy(dtype=object))
                zp.append(g["z_prime"].to_numpy(dtype=float))
            out.append(SummandSeries(symbol, side, sids, firms, zp, 1.0 - rows[col].to_numpy(dtype=float)))
    return out
