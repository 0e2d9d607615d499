"""Synthetic firm-attributed tapes and panels with planted effects.

The generator knows the standardized imbalances it planted price moves on,
so the pipeline's estimates can be checked against known truth. Features
are computed here with an independent, vectorised implementation rather
than through the pipeline modules.

Trade tapes are simulated per stock and day:

* a random subset of the stock's firm pool is active each day; each side
  draws its own background firms with log-normal activity weights;
* a correlated Gaussian latent per day tilts aggressor probability,
  aggressive trade sizes and the buyer/seller firm counts;
* metaorders start at random, keep one firm on one side for
  ``horizon_days`` consecutive days at a constant participation rate
  (percentage of volume), and crowd out part of that side's background firms;
* the day's return is the planted linear model on the realised,
  per-stock standardized imbalances, plus regime offsets, noise, a per-stock
  drift and a market return that is written out as the index series.

Intraday prices sit at the opening level for the first 10% of trades and at
the closing level for the last 10%, so head/tail VWAPs reproduce the
planted return.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .errors import ConfigError
from .flow import INDEX_SOURCE, Panel

OPEN_MS = 8 * 3_600_000
CLOSE_MS = 16 * 3_600_000 + 30 * 60_000
TRIM_MS = 30 * 60_000
SLICE_FRAC = 0.10
REGIME_NAMES = ("ConcBuyConcSell", "ConcBuyDiluteSell", "DiluteBuyConcSell", "DiluteBuyDiluteSell")


@dataclass
class MetaorderSpec:
    start_prob: float = 0.10
    participation: float = 0.30
    horizon_days: int = 5
    aggressiveness: float = 0.5
    crowd_out: float = 0.30


@dataclass
class FlowSpec:
    # latent correlation between aggressor tilt, size tilt and firm-count tilt
    corr: list = field(default_factory=lambda: [[1.0, 0.7, 0.5], [0.7, 1.0, 0.6], [0.5, 0.6, 1.0]])
    aggressor_amp: float = 0.10
    size_skew: float = 0.30
    firm_count_amp: float = 0.15
    side_firm_frac: float = 0.70


@dataclass
class ImpactSpec:
    coef_E: float = 25.0
    coef_M: float = -3.0
    coef_V: float = 82.0
    coef_N: float = -61.0
    regime_offsets: dict = field(default_factory=lambda: {k: 0.0 for k in REGIME_NAMES})
    noise_bps: float = 100.0
    target_r2: float | None = None
    q_low: float = 0.30
    q_high: float = 0.70


@dataclass
class PanelSpec:
    # copula correlation over (dE, dM, dV, dN)
    corr: list = field(default_factory=lambda: [
        [1.0, 0.05, 0.05, -0.2],
        [0.05, 1.0, 0.7, 0.4],
        [0.05, 0.7, 1.0, 0.5],
        [-0.2, 0.4, 0.5, 1.0],
    ])
    entropy_mean: float = 0.20
    entropy_sd: float = 0.05


@dataclass
class SynthConfig:
    n_stocks: int = 46
    n_days: int = 674
    start_date: str = "2000-05-02"
    firms_per_day: tuple = (33, 72)
    firm_pool: int = 100
    trades_per_day: tuple = (2000, 5000)
    edge_trade_frac: float = 0.02
    size_mu: float = 7.0
    size_sigma: float = 1.0
    price_range: tuple = (1.0, 10.0)
    firm_weight_sigma: float = 0.8
    intraday_noise: float = 0.0005
    overnight_sigma: float = 0.002
    market_sigma_pct: float = 0.3
    stock_drift_sigma_pct: float = 0.05
    feature_iterations: int = 3
    metaorder: MetaorderSpec = field(default_factory=MetaorderSpec)
    flow: FlowSpec = field(default_factory=FlowSpec)
    impact: ImpactSpec = field(default_factory=ImpactSpec)
    panel: PanelSpec = field(default_factory=PanelSpec)

    def __post_init__(self):
        self.firms_per_day = tuple(self.firms_per_day)
        self.trades_per_day = tuple(self.trades_per_day)
        self.price_range = tuple(self.price_range)
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(f"invalid synth config: {msg}")

        need(self.n_stocks >= 1 and self.n_days >= 2, "need n_stocks >= 1 and n_days >= 2")
        lo, hi = self.firms_per_day
        need(1 <= lo <= hi <= self.firm_pool, "firms_per_day must satisfy 1 <= lo <= hi <= firm_pool")
        need(1 <= self.trades_per_day[0] <= self.trades_per_day[1], "trades_per_day must satisfy 1 <= lo <= hi")
        need(0 < self.price_range[0] <= self.price_range[1], "price_range must be positive and ordered")
        m = self.metaorder
        for name in ("start_prob", "aggressiveness", "crowd_out"):
            need(0.0 <= getattr(m, name) <= 1.0, f"metaorder.{name} must lie in [0, 1]")
        need(m.participation <= 1.0, f"infeasible metaorder participation {m.participation} (> 100% of volume)")
        need(m.participation >= 0.0, "metaorder.participation must be non-negative")
        need(m.horizon_days >= 1, "metaorder.horizon_days must be >= 1")
        need(0.0 <= self.edge_trade_frac <= 1.0, "edge_trade_frac must lie in [0, 1]")
        f = self.flow
        need(0 <= f.aggressor_amp < 0.5, "flow.aggressor_amp must lie in [0, 0.5)")
        need(0 < f.side_firm_frac <= 1, "flow.side_firm_frac must lie in (0, 1]")
        _cholesky(f.corr, "flow.corr", 3)
        _cholesky(self.panel.corr, "panel.corr", 4)
        imp = self.impact
        unknown = set(imp.regime_offsets) - set(REGIME_NAMES)
        need(not unknown, f"unknown regime(s) in impact.regime_offsets: {sorted(unknown)}")
        if imp.target_r2 is None:
            need(imp.noise_bps > 0, "impact.noise_bps must be positive")
        else:
            need(0 < imp.target_r2 < 1, "impact.target_r2 must lie in (0, 1)")
        need(0 <= imp.q_low < imp.q_high <= 1, "impact quantiles must satisfy 0 <= q_low < q_high <= 1")
        need(self.feature_iterations >= 1, "feature_iterations must be >= 1")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SynthConfig":
        nested = {"metaorder": MetaorderSpec, "flow": FlowSpec, "impact": ImpactSpec, "panel": PanelSpec}
        kwargs = {}
        known = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown synth config key: {key!r}")
            if key in nested:
                sub = nested[key]
                sub_known = {f.name for f in dataclasses.fields(sub)}
                if not isinstance(value, dict) or set(value) - sub_known:
                    raise ConfigError(f"bad section {key!r}: unknown keys {sorted(set(value) - sub_known)}")
                value = sub(**value)
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"invalid synth config: {exc}") from None

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        for k in ("firms_per_day", "trades_per_day", "price_range"):
            d[k] = list(d[k])
        return d

    def trading_days(self) -> list[date]:
        return [d.date() for d in pd.bdate_range(self.start_date, periods=self.n_days)]

    def symbols(self) -> list[str]:
        width = max(2, len(str(self.n_stocks - 1)))
        return [f"STK{i:0{width}d}" for i in range(self.n_stocks)]

    def firm_names(self) -> list[str]:
        width = max(3, len(str(self.firm_pool - 1)))
        return [f"F{i:0{width}d}" for i in range(self.firm_pool)]


def _cholesky(corr, name: str, dim: int) -> np.ndarray:
    c = np.asarray(corr, dtype=float)
    if c.shape != (dim, dim) or not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
        raise ConfigError(f"{name} must be a symmetric {dim}x{dim} correlation matrix")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{name} is not positive definite") from None


# ---------------------------------------------------------------------------
# Tape simulation
# ---------------------------------------------------------------------------


@dataclass
class _Day:
    t: np.ndarray        # in-window times, ms of day, sorted
    buyer: np.ndarray
    seller: np.ndarray
    size: np.ndarray
    aggr: np.ndarray     # +1 / -1
    noise: np.ndarray    # relative intraday price noise
    edge_t: np.ndarray
    edge_buyer: np.ndarray
    edge_seller: np.ndarray
    edge_size: np.ndarray
    edge_aggr: np.ndarray
    edge_noise: np.ndarray
    meta_side: int       # +1 buy, -1 sell, 0 none
    meta_firm: int


def _simulate_stock(cfg: SynthConfig, rng: np.random.Generator, chol: np.ndarray) -> list[_Day]:
    m, fl = cfg.metaorder, cfg.flow
    lo_t, hi_t = OPEN_MS + TRIM_MS, CLOSE_MS - TRIM_MS
    pool = cfg.firm_pool
    days = []
    meta_left, meta_firm, meta_side = 0, -1, 0
    for _ in range(cfg.n_days):
        if meta_left == 0 and m.participation > 0 and rng.random() < m.start_prob:
            meta_left = m.horizon_days
            meta_firm = int(rng.integers(pool))
            meta_side = 1 if rng.random() < 0.5 else -1
        active_meta = meta_left > 0
        n_firms = int(rng.integers(cfg.firms_per_day[0], cfg.firms_per_day[1] + 1))
        active = rng.choice(pool, n_firms, replace=False)
        u = chol @ rng.standard_normal(3)
        tilt_n = fl.firm_count_amp * math.tanh(u[2])
        n_b = max(1, round(n_firms * min(1.0, fl.side_firm_frac + tilt_n)))
        n_s = max(1, round(n_firms * min(1.0, fl.side_firm_frac - tilt_n)))
        if active_meta:
            bg_pool = active[active != meta_firm]
            if bg_pool.size == 0:
                bg_pool = active
            if meta_side > 0:
                n_b = max(1, round(n_b * (1.0 - m.crowd_out)))
            else:
                n_s = max(1, round(n_s * (1.0 - m.crowd_out)))
        else:
            bg_pool = active
        buyers = rng.choice(bg_pool, min(n_b, bg_pool.size), replace=False)
        sellers = rng.choice(bg_pool, min(n_s, bg_pool.size), replace=False)
        wb = rng.lognormal(0.0, cfg.firm_weight_sigma, buyers.size)
        ws = rng.lognormal(0.0, cfg.firm_weight_sigma, sellers.size)

        n = int(rng.integers(cfg.trades_per_day[0], cfg.trades_per_day[1] + 1))
        t = np.sort(rng.integers(lo_t, hi_t + 1, n))
        p_buy = 0.5 + fl.aggressor_amp * math.tanh(u[0])
        aggr = np.where(rng.random(n) < p_buy, 1, -1).astype(np.int8)
        base = rng.lognormal(cfg.size_mu, cfg.size_sigma, n)
        size = np.maximum(1, np.rint(base * np.exp(fl.size_skew * math.tanh(u[1]) * aggr))).astype(np.int64)
        buyer = buyers[rng.choice(buyers.size, n, p=wb / wb.sum())]
        seller = sellers[rng.choice(sellers.size, n, p=ws / ws.sum())]
        if active_meta:
            child = rng.random(n) < m.participation
            k = int(child.sum())
            if meta_side > 0:
                buyer[child] = meta_firm
            else:
                seller[child] = meta_firm
            aggressive = rng.random(k) < m.aggressiveness
            aggr[child] = np.where(aggressive, meta_side, -meta_side).astype(np.int8)
            meta_left -= 1
        noise = rng.normal(0.0, cfg.intraday_noise, n)

        n_edge = int(rng.binomial(n, cfg.edge_trade_frac)) if cfg.edge_trade_frac > 0 else 0
        at_close = rng.random(n_edge) < 0.5
        edge_t = np.where(at_close, rng.integers(hi_t + 1, CLOSE_MS + 1, n_edge),
                          rng.integers(OPEN_MS, lo_t, n_edge))
        days.append(_Day(
            t=t, buyer=buyer.astype(np.int32), seller=seller.astype(np.int32), size=size, aggr=aggr, noise=noise,
            edge_t=edge_t,
            edge_buyer=rng.choice(active, n_edge).astype(np.int32),
            edge_seller=rng.choice(active, n_edge).astype(np.int32),
            edge_size=np.maximum(1, np.rint(rng.lognormal(cfg.size_mu, cfg.size_sigma, n_edge))).astype(np.int64),
            edge_aggr=np.where(rng.random(n_edge) < 0.5, 1, -1).astype(np.int8),
            edge_noise=rng.normal(0.0, cfg.intraday_noise, n_edge),
            meta_side=meta_side if active_meta else 0,
            meta_firm=meta_firm if active_meta else -1,
        ))
        if meta_left == 0:
            meta_side, meta_firm = 0, -1
    return days


def _slice_sizes(n: int) -> tuple[int, int]:
    k = max(1, int(math.floor(SLICE_FRAC * n)))
    return k, k


def _intraday_prices(n: int, p_open: float, p_close: float, noise: np.ndarray) -> np.ndarray:
    k_head, k_tail = _slice_sizes(n)
    price = np.empty(n)
    price[:k_head] = p_open
    price[n - k_tail:] = p_close
    mid = n - k_head - k_tail
    if mid > 0:
        frac = (np.arange(mid) + 1.0) / (mid + 1.0)
        price[k_head:n - k_tail] = (p_open + (p_close - p_open) * frac) * (1.0 + noise[k_head:n - k_tail])
    return np.round(price, 6)


def _entropy_concentration(vol: np.ndarray) -> float:
    v = vol[vol > 0]
    if v.size <= 1:
        return 1.0
    w = v / v.sum()
    return 1.0 - float(-(w * np.log(w)).sum() / math.log(v.size))


def _day_features(d: _Day, price: np.ndarray, pool: int) -> tuple[float, float, float, float, float]:
    notional = price * d.size
    vb = np.bincount(d.buyer, notional, minlength=pool)
    vs = np.bincount(d.seller, notional, minlength=pool)
    buy = d.aggr > 0
    n_buy = int(buy.sum())
    d_m = (2 * n_buy - buy.size) / buy.size
    v_buy = notional[buy].sum()
    v_sell = notional[~buy].sum()
    d_v = (v_buy - v_sell) / (v_buy + v_sell)
    nb, ns = int((vb > 0).sum()), int((vs > 0).sum())
    d_n = (nb - ns) / (nb + ns)
    return _entropy_concentration(vb), _entropy_concentration(vs), d_m, d_v, d_n


def _standardize_by_stock(x: np.ndarray) -> np.ndarray:
    """x has shape (n_stocks, n_days); divide each row by its sample std."""
    return x / x.std(axis=1, ddof=1, keepdims=True)


def _regimes(e_b: np.ndarray, e_s: np.ndarray, q_low: float, q_high: float) -> np.ndarray:
    lo, hi = np.quantile(np.concatenate([e_b.ravel(), e_s.ravel()]), [q_low, q_high], method="linear")
    labels = np.full(e_b.shape, "", dtype=object)
    labels[(e_b > hi) & (e_s > hi)] = "ConcBuyConcSell"
    labels[(e_b > hi) & (e_s < lo)] = "ConcBuyDiluteSell"
    labels[(e_b < lo) & (e_s > hi)] = "DiluteBuyConcSell"
    labels[(e_b < lo) & (e_s < lo)] = "DiluteBuyDiluteSell"
    return labels


def _offsets(labels: np.ndarray, offsets: dict) -> np.ndarray:
    out = np.zeros(labels.shape)
    for name, value in offsets.items():
        out[labels == name] = value
    return out


@dataclass
class SyntheticTape:
    trades: pd.DataFrame
    index_returns: pd.Series
    truth: pd.DataFrame
    noise_bps: float


def generate_tape(cfg: SynthConfig, seed: int) -> SyntheticTape:
    """Simulate a full tape; a pure function of ``(cfg, seed)``."""
    cfg.validate()
    imp = cfg.impact
    chol = _cholesky(cfg.flow.corr, "flow.corr", 3)
    S, D = cfg.n_stocks, cfg.n_days
    stocks = [_simulate_stock(cfg, np.random.default_rng([seed, 0, s]), chol) for s in range(S)]

    rng = np.random.default_rng([seed, 1])
    eps = rng.standard_normal((S, D))
    market = rng.normal(0.0, cfg.market_sigma_pct, D)
    stock_drift = rng.normal(0.0, cfg.stock_drift_sigma_pct, S)
    p0 = rng.uniform(cfg.price_range[0], cfg.price_range[1], S)
    gaps = rng.normal(0.0, cfg.overnight_sigma, (S, D))

    drift = np.zeros((S, D))
    feats = np.zeros((S, D, 5))
    for _ in range(cfg.feature_iterations):
        opens, closes = _price_levels(p0, market, stock_drift, drift, gaps)
        for s, days in enumerate(stocks):
            for d, day in enumerate(days):
                price = _intraday_prices(day.t.size, opens[s, d], closes[s, d], day.noise)
                feats[s, d] = _day_features(day, price, cfg.firm_pool)
        e_b, e_s = feats[..., 0], feats[..., 1]
        z_e = _standardize_by_stock(e_b - e_s)
        z_m = _standardize_by_stock(feats[..., 2])
        z_v = _standardize_by_stock(feats[..., 3])
        z_n = _standardize_by_stock(feats[..., 4])
        labels = _regimes(e_b, e_s, imp.q_low, imp.q_high)
        signal = imp.coef_E * z_e + imp.coef_M * z_m + imp.coef_V * z_v + imp.coef_N * z_n
        signal = signal + _offsets(labels, imp.regime_offsets)
        noise_bps = _noise_scale(signal, imp)
        drift = signal + noise_bps * eps

    opens, closes = _price_levels(p0, market, stock_drift, drift, gaps)
    trades = _emit(cfg, stocks, opens, closes)
    days = cfg.trading_days()
    symbols = cfg.symbols()
    truth = pd.DataFrame({
        "symbol": np.repeat(symbols, D),
        "session_id": [d.isoformat() for d in days] * S,
        "E_b": e_b.ravel(), "E_s": e_s.ravel(),
        "zE": z_e.ravel(), "zM": z_m.ravel(), "zV": z_v.ravel(), "zN": z_n.ravel(),
        "regime": [r or "Unclassified" for r in labels.ravel()],
        "drift_bps": drift.ravel(),
        "market_pct": np.tile(market, S),
        "return_pct": (100.0 * (closes / opens - 1.0)).ravel(),
    })
    index = pd.Series(market, index=days, name="return_pct")
    return SyntheticTape(trades, index, truth, float(noise_bps))


def _noise_scale(signal: np.ndarray, imp: ImpactSpec) -> float:
    if imp.target_r2 is None:
        return float(imp.noise_bps)
    var = float(signal.var(ddof=1))
    return math.sqrt(var * (1.0 - imp.target_r2) / imp.target_r2) if var > 0 else float(imp.noise_bps)


def _price_levels(p0, market, stock_drift, drift, gaps):
    ret = market[None, :] + stock_drift[:, None] + drift / 100.0
    S, D = drift.shape
    opens = np.empty((S, D))
    closes = np.empty((S, D))
    level = p0.copy()
    for d in range(D):
        opens[:, d] = np.round(level, 6)
        closes[:, d] = np.round(opens[:, d] * (1.0 + ret[:, d] / 100.0), 6)
        level = closes[:, d] * (1.0 + gaps[:, d])
    return opens, closes


def _emit(cfg: SynthConfig, stocks: list[list[_Day]], opens: np.ndarray, closes: np.ndarray) -> pd.DataFrame:
    days = cfg.trading_days()
    day_ms = [(d - date(1970, 1, 1)).days * 86_400_000 for d in days]
    cols: dict[str, list] = {k: [] for k in ("ts", "sym", "price", "size", "buyer", "seller", "aggr")}
    for s, stock_days in enumerate(stocks):
        for d, day in enumerate(stock_days):
            price = _intraday_prices(day.t.size, opens[s, d], closes[s, d], day.noise)
            edge_open = day.edge_t < OPEN_MS + TRIM_MS
            edge_price = np.where(edge_open, opens[s, d], closes[s, d]) * (1.0 + day.edge_noise)
            t = np.concatenate([day.t, day.edge_t])
            order = np.argsort(t, kind="stable")
            n = t.size
            cols["ts"].append(day_ms[d] + t[order])
            cols["sym"].append(np.full(n, s, dtype=np.int32))
            cols["price"].append(np.concatenate([price, np.round(edge_price, 6)])[order])
            cols["size"].append(np.concatenate([day.size, day.edge_size])[order])
            cols["buyer"].append(np.concatenate([day.buyer, day.edge_buyer])[order])
            cols["seller"].append(np.concatenate([day.seller, day.edge_seller])[order])
            cols["aggr"].append(np.concatenate([day.aggr, day.edge_aggr])[order])
    firms = cfg.firm_names()
    price = np.concatenate(cols["price"])
    size = np.concatenate(cols["size"])
    return pd.DataFrame({
        "timestamp": np.concatenate(cols["ts"]).astype(np.int64),
        "symbol": pd.Categorical.from_codes(np.concatenate(cols["sym"]), cfg.symbols()),
        "price": price,
        "size": size,
        "notional": price * size,
        "buyer_firm": pd.Categorical.from_codes(np.concatenate(cols["buyer"]), firms),
        "seller_firm": pd.Categorical.from_codes(np.concatenate(cols["seller"]), firms),
        "aggressor": np.concatenate(cols["aggr"]).astype(np.int8),
    })


# ---------------------------------------------------------------------------
# Panel fast path
# ---------------------------------------------------------------------------


def generate_panel(cfg: SynthConfig, seed: int) -> Panel:
    """Draw a standardized panel directly from a Gaussian copula.

    ``dP_bps`` is exactly the planted model (no intercept) applied to the
    standardized columns plus regime offsets and noise.
    """
    cfg.validate()
    imp, ps = cfg.impact, cfg.panel
    chol = _cholesky(ps.corr, "panel.corr", 4)
    S, D = cfg.n_stocks, cfg.n_days
    rng = np.random.default_rng([seed, 3])
    lat = np.einsum("ij,sdj->sdi", chol, rng.standard_normal((S, D, 4)))
    level = rng.standard_normal((S, D))
    d_lat = lat[..., 0]
    e_b = np.clip(ps.entropy_mean + ps.entropy_sd * (level + d_lat) / math.sqrt(2.0), 0.0, 1.0)
    e_s = np.clip(ps.entropy_mean + ps.entropy_sd * (level - d_lat) / math.sqrt(2.0), 0.0, 1.0)
    g_b = np.clip(0.35 + 1.2 * (e_b - ps.entropy_mean), 0.0, 0.99)
    g_s = np.clip(0.35 + 1.2 * (e_s - ps.entropy_mean), 0.0, 0.99)
    z_e = _standardize_by_stock(e_b - e_s)
    z_g = _standardize_by_stock(g_b - g_s)
    z_m = _standardize_by_stock(lat[..., 1])
    z_v = _standardize_by_stock(lat[..., 2])
    z_n = _standardize_by_stock(lat[..., 3])
    labels = _regimes(e_b, e_s, imp.q_low, imp.q_high)
    signal = imp.coef_E * z_e + imp.coef_M * z_m + imp.coef_V * z_v + imp.coef_N * z_n
    signal = signal + _offsets(labels, imp.regime_offsets)
    noise = _noise_scale(signal, imp) * rng.standard_normal((S, D))
    days = [d.isoformat() for d in cfg.trading_days()]
    rows = pd.DataFrame({
        "symbol": np.repeat(cfg.symbols(), D),
        "session_id": days * S,
        "dP_bps": (signal + noise).ravel(),
        "E_b": e_b.ravel(), "E_s": e_s.ravel(), "G_b": g_b.ravel(), "G_s": g_s.ravel(),
        "dE": z_e.ravel(), "dG": z_g.ravel(), "dM": z_m.ravel(), "dV": z_v.ravel(), "dN": z_n.ravel(),
    })
    return Panel(rows, standardized=True, market_source=INDEX_SOURCE)
