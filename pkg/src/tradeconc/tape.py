"""Firm-attributed trade tapes: parsing, sessionization and quality filters.

A tape is held column-wise in a :class:`pandas.DataFrame` with the columns
of :data:`FRAME_COLUMNS`:

=============  ==========================================================
timestamp      int64, milliseconds since the Unix epoch (UTC)
symbol         categorical
price          float64, GBP
size           int64, shares
notional       float64, GBP (price * size)
buyer_firm     categorical
seller_firm    categorical
aggressor      int8, +1 buyer initiated, -1 seller initiated
=============  ==========================================================

:class:`TradeRecord` is the row-level view of the same data.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from enum import Enum, IntEnum
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.csv as pacsv

from .errors import OrderingError, TapeFormatError

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("timestamp", "symbol", "price", "size", "buyer_firm", "seller_firm", "aggressor")
OPTIONAL_COLUMNS = ("notional",)
FRAME_COLUMNS = ("timestamp", "symbol", "price", "size", "notional", "buyer_firm", "seller_firm", "aggressor")

NOTIONAL_RTOL = 1e-9
MS_PER_DAY = 86_400_000
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Aggressor(IntEnum):
    BUYER_INITIATED = 1
    SELLER_INITIATED = -1

    @classmethod
    def from_code(cls, code: str) -> "Aggressor":
        if code == "B":
            return cls.BUYER_INITIATED
        if code == "S":
            return cls.SELLER_INITIATED
        raise ValueError(f"aggressor must be 'B' or 'S', got {code!r}")

    @property
    def code(self) -> str:
        return "B" if self is Aggressor.BUYER_INITIATED else "S"


@dataclass(frozen=True)
class TradeRecord:
    timestamp: int
    symbol: str
    price: float
    size: int
    notional: float
    buyer_firm: str
    seller_firm: str
    aggressor: Aggressor


@dataclass(frozen=True)
class RowError:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class ParsedTape:
    """Result of :func:`parse_tape`: the valid trades plus per-row errors."""

    trades: pd.DataFrame
    errors: list[RowError] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trades)

    def records(self) -> Iterator[TradeRecord]:
        return iter_records(self.trades)


def iter_records(trades: pd.DataFrame) -> Iterator[TradeRecord]:
    cols = [trades[c].tolist() for c in FRAME_COLUMNS]
    for ts, sym, price, size, notional, buyer, seller, aggr in zip(*cols):
        yield TradeRecord(int(ts), str(sym), float(price), int(size), float(notional),
                          str(buyer), str(seller), Aggressor(int(aggr)))


def trades_frame(records: Iterable[TradeRecord]) -> pd.DataFrame:
    """Build the canonical trades frame from row records."""
    records = list(records)
    return make_frame(
        timestamp=np.array([r.timestamp for r in records], dtype=np.int64),
        symbol=[r.symbol for r in records],
        price=np.array([r.price for r in records], dtype=np.float64),
        size=np.array([r.size for r in records], dtype=np.int64),
        buyer_firm=[r.buyer_firm for r in records],
        seller_firm=[r.seller_firm for r in records],
        aggressor=np.array([int(r.aggressor) for r in records], dtype=np.int8),
    )


def make_frame(*, timestamp, symbol, price, size, buyer_firm, seller_firm, aggressor) -> pd.DataFrame:
    price = np.asarray(price, dtype=np.float64)
    size = np.asarray(size, dtype=np.int64)
    return pd.DataFrame({
        "timestamp": np.asarray(timestamp, dtype=np.int64),
        "symbol": pd.Categorical(symbol),
        "price": price,
        "size": size,
        "notional": price * size,
        "buyer_firm": pd.Categorical(buyer_firm),
        "seller_firm": pd.Categorical(seller_firm),
        "aggressor": np.asarray(aggressor, dtype=np.int8),
    })


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_tape(source: str | Path | BinaryIO | bytes, *, max_errors: int = 1000) -> ParsedTape:
    """Parse a trade tape CSV.

    Clean files go through a typed pyarrow reader. Anything that reader
    rejects falls back to a row-by-row parser that reports every bad row
    with its line number (header is line 1). Bad rows are skipped; more
    than ``max_errors`` of them aborts with :class:`TapeFormatError`.
    """
    data = _read_bytes(source)
    header = _check_header(data)
    try:
        table = pacsv.read_csv(
            io.BytesIO(data),
            read_options=pacsv.ReadOptions(use_threads=False),
            parse_options=pacsv.ParseOptions(ignore_empty_lines=False),
            convert_options=pacsv.ConvertOptions(
                column_types=_arrow_types(header),
                null_values=[],
                strings_can_be_null=False,
                quoted_strings_can_be_null=False,
            ),
        )
    except pa.ArrowInvalid:
        return _parse_slow(data, header, max_errors)
    return _validate_table(table, header, max_errors)


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise TapeFormatError(f"tape file not found: {path}")
        return path.read_bytes()
    return source.read()


def _check_header(data: bytes) -> list[str]:
    first = data.split(b"\n", 1)[0].rstrip(b"\r")
    if not first:
        raise TapeFormatError("tape is empty or has no header row")
    try:
        header = next(csv.reader([first.decode("utf-8-sig")]))
    except UnicodeDecodeError as exc:
        raise TapeFormatError(f"header is not valid UTF-8: {exc}") from None
    header = [h.strip() for h in header]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise TapeFormatError(f"missing required column(s): {', '.join(missing)}")
    unknown = [c for c in header if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
    if unknown:
        raise TapeFormatError(f"unexpected column(s): {', '.join(unknown)}")
    if len(set(header)) != len(header):
        raise TapeFormatError("duplicate column names in header")
    return header


def _arrow_types(header: list[str]) -> dict:
    dict_str = pa.dictionary(pa.int32(), pa.string())
    types = {
        "timestamp": pa.timestamp("ms", tz="UTC"),
        "symbol": dict_str,
        "price": pa.float64(),
        "size": pa.int64(),
        "buyer_firm": dict_str,
        "seller_firm": dict_str,
        "aggressor": dict_str,
        "notional": pa.float64(),
    }
    return {c: types[c] for c in header}


def _validate_table(table: pa.Table, header: list[str], max_errors: int) -> ParsedTape:
    n = table.num_rows
    ts = table.column("timestamp").cast(pa.int64()).to_numpy()
    price = table.column("price").to_numpy()
    size = table.column("size").to_numpy()
    frame = table.select(["symbol", "buyer_firm", "seller_firm", "aggressor"]).to_pandas()
    for col in frame.columns:
        frame[col] = frame[col].astype("category")

    messages: list[tuple[np.ndarray, str]] = []
    messages.append((~np.isfinite(price) | (price <= 0), "non-positive price"))
    messages.append((size <= 0, "non-positive size"))
    for col in ("symbol", "buyer_firm", "seller_firm"):
        cat = frame[col].cat
        empty_codes = [i for i, v in enumerate(cat.categories) if v.strip() == ""]
        messages.append((np.isin(cat.codes.to_numpy(), empty_codes), f"empty {col}"))
    aggr_cat = frame["aggressor"].cat
    bad_aggr_codes = [i for i, v in enumerate(aggr_cat.categories) if v not in ("B", "S")]
    messages.append((np.isin(aggr_cat.codes.to_numpy(), bad_aggr_codes), "aggressor must be 'B' or 'S'"))
    notional = price * size
    if "notional" in header:
        given = table.column("notional").to_numpy()
        bad = ~np.isfinite(given) | (np.abs(given - notional) > NOTIONAL_RTOL * np.abs(notional))
        messages.append((bad, "notional does not equal price * size"))

    bad_any = np.zeros(n, dtype=bool)
    errors: list[RowError] = []
    for mask, msg in messages:
        if mask.any():
            # first failing check wins for a row, matching the slow parser
            new = mask & ~bad_any
            errors.extend(RowError(int(i) + 2, msg) for i in np.flatnonzero(new))
            bad_any |= mask
    errors.sort(key=lambda e: e.line)
    if len(errors) > max_errors:
        raise TapeFormatError(f"aborted: {len(errors)} bad rows exceeds max_errors={max_errors}; first: {errors[0]}")

    keep = ~bad_any
    sign_of_cat = np.array([1 if v == "B" else -1 for v in aggr_cat.categories], dtype=np.int8)
    sign = sign_of_cat[aggr_cat.codes.to_numpy()]
    out = pd.DataFrame({
        "timestamp": ts[keep],
        "symbol": frame["symbol"][keep].cat.remove_unused_categories().reset_index(drop=True),
        "price": price[keep],
        "size": size[keep],
        "notional": notional[keep],
        "buyer_firm": frame["buyer_firm"][keep].cat.remove_unused_categories().reset_index(drop=True),
        "seller_firm": frame["seller_firm"][keep].cat.remove_unused_categories().reset_index(drop=True),
        "aggressor": sign[keep],
    })
    return ParsedTape(out, errors)


def _parse_timestamp(text: str) -> int:
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    # fromisoformat before 3.11 only takes 3 or 6 fractional digits
    head, sep, frac_tz = s.partition(".")
    if sep:
        digits = ""
        i = 0
        while i < len(frac_tz) and frac_tz[i].isdigit():
            digits += frac_tz[i]
            i += 1
        if not digits:
            raise ValueError("empty fractional seconds")
        s = f"{head}.{(digits + '000000')[:6]}{frac_tz[i:]}"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError("timestamp lacks a UTC offset")
    return (dt - _EPOCH) // timedelta(milliseconds=1)


def _parse_slow(data: bytes, header: list[str], max_errors: int) -> ParsedTape:
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise TapeFormatError(f"tape is not valid UTF-8: {exc}") from None
    idx = {c: header.index(c) for c in header}
    ncols = len(header)
    has_notional = "notional" in idx

    rows: dict[str, list] = {c: [] for c in REQUIRED_COLUMNS}
    errors: list[RowError] = []

    def fail(line: int, msg: str) -> None:
        errors.append(RowError(line, msg))
        if len(errors) > max_errors:
            raise TapeFormatError(f"aborted: more than max_errors={max_errors} bad rows; first: {errors[0]}")

    reader = csv.reader(io.StringIO(text))
    next(reader)
    for row in reader:
        line = reader.line_num
        if not row:
            fail(line, "empty row")
            continue
        if len(row) != ncols:
            fail(line, f"expected {ncols} fields, got {len(row)}")
            continue
        try:
            ts = _parse_timestamp(row[idx["timestamp"]])
        except ValueError as exc:
            fail(line, f"bad timestamp {row[idx['timestamp']]!r}: {exc}")
            continue
        try:
            price = float(row[idx["price"]])
        except ValueError:
            fail(line, f"bad price {row[idx['price']]!r}")
            continue
        if not math.isfinite(price) or price <= 0:
            fail(line, "non-positive price")
            continue
        try:
            size = int(row[idx["size"]])
        except ValueError:
            fail(line, f"bad size {row[idx['size']]!r}")
            continue
        if size <= 0:
            fail(line, "non-positive size")
            continue
        symbol, buyer, seller = row[idx["symbol"]], row[idx["buyer_firm"]], row[idx["seller_firm"]]
        if not symbol.strip():
            fail(line, "empty symbol")
            continue
        if not buyer.strip():
            fail(line, "empty buyer_firm")
            continue
        if not seller.strip():
            fail(line, "empty seller_firm")
            continue
        aggr = row[idx["aggressor"]]
        if aggr not in ("B", "S"):
            fail(line, "aggressor must be 'B' or 'S'")
            continue
        if has_notional:
            try:
                given = float(row[idx["notional"]])
            except ValueError:
                fail(line, f"bad notional {row[idx['notional']]!r}")
                continue
            expected = price * size
            if not math.isfinite(given) or abs(given - expected) > NOTIONAL_RTOL * abs(expected):
                fail(line, "notional does not equal price * size")
                continue
        rows["timestamp"].append(ts)
        rows["symbol"].append(symbol)
        rows["price"].append(price)
        rows["size"].append(size)
        rows["buyer_firm"].append(buyer)
        rows["seller_firm"].append(seller)
        rows["aggressor"].append(1 if aggr == "B" else -1)

    frame = make_frame(**rows)
    return ParsedTape(frame, errors)


def write_tape(trades: pd.DataFrame, dest: str | Path | BinaryIO, *, chunk_rows: int = 2_000_000) -> None:
    """Write trades in the tape CSV format (no ``notional`` column)."""
    own = isinstance(dest, (str, Path))
    fh = open(dest, "wb") if own else dest
    try:
        fh.write((",".join(REQUIRED_COLUMNS) + "\n").encode())
        for start in range(0, len(trades), chunk_rows):
            part = trades.iloc[start:start + chunk_rows]
            stamps = np.datetime_as_string(part["timestamp"].to_numpy().astype("datetime64[ms]"), unit="ms")
            aggr = pd.Categorical.from_codes((part["aggressor"].to_numpy() < 0).astype(np.int8), ["B", "S"])
            table = pa.table({
                "timestamp": pa.array(np.char.add(stamps, "Z")),
                "symbol": pa.array(part["symbol"].astype("category")),
                "price": pa.array(part["price"].to_numpy()),
                "size": pa.array(part["size"].to_numpy()),
                "buyer_firm": pa.array(part["buyer_firm"].astype("category")),
                "seller_firm": pa.array(part["seller_firm"].astype("category")),
                "aggressor": pa.array(aggr),
            })
            buf = io.BytesIO()
            pacsv.write_csv(table, buf, pacsv.WriteOptions(include_header=False, quoting_style="none"))
            fh.write(buf.getvalue())
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


class WindowKind(str, Enum):
    CALENDAR_DAY = "CalendarDay"
    TRADE_COUNT = "TradeCount"


@dataclass(frozen=True)
class WindowSpec:
    kind: WindowKind = WindowKind.CALENDAR_DAY
    n_trades: int | None = None
    trim_open: timedelta = timedelta(minutes=30)
    trim_close: timedelta = timedelta(minutes=30)

    def __post_init__(self):
        if self.kind == WindowKind.TRADE_COUNT and (self.n_trades is None or self.n_trades < 1):
            raise ValueError("TradeCount windows need n_trades >= 1")
        if self.trim_open < timedelta(0) or self.trim_close < timedelta(0):
            raise ValueError("trims must be non-negative")

    @classmethod
    def calendar_day(cls, **kw) -> "WindowSpec":
        return cls(WindowKind.CALENDAR_DAY, None, **kw)

    @classmethod
    def trade_count(cls, n: int, **kw) -> "WindowSpec":
        return cls(WindowKind.TRADE_COUNT, n, **kw)


@dataclass(frozen=True)
class ExchangeCalendar:
    """Continuous-trading hours in the exchange's local clock; no holidays."""

    open: time = time(8, 0)
    close: time = time(16, 30)
    tz: str = "UTC"

    def __post_init__(self):
        if _ms_of_day(self.close) <= _ms_of_day(self.open):
            raise ValueError("close must be after open")


def _ms_of_day(t: time) -> int:
    return ((t.hour * 60 + t.minute) * 60 + t.second) * 1000 + t.microsecond // 1000


class Exclusion(str, Enum):
    TOO_FEW_TRADES = "TooFewTrades"
    LARGE_MOVE = "LargeMove"
    ZERO_VARIANCE = "ZeroVariance"


@dataclass(frozen=True)
class SessionTape:
    """Trades of one symbol in one session window, with per-firm GBP volumes.

    ``session_id`` is a :class:`datetime.date` for calendar-day windows and
    a 0-based window index for trade-count windows.
    """

    symbol: str
    session_id: date | int
    trades: pd.DataFrame
    firm_buy_volume: dict[str, float]
    firm_sell_volume: dict[str, float]
    excluded: Exclusion | None = None

    @property
    def n_trades(self) -> int:
        return len(self.trades)

    @property
    def n_buyers(self) -> int:
        return len(self.firm_buy_volume)

    @property
    def n_sellers(self) -> int:
        return len(self.firm_sell_volume)

    @property
    def total_notional(self) -> float:
        return math.fsum(self.trades["notional"].to_numpy())

    @property
    def day(self) -> date:
        """Calendar (local) date of the first trade; equals session_id for daily windows."""
        if isinstance(self.session_id, date):
            return self.session_id
        return _ms_to_date(int(self.trades["timestamp"].iat[0]))


def _ms_to_date(ms: int) -> date:
    return date(1970, 1, 1) + timedelta(days=ms // MS_PER_DAY)


def _local_ms(ts: np.ndarray, tz: str) -> np.ndarray:
    if tz.upper() == "UTC":
        return ts
    local = pd.to_datetime(ts, unit="ms", utc=True).tz_convert(tz).tz_localize(None)
    return local.to_numpy().astype("datetime64[ms]").astype(np.int64)


def check_sorted(trades: pd.DataFrame) -> None:
    """Raise :class:`OrderingError` unless rows are sorted by (symbol, timestamp)."""
    if len(trades) < 2:
        return
    sym = trades["symbol"].astype("category")
    cats = sym.cat.categories
    rank = np.empty(len(cats), dtype=np.int64)
    rank[np.argsort(np.asarray(cats, dtype=str), kind="stable")] = np.arange(len(cats))
    r = rank[sym.cat.codes.to_numpy()]
    ts = trades["timestamp"].to_numpy()
    bad = (r[1:] < r[:-1]) | ((r[1:] == r[:-1]) & (ts[1:] < ts[:-1]))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        a = (str(sym.iat[i]), _iso(ts[i]))
        b = (str(sym.iat[i + 1]), _iso(ts[i + 1]))
        raise OrderingError(f"trades not sorted by (symbol, timestamp): row {i} {a} precedes row {i + 1} {b}")


def _iso(ms) -> str:
    return str(np.datetime64(int(ms), "ms")) + "Z"


def sessionize(
    trades: pd.DataFrame,
    window: WindowSpec = WindowSpec(),
    calendar: ExchangeCalendar = ExchangeCalendar(),
) -> list[SessionTape]:
    """Split a sorted tape into sessions, dropping trades in the trimmed clock edges.

    Retained trades satisfy ``open + trim_open <= local time <= close - trim_close``.
    Calendar-day windows give one session per (symbol, day). Trade-count
    windows cut each symbol's retained trades into consecutive blocks of
    ``n_trades``; an incomplete trailing block is discarded.
    """
    check_sorted(trades)
    if len(trades) == 0:
        return []
    ts = trades["timestamp"].to_numpy()
    local = _local_ms(ts, calendar.tz)
    tod = local % MS_PER_DAY
    lo = _ms_of_day(calendar.open) + window.trim_open // timedelta(milliseconds=1)
    hi = _ms_of_day(calendar.close) - window.trim_close // timedelta(milliseconds=1)
    keep = (tod >= lo) & (tod <= hi)
    kept = trades.loc[keep].reset_index(drop=True)
    if len(kept) == 0:
        return []
    local = local[keep]
    day = local // MS_PER_DAY

    sym_codes = kept["symbol"].astype("category").cat.codes.to_numpy().astype(np.int64)
    sym_change = np.r_[True, sym_codes[1:] != sym_codes[:-1]]
    if window.kind == WindowKind.CALENDAR_DAY:
        starts = np.flatnonzero(sym_change | np.r_[True, day[1:] != day[:-1]])
        ends = np.r_[starts[1:], len(kept)]
        ids = [date(1970, 1, 1) + timedelta(days=int(day[s])) for s in starts]
    else:
        n = window.n_trades
        sym_starts = np.flatnonzero(sym_change)
        sym_ends = np.r_[sym_starts[1:], len(kept)]
        starts_l, ids = [], []
        for s0, e0 in zip(sym_starts, sym_ends):
            k = (e0 - s0) // n
            starts_l.extend(s0 + n * np.arange(k))
            ids.extend(range(k))
        starts = np.asarray(starts_l, dtype=np.int64)
        ends = starts + n

    firms = pd.api.types.union_categoricals(
        [kept["buyer_firm"].astype("category"), kept["seller_firm"].astype("category")]
    ).categories
    names = np.asarray(firms, dtype=object)
    buy_codes = pd.Categorical(kept["buyer_firm"], categories=firms).codes.astype(np.int64)
    sell_codes = pd.Categorical(kept["seller_firm"], categories=firms).codes.astype(np.int64)
    notional = kept["notional"].to_numpy()
    sym_names = np.asarray(kept["symbol"].astype("category").cat.categories, dtype=object)
    n_firms = len(firms)

    sessions = []
    for s, e, sid in zip(starts, ends, ids):
        sessions.append(SessionTape(
            symbol=str(sym_names[sym_codes[s]]),
            session_id=sid,
            trades=kept.iloc[s:e],
            firm_buy_volume=_firm_volumes(buy_codes[s:e], notional[s:e], n_firms, names),
            firm_sell_volume=_firm_volumes(sell_codes[s:e], notional[s:e], n_firms, names),
        ))
    return sessions


def _firm_volumes(codes: np.ndarray, notional: np.ndarray, n_firms: int, names: np.ndarray) -> dict[str, float]:
    vol = np.bincount(codes, weights=notional, minlength=n_firms)
    nz = np.flatnonzero(vol > 0)
    return dict(zip(names[nz].tolist(), vol[nz].tolist()))


def flatten_sessions(sessions: Sequence[SessionTape]) -> pd.DataFrame:
    if not sessions:
        return make_frame(timestamp=[], symbol=[], price=[], size=[], buyer_firm=[], seller_firm=[], aggressor=[])
    frame = pd.concat([s.trades for s in sessions], ignore_index=True)
    for col in ("symbol", "buyer_firm", "seller_firm"):
        frame[col] = frame[col].astype(str).astype("category")
    return frame


def filter_sessions(
    sessions: Iterable[SessionTape],
    min_trades: int = 500,
    max_abs_return_pct: float = 5.0,
) -> list[SessionTape]:
    """Flag sessions with fewer than ``min_trades`` trades or a raw return
    whose magnitude exceeds ``max_abs_return_pct`` percent.

    The trade-count screen is applied first; a session needs at least two
    trades for its return to exist, so shorter ones are always TooFewTrades.
    """
    from .flow import session_return

    if min_trades < 1:
        raise ValueError("min_trades must be >= 1")
    if not max_abs_return_pct > 0:
        raise ValueError("max_abs_return_pct must be positive")
    out = []
    for s in sessions:
        reason = None
        if s.n_trades < max(min_trades, 2):
            reason = Exclusion.TOO_FEW_TRADES
        elif abs(session_return(s)) > max_abs_return_pct:
            reason = Exclusion.LARGE_MOVE
        out.append(dataclasses.replace(s, excluded=reason) if reason is not None else s)
    counts = exclusion_counts(out)
    if counts:
        log.info("excluded sessions: %s", dict(counts))
    return out


def exclusion_counts(sessions: Iterable[SessionTape]) -> Counter:
    return Counter(s.excluded.value for s in sessions if s.excluded is not None)
