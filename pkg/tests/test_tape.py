import io
import math
from datetime import date, time, timedelta

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from conftest import frame, random_day, ts
from tradeconc import tape
from tradeconc.errors import OrderingError, TapeFormatError
from tradeconc.tape import (
    Aggressor,
    ExchangeCalendar,
    Exclusion,
    WindowSpec,
    filter_sessions,
    flatten_sessions,
    parse_tape,
    sessionize,
    write_tape,
)

HEADER = "timestamp,symbol,price,size,buyer_firm,seller_firm,aggressor\n"


def parse(text: str, **kw):
    return parse_tape(text.encode(), **kw)


def test_parse_single_row():
    out = parse(HEADER + "2000-05-09T08:31:00.000Z,LLOY,6.50,1000,A1,B2,B\n")
    assert out.errors == []
    (rec,) = list(out.records())
    assert rec.price == 6.50 and rec.size == 1000 and rec.notional == 6500.0
    assert rec.aggressor is Aggressor.BUYER_INITIATED
    assert rec.buyer_firm == "A1" and rec.seller_firm == "B2" and rec.symbol == "LLOY"
    assert rec.timestamp == ts("2000-05-09", "08:31")


def test_empty_body_gives_no_records():
    out = parse(HEADER)
    assert len(out) == 0 and out.errors == []


def test_size_zero_row_is_reported_and_skipped():
    text = HEADER + ("2000-05-09T09:00:00.000Z,LLOY,6.5,0,A,B,S\n"
                     "2000-05-09T09:00:01.000Z,LLOY,6.5,10,A,B,S\n")
    out = parse(text)
    assert len(out) == 1
    assert [(e.line, e.message) for e in out.errors] == [(2, "non-positive size")]


def test_slow_path_reports_line_numbers():
    text = HEADER + ("2000-05-09T09:00:00.000Z,LLOY,6.5,10,A,B,S\n"
                     "garbage,LLOY,6.5,10,A,B,S\n"
                     "2000-05-09T09:00:02.000Z,LLOY,abc,10,A,B,S\n"
                     "2000-05-09T09:00:03.000Z,LLOY,6.5,10,A,B\n"
                     "2000-05-09T09:00:04.000Z,LLOY,6.5,10,A,B,X\n"
                     "2000-05-09T09:00:05.000Z,LLOY,6.5,10,,B,S\n"
                     "2000-05-09T09:00:06.000,LLOY,6.5,10,A,B,S\n"
                     "2000-05-09T09:00:07.000+01:00,LLOY,6.5,10,A,B,B\n")
    out = parse(text)
    lines = {e.line: e.message for e in out.errors}
    assert sorted(lines) == [3, 4, 5, 6, 7, 8]
    assert "bad timestamp" in lines[3] and "bad price" in lines[4]
    assert lines[5] == "expected 7 fields, got 6"
    assert lines[6] == "aggressor must be 'B' or 'S'" and lines[7] == "empty buyer_firm"
    assert "UTC offset" in lines[8]
    got = out.trades
    assert len(got) == 2
    assert got["timestamp"].iloc[1] == ts("2000-05-09", "08:00:07")


def test_fast_and_slow_paths_agree():
    rng = np.random.default_rng(3)
    trades = random_day(rng, 300)
    buf = io.BytesIO()
    write_tape(trades, buf)
    good = buf.getvalue()
    fast = parse_tape(good)
    slow = parse_tape(good + b"bad,row\n")
    assert [e.line for e in slow.errors] == [len(trades) + 2]
    for col in ("timestamp", "price", "size", "notional", "aggressor"):
        np.testing.assert_array_equal(fast.trades[col].to_numpy(), slow.trades[col].to_numpy())
        np.testing.assert_array_equal(fast.trades[col].to_numpy(), trades[col].to_numpy())
    for col in ("symbol", "buyer_firm", "seller_firm"):
        assert list(fast.trades[col].astype(str)) == list(slow.trades[col].astype(str))


def test_missing_column_is_fatal():
    with pytest.raises(TapeFormatError, match="aggressor"):
        parse("timestamp,symbol,price,size,buyer_firm,seller_firm\n")
    with pytest.raises(TapeFormatError, match="unexpected"):
        parse(HEADER.strip() + ",venue\n")
    with pytest.raises(TapeFormatError, match="not found"):
        parse_tape("/nonexistent/tape.csv")


def test_notional_column_validated():
    head = HEADER.strip() + ",notional\n"
    out = parse(head + "2000-05-09T09:00:00.000Z,X,2.5,4,A,B,B,10.0\n"
                       "2000-05-09T09:00:00.000Z,X,2.5,4,A,B,B,11.0\n")
    assert len(out) == 1 and out.errors[0].line == 3 and "notional" in out.errors[0].message


def test_max_errors_aborts():
    text = HEADER + "2000-05-09T09:00:00.000Z,X,1,0,A,B,B\n" * 5
    assert len(parse(text, max_errors=5).errors) == 5
    with pytest.raises(TapeFormatError, match="max_errors"):
        parse(text, max_errors=4)


def test_write_parse_round_trip():
    rng = np.random.default_rng(11)
    trades = pd.concat([random_day(rng, 50, symbol="AAA"), random_day(rng, 40, symbol="BBB")], ignore_index=True)
    buf = io.BytesIO()
    write_tape(trades, buf)
    back = parse_tape(buf.getvalue()).trades
    pd.testing.assert_frame_equal(
        back.astype({c: str for c in ("symbol", "buyer_firm", "seller_firm")}),
        trades.astype({c: str for c in ("symbol", "buyer_firm", "seller_firm")}),
    )


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------


def test_trim_rule_keeps_only_core_hours():
    t = frame([("2000-05-09", "08:15", "X", 1.0, 1, "A", "B", "B"),
               ("2000-05-09", "09:00", "X", 1.0, 1, "A", "B", "B"),
               ("2000-05-09", "16:10", "X", 1.0, 1, "A", "B", "B")])
    (s,) = sessionize(t)
    assert s.n_trades == 1 and s.trades["timestamp"].iloc[0] == ts("2000-05-09", "09:00")
    assert s.session_id == date(2000, 5, 9)


def test_trim_boundaries_are_inclusive():
    t = frame([("2000-05-09", c, "X", 1.0, 1, "A", "B", "B")
               for c in ("08:29:59.999", "08:30", "16:00", "16:00:00.001")])
    (s,) = sessionize(t)
    assert s.n_trades == 2


def test_two_days_two_sessions():
    t = frame([("2000-05-09", "10:00", "X", 1.0, 1, "A", "B", "B"),
               ("2000-05-10", "10:00", "X", 1.0, 1, "A", "B", "S")])
    assert [s.session_id for s in sessionize(t)] == [date(2000, 5, 9), date(2000, 5, 10)]


def test_trade_count_windows_drop_incomplete_tail():
    rng = np.random.default_rng(0)
    sessions = sessionize(random_day(rng, 1200), WindowSpec.trade_count(500))
    assert [s.n_trades for s in sessions] == [500, 500]
    assert [s.session_id for s in sessions] == [0, 1]


def test_unsorted_input_names_offending_pair():
    t = frame([("2000-05-09", "10:00", "X", 1.0, 1, "A", "B", "B"),
               ("2000-05-09", "09:00", "X", 1.0, 1, "A", "B", "B")])
    with pytest.raises(OrderingError, match="row 1"):
        sessionize(t)


def test_self_trade_counts_on_both_sides():
    t = frame([("2000-05-09", "10:00", "X", 2.0, 5, "A", "A", "B"),
               ("2000-05-09", "10:01", "X", 2.0, 5, "B", "C", "S")])
    (s,) = sessionize(t)
    assert s.firm_buy_volume == {"A": 10.0, "B": 10.0}
    assert s.firm_sell_volume == {"A": 10.0, "C": 10.0}
    assert (s.n_buyers, s.n_sellers) == (2, 2)


def test_local_exchange_clock():
    # London summer time is UTC+1: 07:45Z is 08:45 local, 15:15Z is 16:15 local
    t = frame([("2000-05-09", "07:45", "X", 1.0, 1, "A", "B", "B"),
               ("2000-05-09", "15:15", "X", 1.0, 1, "A", "B", "B")])
    (utc,) = sessionize(t)
    (local,) = sessionize(t, calendar=ExchangeCalendar(tz="Europe/London"))
    assert utc.trades["timestamp"].tolist() == [ts("2000-05-09", "15:15")]
    assert local.trades["timestamp"].tolist() == [ts("2000-05-09", "07:45")]


@given(st.integers(0, 2**32 - 1), st.integers(1, 400), st.sampled_from([None, 7, 50]))
def test_session_invariants(seed, n, window_n):
    rng = np.random.default_rng(seed)
    t = pd.concat([random_day(rng, n, start="07:55", end="16:40"),
                   random_day(rng, n, day="2000-05-10", start="07:55", end="16:40")], ignore_index=True)
    spec = WindowSpec() if window_n is None else WindowSpec.trade_count(window_n)
    sessions = sessionize(t, spec)
    lo, hi = 8 * 3600_000 + 1800_000, 16 * 3600_000
    for s in sessions:
        tod = s.trades["timestamp"].to_numpy() % 86_400_000
        assert np.all((tod >= lo) & (tod <= hi))
        assert np.all(np.diff(s.trades["timestamp"].to_numpy()) >= 0)
        total = math.fsum(s.trades["notional"])
        assert math.isclose(math.fsum(s.firm_buy_volume.values()), total, rel_tol=1e-12)
        assert math.isclose(math.fsum(s.firm_sell_volume.values()), total, rel_tol=1e-12)
    again = sessionize(flatten_sessions(sessions), spec) if sessions else []
    assert [(s.symbol, s.session_id, s.n_trades, s.firm_buy_volume, s.firm_sell_volume) for s in again] == \
           [(s.symbol, s.session_id, s.n_trades, s.firm_buy_volume, s.firm_sell_volume) for s in sessions]


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------


def day_with_move(n, ret_pct, day="2000-05-09"):
    rng = np.random.default_rng(n)
    t = random_day(rng, n, day=day)
    price = np.full(n, 10.0)
    k = max(1, n // 10)
    price[n - k:] = 10.0 * (1 + ret_pct / 100)
    t["price"] = price
    t["notional"] = price * t["size"]
    return t


def test_filters():
    trades = pd.concat([day_with_move(499, 0.0, "2000-05-09"), day_with_move(500, 5.1, "2000-05-10"),
                        day_with_move(500, -4.9, "2000-05-11")], ignore_index=True)
    out = filter_sessions(sessionize(trades))
    assert [s.excluded for s in out] == [Exclusion.TOO_FEW_TRADES, Exclusion.LARGE_MOVE, None]
    assert tape.exclusion_counts(out) == {"TooFewTrades": 1, "LargeMove": 1}


def test_filter_arguments_validated():
    with pytest.raises(ValueError):
        filter_sessions([], min_trades=0)
    with pytest.raises(ValueError):
        filter_sessions([], max_abs_return_pct=0)


def test_window_spec_validation():
    with pytest.raises(ValueError):
        WindowSpec.trade_count(0)
    with pytest.raises(ValueError):
        WindowSpec(trim_open=timedelta(minutes=-1))
    with pytest.raises(ValueError):
        ExchangeCalendar(open=time(17), close=time(9))
