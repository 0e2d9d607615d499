import numpy as np
import pandas as pd
import pytest
from hypothesis import HealthCheck, settings

from tradeconc import tape

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Record one acceptance criterion outcome for the terminal summary."""
    def _record(label: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def ts(day: str, clock: str) -> int:
    """Epoch milliseconds for a UTC date and HH:MM[:SS] time."""
    return int(pd.Timestamp(f"{day}T{clock}", tz="UTC").value // 1_000_000)


def frame(rows):
    """Trade frame from (day, clock, symbol, price, size, buyer, seller, aggressor) tuples."""
    cols = list(zip(*rows)) if rows else [[]] * 8
    return tape.make_frame(
        timestamp=[ts(d, c) for d, c in zip(cols[0], cols[1])],
        symbol=list(cols[2]), price=list(cols[3]), size=list(cols[4]),
        buyer_firm=list(cols[5]), seller_firm=list(cols[6]),
        aggressor=[1 if a == "B" else -1 for a in cols[7]],
    )


def random_day(rng, n, day="2000-05-09", symbol="AAA", firms=10, start="08:30", end="16:00", p0=10.0,
               sell_firms=None):
    lo, hi = ts(day, start), ts(day, end)
    t = np.sort(rng.integers(lo, hi + 1, n))
    names = np.array([f"F{i}" for i in range(firms)])
    sell_names = np.array([f"F{i}" for i in range(sell_firms or firms)])
    return tape.make_frame(
        timestamp=t, symbol=[symbol] * n,
        price=np.round(p0 * (1 + rng.normal(0, 0.002, n)), 4),
        size=rng.integers(1, 5000, n),
        buyer_firm=names[rng.integers(0, firms, n)],
        seller_firm=sell_names[rng.integers(0, sell_names.size, n)],
        aggressor=np.where(rng.random(n) < 0.5, 1, -1),
    )
