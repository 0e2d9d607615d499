"""Volume fractions and the Gini / entropy concentration scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import DomainError


class Side(str, Enum):
    BUY = "buy"
    SELL = "sell"


@dataclass(frozen=True)
class FirmFractions:
    """Per-firm share of one side's GBP volume. Zero-volume firms are never stored."""

    side: Side
    fractions: dict[str, float]

    def __post_init__(self):
        if not self.fractions:
            raise DomainError("no trades: empty fraction vector")

    @property
    def n(self) -> int:
        return len(self.fractions)

    def values(self) -> np.ndarray:
        return np.fromiter(self.fractions.values(), dtype=np.float64, count=len(self.fractions))


@dataclass(frozen=True)
class ConcentrationScores:
    gini: float
    entropy: float


def fractions_from_volumes(volumes: Mapping[str, float], side: Side) -> FirmFractions:
    vols = {k: float(v) for k, v in volumes.items() if v > 0}
    if not vols:
        raise DomainError("no trades: side has zero volume")
    total = math.fsum(vols.values())
    return FirmFractions(Side(side), {k: v / total for k, v in vols.items()})


def volume_fractions(session, side: Side | str) -> FirmFractions:
    side = Side(side)
    volumes = session.firm_buy_volume if side is Side.BUY else session.firm_sell_volume
    return fractions_from_volumes(volumes, side)


def _as_array(f) -> np.ndarray:
    w = f.values() if isinstance(f, FirmFractions) else np.asarray(f, dtype=np.float64).ravel()
    if w.size == 0:
        raise DomainError("no trades: empty fraction vector")
    return w


def gini(f: FirmFractions | np.ndarray) -> float:
    """Half the relative mean absolute difference of the fractions.

    Uses the sorted form ``sum_i (2i - N - 1) w_(i) / N`` (ascending order),
    which equals ``sum_{i,j} |w_i - w_j| / (2N)`` for fractions summing to one.
    Plain arrays may contain zero entries; ``N`` is then their length.
    """
    w = np.sort(_as_array(f))
    n = w.size
    k = np.arange(1, n + 1, dtype=np.float64)
    return float(np.dot(2.0 * k - n - 1.0, w) / n)


def normalized_entropy(f: FirmFractions | np.ndarray) -> float:
    """``sum w log(1/w) / log N`` with natural logs; zero entries contribute 0.

    A single active firm gives 0 (the complement of the E = 1 convention).
    """
    w = _as_array(f)
    n = w.size
    if n == 1:
        return 0.0
    if np.all(w == w[0]):
        return 1.0
    pos = w[w > 0]
    return float(-np.dot(pos, np.log(pos)) / math.log(n))


def entropy_concentration(f: FirmFractions | np.ndarray) -> float:
    """``E = 1 - sum w log(1/w) / log N``; E = 1 for a single firm, 0 when uniform."""
    return min(1.0, max(0.0, 1.0 - normalized_entropy(f)))


def scores(f: FirmFractions) -> ConcentrationScores:
    return ConcentrationScores(gini(f), entropy_concentration(f))


def dominance_frequency(sessions: Iterable, threshold: float = 0.25) -> float:
    """Fraction of included sessions where one firm holds more than ``threshold``
    of the buying or of the selling."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    hits = total = 0
    for s in sessions:
        if getattr(s, "excluded", None) is not None:
            continue
        total += 1
        top_b = volume_fractions(s, Side.BUY).values().max()
        top_s = volume_fractions(s, Side.SELL).values().max()
        hits += bool(top_b > threshold or top_s > threshold)
    if total == 0:
        raise DomainError("dominance frequency of an empty panel")
    return hits / total
