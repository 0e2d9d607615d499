"""Trading-concentration metrics and impact analysis for firm-attributed trade tapes."""

from .concentration import (
    FirmFractions,
    Side,
    dominance_frequency,
    entropy_concentration,
    gini,
    volume_fractions,
)
from .errors import DomainError, InputError, TradeConcError
from .flow import Panel, build_panel
from .regress import bootstrap_null, dummy_regression, ols_fit, regime_classify, two_stage_partial
from .tape import ExchangeCalendar, WindowSpec, filter_sessions, parse_tape, sessionize

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "ExchangeCalendar",
    "FirmFractions",
    "InputError",
    "Panel",
    "Side",
    "TradeConcError",
    "WindowSpec",
    "bootstrap_null",
    "build_panel",
    "dominance_frequency",
    "dummy_regression",
    "entropy_concentration",
    "filter_sessions",
    "gini",
    "ols_fit",
    "parse_tape",
    "regime_classify",
    "sessionize",
    "two_stage_partial",
    "volume_fractions",
]
