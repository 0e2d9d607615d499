"""OLS impact regressions, fit diagnostics, shuffle bootstrap, partial
regression and the four-regime dummy regression."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import stats

from .errors import DegenerateQuantileError, DomainError, RankDeficientError

log = logging.getLogger(__name__)

RESPONSE = "dP_bps"
IMPACT_REGRESSORS = ("dE", "dM", "dV", "dN")
ROUTING_REGRESSORS = ("dV", "dN", "dM")
CONST = "const"
QUANTILE_METHOD = "linear"


def _rows(panel) -> pd.DataFrame:
    return panel.rows if hasattr(panel, "rows") else panel


@dataclass
class RegressionFit:
    names: list[str]
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    p_values: dict[str, float]
    r2: float
    residuals: np.ndarray
    n_samples: int
    df_resid: int
    sigma: float
    intercept: bool
    response: str
    r2_single: dict[str, float] = field(default_factory=dict)
    r2_partial: dict[str, float] = field(default_factory=dict)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "coef": self.coefficients, "std_err": self.std_errors, "p_value": self.p_values,
            "r2_single": pd.Series(self.r2_single, dtype=float),
            "r2_partial": pd.Series(self.r2_partial, dtype=float),
        }).loc[self.names]


class _Design:
    """Pivoted QR of a design matrix, reused across responses."""

    def __init__(self, X: np.ndarray, names: Sequence[str]):
        n, p = X.shape
        if n <= p:
            raise DomainError(f"need more samples than parameters: n={n}, p={p}")
        Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = max(n, p) * np.finfo(float).eps * (diag[0] if p else 0.0)
        rank = int(np.sum(diag > tol))
        if rank < p:
            raise RankDeficientError([names[j] for j in piv[rank:]])
        self.Q, self.R, self.piv = Q, R, piv
        self.n, self.p = n, p

    def solve(self, Y: np.ndarray) -> np.ndarray:
        """Coefficients for one response (n,) or several stacked as columns (n, k)."""
        z = self.Q.T @ Y
        b_piv = scipy.linalg.solve_triangular(self.R, z)
        b = np.empty_like(b_piv)
        b[self.piv] = b_piv
        return b

    def xtx_inv_diag(self) -> np.ndarray:
        rinv = scipy.linalg.solve_triangular(self.R, np.eye(self.p))
        d = np.empty(self.p)
        d[self.piv] = np.sum(rinv ** 2, axis=1)
        return d


def _design(rows: pd.DataFrame, regressors: Sequence[str], intercept: bool) -> tuple[np.ndarray, list[str]]:
    cols = [rows[c].to_numpy(dtype=float) for c in regressors]
    names = list(regressors)
    if intercept:
        cols.insert(0, np.ones(len(rows)))
        names.insert(0, CONST)
    return np.column_stack(cols) if cols else np.empty((len(rows), 0)), names


def _r2(y: np.ndarray, resid: np.ndarray) -> float:
    tss = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / tss) if tss > 0 else float("nan")


def _ols(X: np.ndarray, y: np.ndarray, names: list[str], intercept: bool, response: str) -> RegressionFit:
    design = _Design(X, names)
    beta = design.solve(y)
    resid = y - X @ beta
    n, p = X.shape
    df = n - p
    sigma2 = float(resid @ resid) / df
    se = np.sqrt(sigma2 * design.xtx_inv_diag())
    with np.errstate(divide="ignore", invalid="ignore"):
        z = beta / se
    pv = 2.0 * stats.norm.sf(np.abs(z))
    return RegressionFit(
        names=names,
        coefficients=dict(zip(names, beta.tolist())),
        std_errors=dict(zip(names, se.tolist())),
        p_values=dict(zip(names, pv.tolist())),
        r2=_r2(y, resid),
        residuals=resid,
        n_samples=n,
        df_resid=df,
        sigma=float(np.sqrt(sigma2)),
        intercept=intercept,
        response=response,
    )


def ols_fit(
    panel,
    response: str = RESPONSE,
    regressors: Sequence[str] = IMPACT_REGRESSORS,
    intercept: bool = True,
    diagnostics: bool = True,
) -> RegressionFit:
    """Ordinary least squares via pivoted QR with classical standard errors
    and two-sided normal p-values.

    R² is always centred on the response mean, also for fits without an
    intercept, so values stay comparable between model variants.
    """
    rows = _rows(panel)
    X, names = _design(rows, regressors, intercept)
    y = rows[response].to_numpy(dtype=float)
    fit = _ols(X, y, names, intercept, response)
    if diagnostics:
        fit.r2_single, fit.r2_partial = fit_diagnostics(rows, fit, regressors)
    return fit


def fit_diagnostics(panel, fit: RegressionFit, regressors: Sequence[str] | None = None):
    """Single-variable R² and partial R² per regressor.

    ``r2_single[v]`` is the R² of ``response ~ v`` (with the fit's intercept
    setting); ``r2_partial[v] = (R² - R²_without_v) / (1 - R²_without_v)``.
    """
    rows = _rows(panel)
    regressors = [n for n in fit.names if n != CONST] if regressors is None else list(regressors)
    single, partial = {}, {}
    for v in regressors:
        s = ols_fit(rows, fit.response, [v], fit.intercept, diagnostics=False)
        single[v] = s.r2
        others = [u for u in regressors if u != v]
        if others or fit.intercept:
            r = ols_fit(rows, fit.response, others, fit.intercept, diagnostics=False).r2
        else:
            r = 0.0
        partial[v] = (fit.r2 - r) / (1.0 - r)
    return single, partial


# ---------------------------------------------------------------------------
# Shuffle bootstrap
# ---------------------------------------------------------------------------


@dataclass
class BootstrapResult:
    n_reps: int
    seed: int
    null_coefficients: np.ndarray  # (n_reps, p) in fit.names order
    names: list[str]
    p_values: dict[str, float]
    null_std: dict[str, float]
    classical_std_errors: dict[str, float]

    @property
    def std_ratio(self) -> dict[str, float]:
        return {k: self.null_std[k] / self.classical_std_errors[k] for k in self.names}


def rep_permutation(seed: int, rep: int, n: int) -> np.ndarray:
    """Permutation for one bootstrap replicate; depends only on (seed, rep)."""
    return np.random.default_rng([seed, rep]).permutation(n)


def bootstrap_null(
    panel,
    n_reps: int = 1000,
    seed: int = 0,
    response: str = RESPONSE,
    regressors: Sequence[str] = IMPACT_REGRESSORS,
    intercept: bool = True,
    chunk: int = 128,
) -> BootstrapResult:
    """Null distribution of coefficients from refits on shuffled responses.

    Regressors stay intact; the p-value of a coefficient is the fraction of
    null draws whose magnitude reaches the observed one.
    """
    if n_reps < 100:
        warnings.warn(f"n_reps={n_reps} < 100: bootstrap p-values will be unstable", stacklevel=2)
    rows = _rows(panel)
    X, names = _design(rows, regressors, intercept)
    y = rows[response].to_numpy(dtype=float)
    design = _Design(X, names)
    observed = design.solve(y)
    fit = _ols(X, y, names, intercept, response)
    n = len(y)
    null = np.empty((n_reps, len(names)))
    for start in range(0, n_reps, chunk):
        reps = range(start, min(n_reps, start + chunk))
        Y = np.column_stack([y[rep_permutation(seed, r, n)] for r in reps])
        null[start:start + len(reps)] = design.solve(Y).T
    exceed = np.abs(null) >= np.abs(observed)
    pv = exceed.mean(axis=0)
    sd = null.std(axis=0, ddof=1)
    return BootstrapResult(
        n_reps=n_reps, seed=seed, null_coefficients=null, names=names,
        p_values=dict(zip(names, pv.tolist())),
        null_std=dict(zip(names, sd.tolist())),
        classical_std_errors=dict(fit.std_errors),
    )


def p_value_discrepancy(p_classical: float, p_bootstrap: float, n_reps: int, factor: float = 2.0) -> bool:
    """True when the two p-values differ by more than ``factor`` (both floored at 1/n_reps)."""
    floor = 1.0 / n_reps
    a, b = max(p_classical, floor), max(p_bootstrap, floor)
    return max(a, b) / min(a, b) > factor


# ---------------------------------------------------------------------------
# Partial regression
# ---------------------------------------------------------------------------


@dataclass
class PartialFit:
    eta: float
    std_error: float
    p_value: float
    r2: float
    price_residuals: np.ndarray
    concentration_residuals: np.ndarray
    n_samples: int


def two_stage_partial(
    panel,
    response: str = RESPONSE,
    target: str = "dE",
    controls: Sequence[str] = ROUTING_REGRESSORS,
    intercept: bool = True,
) -> PartialFit:
    """Regress response and target on the controls, then residual on residual."""
    rows = _rows(panel)
    X, names = _design(rows, controls, intercept)
    design = _Design(X, names)
    y = rows[response].to_numpy(dtype=float)
    x = rows[target].to_numpy(dtype=float)
    b = design.solve(np.column_stack([y, x]))
    resid = np.column_stack([y, x]) - X @ b
    p_res, e_res = resid[:, 0], resid[:, 1]
    stage2 = _ols(e_res[:, None], p_res, [target], False, response)
    return PartialFit(
        eta=stage2.coefficients[target],
        std_error=stage2.std_errors[target],
        p_value=stage2.p_values[target],
        r2=_r2(p_res, stage2.residuals),
        price_residuals=p_res,
        concentration_residuals=e_res,
        n_samples=len(y),
    )


# ---------------------------------------------------------------------------
# Regimes
# ---------------------------------------------------------------------------


class RegimeLabel(str, Enum):
    CONC_BUY_CONC_SELL = "ConcBuyConcSell"
    CONC_BUY_DILUTE_SELL = "ConcBuyDiluteSell"
    DILUTE_BUY_CONC_SELL = "DiluteBuyConcSell"
    DILUTE_BUY_DILUTE_SELL = "DiluteBuyDiluteSell"
    UNCLASSIFIED = "Unclassified"


REGIMES = (
    RegimeLabel.CONC_BUY_CONC_SELL,
    RegimeLabel.CONC_BUY_DILUTE_SELL,
    RegimeLabel.DILUTE_BUY_CONC_SELL,
    RegimeLabel.DILUTE_BUY_DILUTE_SELL,
)
DUMMY_REGRESSORS = ("dV", "dN", "dM") + tuple(r.value for r in REGIMES)


@dataclass
class RegimeAssignment:
    labels: pd.Series
    low: float
    high: float
    q_low: float
    q_high: float

    def dummies(self) -> pd.DataFrame:
        return pd.DataFrame({r.value: (self.labels == r.value).astype(float).to_numpy() for r in REGIMES},
                            index=self.labels.index)

    def counts(self) -> dict[str, int]:
        return {r.value: int((self.labels == r.value).sum()) for r in RegimeLabel}


def regime_classify(panel, q_low: float = 0.30, q_high: float = 0.70,
                    buy: str = "E_b", sell: str = "E_s") -> RegimeAssignment:
    """Label each row by whether each side's score is above the pooled upper
    quantile (concentrated) or below the pooled lower quantile (dilute).

    Quantiles use linear interpolation between order statistics over the
    buy and sell scores pooled together. Rows with a mid-range side are
    Unclassified.
    """
    if not 0 <= q_low < q_high <= 1:
        raise ValueError("need 0 <= q_low < q_high <= 1")
    rows = _rows(panel)
    eb = rows[buy].to_numpy(dtype=float)
    es = rows[sell].to_numpy(dtype=float)
    lo, hi = np.quantile(np.concatenate([eb, es]), [q_low, q_high], method=QUANTILE_METHOD)
    if not hi > lo:
        raise DegenerateQuantileError(f"degenerate quantiles: q{q_low:g} = q{q_high:g} = {lo!r}")
    conc_b, dil_b = eb > hi, eb < lo
    conc_s, dil_s = es > hi, es < lo
    labels = np.full(len(rows), RegimeLabel.UNCLASSIFIED.value, dtype=object)
    labels[conc_b & conc_s] = RegimeLabel.CONC_BUY_CONC_SELL.value
    labels[conc_b & dil_s] = RegimeLabel.CONC_BUY_DILUTE_SELL.value
    labels[dil_b & conc_s] = RegimeLabel.DILUTE_BUY_CONC_SELL.value
    labels[dil_b & dil_s] = RegimeLabel.DILUTE_BUY_DILUTE_SELL.value
    return RegimeAssignment(pd.Series(labels, index=rows.index, name="regime"), float(lo), float(hi), q_low, q_high)


def dummy_regression(panel, regimes: RegimeAssignment | None = None, response: str = RESPONSE,
                     min_regime_rows: int = 10) -> RegressionFit:
    """Flow imbalances plus four regime dummies, no global intercept
    (unclassified rows form the baseline)."""
    rows = _rows(panel)
    if regimes is None:
        regimes = regime_classify(rows)
    for name, count in regimes.counts().items():
        if name != RegimeLabel.UNCLASSIFIED.value and count < min_regime_rows:
            warnings.warn(f"regime {name} has only {count} rows; its coefficient is unstable", stacklevel=2)
    data = pd.concat([rows[[response, "dV", "dN", "dM"]], regimes.dummies()], axis=1)
    return ols_fit(data, response, DUMMY_REGRESSORS, intercept=False, diagnostics=False)
