"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line in
the terminal summary (see conftest.record)."""
import time
import warnings

import numpy as np
import pytest
from scipy import stats

from tradeconc import acf, cli, flow, regress, synth, tape
from tradeconc.concentration import Side, entropy_concentration, gini
from tradeconc.synth import ImpactSpec, MetaorderSpec, SynthConfig

PLANT = {"dE": 25.0, "dM": -3.0, "dV": 82.0, "dN": -61.0}
MIXED = {"ConcBuyDiluteSell": 35.0, "DiluteBuyConcSell": -45.0}
SEEDS = range(20)


def gini_pairs(w):
    return float(np.abs(w[:, None] - w[None, :]).sum() / (2 * w.size))


def tape_panel(cfg, seed):
    res = synth.generate_tape(cfg, seed)
    sessions = tape.filter_sessions(tape.sessionize(res.trades))
    return res, sessions, flow.build_panel(sessions, res.index_returns)


def null_panel(rng, n_stocks=2, n_days=500):
    n = n_stocks * n_days
    rows = flow.Panel(flow.pd.DataFrame({
        "symbol": np.repeat([f"S{i}" for i in range(n_stocks)], n_days),
        "session_id": list(range(n_days)) * n_stocks,
        "dP_bps": rng.normal(0, 100, n),
        "E_b": rng.uniform(0, 1, n), "E_s": rng.uniform(0, 1, n),
        "G_b": rng.uniform(0, 1, n), "G_s": rng.uniform(0, 1, n),
        **{c: rng.normal(0, 1, n) for c in flow.IMBALANCE_COLUMNS},
    }))
    # correlated regressors make the null check less trivial
    rows.rows["dV"] += 0.7 * rows.rows["dM"]
    return rows


def test_c1_metric_correctness(record):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(1, 201))
        w = rng.lognormal(0, 1.5, n)
        w /= w.sum()
        worst = max(worst, abs(gini(w) - gini_pairs(w)))
    uniform_ok = all(entropy_concentration(np.full(n, 1.0 / n)) == 0.0 for n in range(2, 201))
    single_ok = entropy_concentration(np.array([1.0])) == 1.0
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and uniform_ok and single_ok and elapsed < 5.0
    record("C1 metric correctness", ok,
           f"max |fast - pairwise| = {worst:.2e}, uniform E == 0: {uniform_ok}, single E == 1: {single_ok}, "
           f"{elapsed:.2f}s")
    assert ok


def test_c2_fwl_identity(record):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        df = flow.pd.DataFrame({c: rng.normal(0, 1, 1000) for c in ("dE", "dM", "dV", "dN")})
        df["dV"] += rng.uniform(-1, 1) * df["dM"]
        df["dE"] += rng.uniform(-1, 1) * df["dN"]
        df["dP_bps"] = df @ rng.normal(0, 50, 4) + rng.normal(0, 100, 1000)
        full = regress.ols_fit(df, diagnostics=False).coefficients["dE"]
        eta = regress.two_stage_partial(df).eta
        worst = max(worst, abs(eta - full) / max(abs(full), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    record("C2 FWL identity", ok, f"max relative gap = {worst:.2e} over 100 panels, {elapsed:.2f}s")
    assert ok


@pytest.mark.slow
def test_c3_planted_coefficient_recovery(record):
    cfg = SynthConfig(n_stocks=4, n_days=400, trades_per_day=(520, 800), impact=ImpactSpec(target_r2=0.33))
    hits = {k: 0 for k in PLANT}
    r2 = []
    for seed in SEEDS:
        _, _, panel = tape_panel(cfg, seed)
        fit = regress.ols_fit(panel, diagnostics=False)
        r2.append(fit.r2)
        for k, v in PLANT.items():
            hits[k] += abs(fit.coefficients[k] - v) <= 2 * fit.std_errors[k]
    cover = {k: h / len(SEEDS) for k, h in hits.items()}
    r2_ok = all(abs(x - 0.33) <= 0.05 for x in r2)
    ok = all(c >= 0.95 for c in cover.values()) and r2_ok
    record("C3 planted recovery (20 seeds, 4x400)", ok,
           f"coverage within 2 SE {cover}, R2 range [{min(r2):.3f}, {max(r2):.3f}]")
    assert ok


@pytest.mark.slow
def test_c3_desk_scale_runtime(record):
    cfg = SynthConfig(trades_per_day=(520, 800), impact=ImpactSpec(target_r2=0.33))
    t0 = time.perf_counter()
    _, _, panel = tape_panel(cfg, 0)
    fit = regress.ols_fit(panel)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 300.0 and len(panel.rows) > 0.9 * 46 * 674
    coefs = {k: f"{fit.coefficients[k]:.1f}+/-{fit.std_errors[k]:.2f}" for k in PLANT}
    record("C3 desk scale (46x674) runtime", ok,
           f"{elapsed:.1f}s for {len(panel.rows)} sessions, R2 = {fit.r2:.3f}, {coefs}")
    assert ok


@pytest.mark.slow
def test_c4_regime_recovery(record):
    offsets = {r: MIXED.get(r, 0.0) for r in synth.REGIME_NAMES}
    cfg = SynthConfig(n_stocks=4, n_days=400, trades_per_day=(520, 800),
                      impact=ImpactSpec(coef_E=0.0, regime_offsets=offsets, target_r2=0.33))
    hits = {k: 0 for k in offsets}
    joint = 0
    for seed in SEEDS:
        _, _, panel = tape_panel(cfg, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = regress.dummy_regression(panel)
        inside = {k: abs(fit.coefficients[k] - v) <= 2 * fit.std_errors[k] for k, v in offsets.items()}
        for k, v in inside.items():
            hits[k] += v
        joint += all(inside.values())
    cover = {k: h / len(SEEDS) for k, h in hits.items()}
    ok = all(c >= 0.95 for c in cover.values())
    record("C4 regime recovery (20 seeds, 4x400)", ok,
           f"coverage within 2 SE {cover}; all four at once in {joint}/{len(SEEDS)} seeds")
    assert ok


def test_c5_bootstrap_calibration(record):
    rng = np.random.default_rng(5)
    pvals = {k: [] for k in PLANT}
    ratios = []
    for i in range(200):
        res = regress.bootstrap_null(null_panel(rng), n_reps=400, seed=i)
        for k in PLANT:
            pvals[k].append(res.p_values[k])
        ratios.extend(res.std_ratio[k] for k in PLANT)
    ks = {k: stats.kstest(v, "uniform").pvalue for k, v in pvals.items()}
    worst_ratio = float(np.max(np.abs(np.array(ratios) - 1.0)))
    ok = min(ks.values()) > 0.01 and worst_ratio <= 0.15
    record("C5 bootstrap calibration", ok,
           f"KS p-values {{{', '.join(f'{k}: {v:.3f}' for k, v in ks.items())}}}, "
           f"max |null sd / classical SE - 1| = {worst_ratio:.3f}")
    assert ok


def test_c6_decomposition_identity(record):
    gaps = []
    rng = np.random.default_rng(6)
    # random firm sets drawn from a small pool
    for _ in range(50):
        T = int(rng.integers(30, 120))
        sessions = []
        for t in range(T):
            buy = {f"F{f}": float(w) for f, w in zip(rng.choice(12, int(rng.integers(1, 9)), replace=False),
                                                    rng.lognormal(0, 1, 12))}
            sessions.append(tape.SessionTape("X", t, None, buy, buy))
        dec = acf.decompose_acf(acf.summand_series(sessions, Side.BUY), max_lag=10)
        gaps.append(np.max(np.abs(dec.gamma - (dec.gamma_same - dec.gamma_cross))))
    # disjoint firms: a fresh set of names every session
    sessions = []
    for t in range(200):
        n = int(rng.integers(2, 10))
        buy = {f"T{t}F{i}": float(w) for i, w in enumerate(rng.lognormal(0, 1, n))}
        sessions.append(tape.SessionTape("X", t, None, buy, buy))
    disjoint = acf.decompose_acf(acf.summand_series(sessions, Side.BUY), max_lag=10)
    gaps.append(np.max(np.abs(disjoint.gamma - (disjoint.gamma_same - disjoint.gamma_cross))))
    disjoint_ok = bool(np.all(disjoint.gamma_same == 0.0))
    # metaorders split over D = 5 days
    cfg = SynthConfig(n_stocks=4, n_days=300, trades_per_day=(520, 700), firms_per_day=(10, 20), firm_pool=30,
                      metaorder=MetaorderSpec(start_prob=0.2, horizon_days=5, participation=0.4))
    _, sess, _ = tape_panel(cfg, 0)
    kept = [s for s in sess if s.excluded is None]
    split = acf.decompose_acf(acf.summand_series(kept, Side.BUY) + acf.summand_series(kept, Side.SELL), 15)
    gaps.append(np.max(np.abs(split.gamma - (split.gamma_same - split.gamma_cross))))
    same = split.gamma_same
    decay_ok = bool(same[0] > 0 and same[0] > same[4] and same[4] > abs(same[10:]).mean())
    worst = float(max(gaps))
    ok = worst <= 1e-9 and disjoint_ok and decay_ok
    record("C6 ACF decomposition identity", ok,
           f"max gap = {worst:.2e} over {len(gaps)} inputs, disjoint same == 0: {disjoint_ok}, "
           f"split same-firm lag1/lag5/lag11+ = {same[0]:.4f}/{same[4]:.4f}/{abs(same[10:]).mean():.4f}")
    assert ok


def test_c7_acf_estimator(record):
    phi, T = 0.5, 10_000
    rng = np.random.default_rng(7)
    e = rng.standard_normal(T + 500)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, x.size):
        x[t] = phi * x[t - 1] + e[t]
    x = x[500:]
    got = acf.concentration_acf(x, max_lag=5)
    k = np.arange(1, 6)
    # Bartlett variance of the sample ACF for an AR(1)
    var = ((1 + phi**2) * (1 - phi ** (2 * k)) / (1 - phi**2) - 2 * k * phi ** (2 * k)) / T
    z = (got - phi**k) / np.sqrt(var)
    ok = bool(np.all(np.abs(z) <= 3))
    record("C7 AR(1) ACF recovery", ok, f"z-scores by lag {np.round(z, 2).tolist()}")
    assert ok


def test_c8_determinism(record, tmp_path):
    import json
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_stocks": 2, "n_days": 40, "trades_per_day": [520, 700],
                               "firms_per_day": [10, 20], "firm_pool": 30}))
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        s = str(d)
        codes = [
            cli.main(["synth", str(cfg), "--seed", "3", "--panel", "--out-dir", s]),
            cli.main(["ingest", str(d / "tape.csv"), "--index", str(d / "index.csv"), "--out-dir", s + "/ingest"]),
            cli.main(["regress", s + "/ingest/panel.csv", "--seed", "9", "--reps", "200", "--out-dir", s + "/regress"]),
            cli.main(["regress", str(d / "synth_panel.csv"), "--seed", "9", "--reps", "200",
                      "--out-dir", s + "/regress_synth"]),
            cli.main(["acf", s + "/ingest/panel.csv", "--max-lag", "5", "--out-dir", s + "/acf"]),
            cli.main(["acf", str(d / "tape.csv"), "--max-lag", "5", "--month-mask", "--out-dir", s + "/acf_tape"]),
            cli.main(["report", str(d / "tape.csv"), "--seed", "9", "--reps", "200", "--max-lag", "5",
                      "--out-dir", s + "/report"]),
        ]
        files = {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}
        outputs.append((codes, files))
    (codes_a, a), (codes_b, b) = outputs
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = codes_a == codes_b == [0] * 7 and not differing and len(a) > 10
    record("C8 determinism", ok, f"{len(a)} output files compared, differing: {differing or 'none'}")
    assert ok
