"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run `pytest tests/test_acceptance.py -v -s` to watch the lines live. The
Monte Carlo criteria use committed seeds and 1e7..1e8-bit runs; the whole
module takes a few minutes on one core.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

import oracles
from trigqrng import analytic, bitio, cli, extractors, stats
from trigqrng.core import PAPER_DETECTOR, PAPER_RUN, PAPER_SOURCE, BitBuffer, RunConfig
from trigqrng.simulator import derived_rng, simulate, sweep, tune_intensity

DT = 2.0
TOL_BIAS = 5e-4


def report(num, name, subchecks):
    """Print the criterion verdict and its sub-checks, then assert."""
    ok = all(good for _, good, _ in subchecks)
    print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {name}")
    for label, good, detail in subchecks:
        print(f"    {'ok  ' if good else 'FAIL'} {label}: {detail}")
    assert ok, f"criterion {num} failed: " + "; ".join(
        f"{label}: {detail}" for label, good, detail in subchecks if not good
    )


def tuned_run(tau_pd, period, n, seed, key):
    """Tune intensity to p1 = 0.5 +- 5e-4, then simulate n triggers."""
    det = dataclasses.replace(PAPER_DETECTOR, tau_pd=tau_pd)
    run = RunConfig(period=period, delta_t=DT, n_triggers=n, seed=seed)
    mu = tune_intensity(det, run, target_p1=0.5, tol=TOL_BIAS, src=PAPER_SOURCE, seed_key=key)
    src = dataclasses.replace(PAPER_SOURCE, mean_photons=mu)
    res = simulate(det, src, run, rng=derived_rng(seed, *key))
    return det, run, mu, res


@pytest.fixture(scope="module")
def paper_point_run():
    """Shared 1e8-bit run at the headline operating point (10 MHz, tau_pd = 21)."""
    return tuned_run(21.0, 100.0, 100_000_000, seed=11, key=(11,))


def test_criterion_01_optimal_pulse_width(capsys):
    t0 = time.perf_counter()
    code = cli.main(["predict", "optimal-taupd", "--tau-dead", "22", "--tau-a", "33"])
    elapsed = time.perf_counter() - t0
    out = capsys.readouterr().out
    value = float(dict(ln.split("=", 1) for ln in out.strip().splitlines())["tau_pd_ns"])
    with capsys.disabled():
        report(
            1,
            "optimal pulse width 21.19 +- 0.01 ns",
            [
                ("exit status", code == 0, f"{code}"),
                ("tau_pd", abs(value - 21.19) <= 0.01, f"{value:.4f} ns"),
                ("runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f} s"),
            ],
        )


def test_criterion_02_sensitivity_triple(capsys):
    det = dataclasses.replace(PAPER_DETECTOR, tau_pd=21.0)
    t0 = time.perf_counter()
    got = {axis: analytic.sensitivity(det, 100.0, DT, axis) for axis in ("tau_pd", "tau_dead", "period")}
    elapsed = time.perf_counter() - t0

    # quoted device values with their quoting resolution; the period
    # sensitivity is quoted to one significant figure (exact model value
    # 0.1884e-6), so each comparison allows 5 percent plus half a quote ulp
    quoted = {"tau_pd": (32e-6, 1e-6), "tau_dead": (-59e-6, 1e-6), "period": (0.2e-6, 0.1e-6)}
    checks = []
    for axis, (q, ulp) in quoted.items():
        tol = 0.05 * abs(q) + 0.5 * ulp
        checks.append(
            (
                f"d a1/d {axis} vs quoted",
                abs(got[axis] - q) <= tol,
                f"{got[axis]:+.4e} vs {q:+.1e} (tol {tol:.1e})",
            )
        )

    step = 1e-3
    fd = {
        "tau_pd": (
            analytic.predict_a1(dataclasses.replace(det, tau_pd=21.0 + step), 100.0, DT).a1
            - analytic.predict_a1(dataclasses.replace(det, tau_pd=21.0 - step), 100.0, DT).a1
        )
        / (2 * step),
        "tau_dead": (
            analytic.predict_a1(dataclasses.replace(det, tau_dead=22.0 + step), 100.0, DT).a1
            - analytic.predict_a1(dataclasses.replace(det, tau_dead=22.0 - step), 100.0, DT).a1
        )
        / (2 * step),
        "period": (
            analytic.predict_a1(det, 100.0 + step, DT).a1
            - analytic.predict_a1(det, 100.0 - step, DT).a1
        )
        / (2 * step),
    }
    for axis in fd:
        rel = abs(got[axis] - fd[axis]) / abs(fd[axis])
        checks.append((f"d a1/d {axis} vs finite differences", rel <= 1e-4, f"rel {rel:.2e}"))
    checks.append(("runtime < 1 s", elapsed < 1.0, f"{elapsed:.4f} s"))
    with capsys.disabled():
        report(2, "sensitivity triple at the device point", checks)


def test_criterion_03_analytic_monte_carlo_agreement(capsys, paper_point_run):
    n = 100_000_000
    tol = 3.0 / math.sqrt(n - 1)
    checks = []
    grid = [(100.0, 21.0), (100.0, 8.0), (67.0, 21.0), (67.0, 8.0)]
    for idx, (period, tau_pd) in enumerate(grid):
        if (period, tau_pd) == (100.0, 21.0):
            det, run, mu, res = paper_point_run
        else:
            det, run, mu, res = tuned_run(tau_pd, period, n, seed=301 + idx, key=(3, idx))
        a1_hat, _ = stats.autocorr(res.bits, 1)
        pred = analytic.predict_a1(det, period, DT)
        assert not pred.truncated
        gap = abs(a1_hat - pred.a1)
        checks.append(
            (
                f"T={period:g} tau_pd={tau_pd:g}",
                gap < tol,
                f"a1_hat {a1_hat:+.3e} vs pred {pred.a1:+.3e} "
                f"(gap {gap:.2e} < {tol:.2e}; bias {res.p1_hat - 0.5:+.1e}, mu {mu:.4f})",
            )
        )
    with capsys.disabled():
        report(3, "simulation matches the closed form at 1e8 bits", checks)


def test_criterion_04_pulse_width_sweep_minimum(capsys):
    det, src = PAPER_DETECTOR, PAPER_SOURCE
    run = RunConfig(period=100.0, delta_t=DT, n_triggers=10_000_000, seed=400)
    grid = [float(v) for v in range(8, 28)]
    points = sweep(det, src, run, "tau_pd", grid)
    assert all(p.note == "" for p in points)

    # the raw argmin of |a1_hat| is unidentifiable at this point noise
    # (3.2e-4 per point versus 6e-5 of structure within +-2 ns), so the
    # minimum location is estimated by least squares in the model basis
    # a1(x) = alpha * exp(x / tau_a) + gamma, whose zero crossing is the
    # |a1| minimum
    xs = np.array([p.axis_value for p in points])
    ys = np.array([p.a1_hat for p in points])
    basis = np.column_stack([np.exp(xs / det.tau_a), np.ones_like(xs)])
    (alpha, gamma), *_ = np.linalg.lstsq(basis, ys, rcond=None)
    fit_root = det.tau_a * math.log(-gamma / alpha)
    raw_argmin = xs[int(np.argmin(np.abs(ys)))]
    with capsys.disabled():
        report(
            4,
            "pulse-width sweep minimizes |a1| at 21 +- 2 ns",
            [
                (
                    "fitted zero crossing",
                    19.0 <= fit_root <= 23.0,
                    f"{fit_root:.2f} ns (raw noisy argmin at {raw_argmin:g} ns)",
                ),
            ],
        )


def test_criterion_05_rate_sweep_shape(capsys):
    det8 = dataclasses.replace(PAPER_DETECTOR, tau_pd=8.0)
    n = 100_000_000
    run8 = RunConfig(period=100.0, delta_t=DT, n_triggers=n, seed=500)
    pts8 = sweep(det8, PAPER_SOURCE, run8, "rate", [10.0, 15.0, 20.0])
    assert all(p.note == "" for p in pts8)

    run21 = RunConfig(period=100.0, delta_t=DT, n_triggers=n, seed=510)
    pts21 = sweep(PAPER_DETECTOR, PAPER_SOURCE, run21, "rate", [10.0, 15.0, 20.0, 25.0])
    assert all(p.note == "" for p in pts21)

    a8 = {p.axis_value: p.a1_hat for p in pts8}
    a21 = {p.axis_value: p.a1_hat for p in pts21}
    checks = [
        (
            "tau_pd=8: a1 negative at 10/15/20 MHz",
            all(a8[r] < 0 for r in (10.0, 15.0, 20.0)),
            ", ".join(f"{r:g}: {a8[r]:+.2e}" for r in sorted(a8)),
        ),
        (
            "tau_pd=8: magnitude grows with rate",
            a8[10.0] > a8[15.0] > a8[20.0],
            f"{a8[10.0]:+.2e} > {a8[15.0]:+.2e} > {a8[20.0]:+.2e}",
        ),
        (
            "tau_pd=21: |a1| < 3e-4 up to 16 MHz",
            abs(a21[10.0]) < 3e-4 and abs(a21[15.0]) < 3e-4,
            f"10: {a21[10.0]:+.2e}, 15: {a21[15.0]:+.2e}",
        ),
        (
            "tau_pd=21: sharp growth at 20-25 MHz",
            abs(a21[20.0]) > 3e-4 and abs(a21[25.0]) > 3e-4,
            f"20: {a21[20.0]:+.2e}, 25: {a21[25.0]:+.2e}",
        ),
        (
            "clamped points flagged",
            [p.truncated for p in pts21] == [False, False, True, True],
            str([p.truncated for p in pts21]),
        ),
    ]
    with capsys.disabled():
        report(5, "rate sweeps reproduce both curve shapes", checks)


def test_criterion_06_xor_algebra(capsys):
    n = 100_000_000
    checks = []
    for set_idx, (b, a1) in enumerate([(0.01, 0.02), (0.05, -0.03)]):
        params = stats.MarkovSourceParams(bias=b, a1=a1)

        x = stats.markov_source(params, n, seed=600 + 4 * set_idx)
        y = stats.markov_source(params, n, seed=601 + 4 * set_idx)
        z = extractors.xor_streams(x, y)
        b_hat, b_err = stats.bias(z)
        a1_hat, a1_err = stats.autocorr(z, 1)
        b_pred, a1_pred = analytic.xor_two_streams_prediction(b, a1)
        b_exact, a1_exact = oracles.exact_xor_streams_stats(b, a1)
        # the published formulas drop O(a1 b^2) cross terms; allow that
        # deterministic truncation on top of the 3 sigma statistical band
        tol_b = 3 * b_err + abs(b_exact - b_pred)
        tol_a = 3 * a1_err + abs(a1_exact - a1_pred)
        checks.append(
            (
                f"two streams (b={b}, a1={a1}) bias",
                abs(b_hat - b_pred) <= tol_b,
                f"{b_hat:+.3e} vs {b_pred:+.3e} (tol {tol_b:.1e})",
            )
        )
        checks.append(
            (
                f"two streams (b={b}, a1={a1}) a1",
                abs(a1_hat - a1_pred) <= tol_a,
                f"{a1_hat:+.3e} vs {a1_pred:+.3e} (tol {tol_a:.1e})",
            )
        )

        w = stats.markov_source(params, n, seed=602 + 4 * set_idx)
        zp = extractors.xor_pairs(w)
        b_hat, b_err = stats.bias(zp)
        a1_hat, a1_err = stats.autocorr(zp, 1)
        b_pred, a1_pred = analytic.xor_adjacent_prediction(b, a1)
        b_exact, a1_exact = oracles.exact_xor_pairs_stats(b, a1)
        tol_b = 3 * b_err + abs(b_exact - b_pred)
        tol_a = 3 * a1_err + abs(a1_exact - a1_pred)
        checks.append(
            (
                f"adjacent pairs (b={b}, a1={a1}) bias",
                abs(b_hat - b_pred) <= tol_b,
                f"{b_hat:+.3e} vs {b_pred:+.3e} (tol {tol_b:.1e})",
            )
        )
        checks.append(
            (
                f"adjacent pairs (b={b}, a1={a1}) a1",
                abs(a1_hat - a1_pred) <= tol_a,
                f"{a1_hat:+.3e} vs {a1_pred:+.3e} (tol {tol_a:.1e})",
            )
        )
    with capsys.disabled():
        report(6, "XOR algebra validated by the Markov oracle at 1e8 bits", checks)


def test_criterion_07_estimator_exactness(capsys):
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(700 + seed)
        buf = BitBuffer(rng.integers(0, 2, size=1000, dtype=np.uint8))
        ref = [int(v) for v in buf.bits]
        for k in range(1, 9):
            a_k, _ = stats.autocorr(buf, k)
            worst = max(worst, abs(a_k - oracles.naive_autocorr(ref, k)))
    err_1e9 = 1.0 / math.sqrt(1e9 - 1)
    with capsys.disabled():
        report(
            7,
            "optimized estimator equals the naive oracle",
            [
                ("max |optimized - naive| over 5x8 cases", worst < 1e-12, f"{worst:.2e}"),
                (
                    "err(N=1e9, k=1) reproduces 3.2e-5",
                    abs(err_1e9 - 3.2e-5) < 0.05e-5,
                    f"{err_1e9:.3e}",
                ),
            ],
        )


def test_criterion_08_test_correctness(capsys):
    pi100 = BitBuffer.from01(oracles.PI_100)
    checks = [
        (
            "monobit worked example",
            round(stats.monobit_test(pi100), 6) == oracles.SP800_22_EXAMPLES["monobit_pi100"],
            f"{stats.monobit_test(pi100):.6f} vs 0.109599",
        ),
        (
            "block frequency worked example",
            round(stats.block_frequency_test(pi100, 10), 6)
            == oracles.SP800_22_EXAMPLES["block_frequency_pi100_M10"],
            f"{stats.block_frequency_test(pi100, 10):.6f} vs 0.706438",
        ),
        (
            "runs worked example",
            round(stats.runs_test(pi100), 6) == oracles.SP800_22_EXAMPLES["runs_pi100"],
            f"{stats.runs_test(pi100):.6f} vs 0.500798",
        ),
    ]
    n_streams = 200
    fails = {"monobit": 0, "block_frequency": 0, "runs": 0}
    for seed in range(n_streams):
        buf = stats.markov_source(stats.MarkovSourceParams(0.0, 0.0), 20_000, seed=800 + seed)
        for result in stats.battery(buf, block_size=128):
            if result.passed is False:
                fails[result.name] += 1
    # binomial 3 sigma around a 99 percent pass rate over 200 streams
    bound = 2 + 3 * math.sqrt(n_streams * 0.01 * 0.99)
    for name, count in fails.items():
        checks.append(
            (
                f"null pass rate: {name}",
                count <= bound,
                f"{n_streams - count}/{n_streams} passed",
            )
        )
    with capsys.disabled():
        report(8, "native tests reproduce published vectors and the null rate", checks)


def test_criterion_09_von_neumann(capsys):
    n = 10_000_000
    biased = stats.markov_source(stats.MarkovSourceParams(bias=0.2, a1=0.0), n, seed=900)
    out = extractors.von_neumann(biased)
    b_hat, b_err = stats.bias(out)
    p = 0.7
    q = 2 * p * (1 - p)
    yield_hat = len(out) / n
    yield_err = math.sqrt(q * (1 - q) / (2 * n))

    fair = stats.markov_source(stats.MarkovSourceParams(0.0, 0.0), n, seed=901)
    fair_out = extractors.von_neumann(fair)
    fair_yield = len(fair_out) / n
    fair_err = math.sqrt(0.5 * 0.5 / (2 * n))
    with capsys.disabled():
        report(
            9,
            "Von Neumann debiasing and yield",
            [
                ("output bias on b=0.2 input", abs(b_hat) <= 3 * b_err, f"{b_hat:+.2e} +- {b_err:.1e}"),
                (
                    "yield on b=0.2 input = 0.21",
                    abs(yield_hat - 0.21) <= 3 * yield_err,
                    f"{yield_hat:.5f}",
                ),
                (
                    "yield on unbiased input = 0.25",
                    abs(fair_yield - 0.25) <= 3 * fair_err,
                    f"{fair_yield:.5f}",
                ),
            ],
        )


def test_criterion_10_determinism_and_round_trips(capsys, tmp_path):
    det, src = PAPER_DETECTOR, PAPER_SOURCE
    run = dataclasses.replace(PAPER_RUN, n_triggers=1_000_000, seed=1000)
    blob_a = bitio.write_bits(simulate(det, src, run).bits, "packed")
    blob_b = bitio.write_bits(simulate(det, src, run).bits, "packed")

    rng = np.random.default_rng(1001)
    bad = []
    for length in range(0, 4098):
        buf = BitBuffer(rng.integers(0, 2, size=length, dtype=np.uint8))
        for fmt in ("packed", "ascii"):
            if bitio.read_bits(bitio.write_bits(buf, fmt), fmt) != buf:
                bad.append((length, fmt))
        if length % 8 == 0:
            if bitio.read_bits(bitio.write_bits(buf, "sts_raw"), "sts_raw") != buf:
                bad.append((length, "sts_raw"))
        if bitio.read_bits(bitio.write_bits(buf, "packed", "lsb_first"), "packed") != buf:
            bad.append((length, "packed/lsb"))
    with capsys.disabled():
        report(
            10,
            "determinism and bit-exact round trips",
            [
                ("identical seed gives byte-identical files", blob_a == blob_b, f"{len(blob_a)} bytes"),
                ("round trips for lengths 0..4097", not bad, f"failures: {bad[:5]}"),
            ],
        )


def test_criterion_11_lag_profile(capsys, paper_point_run):
    # "all lags consistent with zero" is a statement about 63 null estimates:
    # demanding every |z| < 3 would reject a perfect implementation 16% of
    # the time by multiplicity alone. The family-aware encoding below is
    # stricter where afterpulsing could actually reach (lags 2..5, model
    # values < 1e-6) and controls the total false-alarm rate near 1e-3.
    from scipy.stats import chi2

    det, run, mu, res = paper_point_run
    profile = stats.autocorr_profile(res.bits, 64)
    z = {k: a / err for k, a, err in profile[1:]}
    near = [f"{k}: {z[k]:+.2f}" for k in (2, 3, 4, 5)]
    exceed = [(k, round(v, 2)) for k, v in z.items() if abs(v) >= 3.0]
    chi2_stat = sum(v * v for v in z.values())
    lo, hi = chi2.ppf(0.0005, 63), chi2.ppf(0.9995, 63)
    with capsys.disabled():
        report(
            11,
            "lags 2..64 consistent with zero at 1e8 bits",
            [
                (
                    "afterpulse-reachable lags 2..5 within 3 sigma",
                    all(abs(z[k]) < 3.0 for k in (2, 3, 4, 5)),
                    ", ".join(near),
                ),
                (
                    "no lag beyond 4.5 sigma",
                    all(abs(v) < 4.5 for v in z.values()),
                    f"max |z| = {max(abs(v) for v in z.values()):.2f}",
                ),
                (
                    "3-sigma exceedances within the null count",
                    len(exceed) <= 2,
                    f"{exceed if exceed else 'none'} (null expects 0.17)",
                ),
                (
                    "aggregate chi-square over 63 lags",
                    lo < chi2_stat < hi,
                    f"{chi2_stat:.1f} in ({lo:.1f}, {hi:.1f})",
                ),
            ],
        )
