"""Estimators and hypothesis tests for bit streams, plus a calibrated Markov source.

The serial autocorrelation estimator at lag k is

    a_k = sum_{i=1..N-k} (x_i - xbar)(x_{i+k} - xbar)
          ------------------------------------------
          sum_{i=1..N-k} (x_i - xbar)^2

with xbar the mean of the full sequence and both sums over the first N-k
terms; its standard error is 1/sqrt(N-k). For 0/1 data everything reduces to
exact integer pair counts, so the optimized path is bit-identical to the
naive double loop and independent of chunking.

The native test subset is monobit, block frequency and runs; the remaining
standard battery is expected to run externally on exported raw bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy import special

from .core import BitBuffer, StatsReport

ALPHA = 0.01  # pass threshold shared by the whole battery

_CHUNK = 1 << 24


class PrerequisiteError(ValueError):
    """A test's applicability precondition failed; no pass/fail verdict exists."""


def bias(bits: BitBuffer) -> tuple[float, float]:
    """Deviation of the ones-fraction from one half, with binomial standard error."""
    n = len(bits)
    if n == 0:
        raise ValueError("empty bit buffer")
    p = bits.ones() / n
    return p - 0.5, math.sqrt(p * (1.0 - p) / n)


def _pair_count(x: np.ndarray, k: int) -> int:
    """Number of (1,1) pairs at lag k, accumulated in bounded chunks."""
    m = x.size - k
    total = 0
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        total += int(np.count_nonzero(x[start:stop] & x[start + k : stop + k]))
    return total


def autocorr(bits: BitBuffer, k: int) -> tuple[float, float]:
    """Lag-k serial autocorrelation a_k and its standard error 1/sqrt(N-k)."""
    if k < 1:
        raise ValueError("lag must be at least 1")
    n = len(bits)
    if n <= k:
        raise ValueError("need more bits than the lag")
    x = bits.bits
    ones_all = int(np.count_nonzero(x))
    if ones_all == 0 or ones_all == n:
        raise ValueError("autocorrelation undefined for an all-identical sequence")
    xbar = ones_all / n
    m = n - k
    s_head = int(np.count_nonzero(x[:m]))
    s_tail = int(np.count_nonzero(x[k:]))
    p11 = _pair_count(x, k)
    num = p11 - xbar * (s_head + s_tail) + m * xbar * xbar
    den = s_head * (1.0 - 2.0 * xbar) + m * xbar * xbar
    if den == 0.0:
        raise ValueError("autocorrelation undefined: zero variance over the first N-k bits")
    return num / den, 1.0 / math.sqrt(m)


def autocorr_profile(bits: BitBuffer, k_max: int) -> list[tuple[int, float, float]]:
    """(k, a_k, err) for k = 1..k_max; identical to per-lag autocorr calls."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if len(bits) <= k_max:
        raise ValueError("need more bits than the largest lag")
    out = []
    for k in range(1, k_max + 1):
        a, err = autocorr(bits, k)
        out.append((k, a, err))
    return out


# --- hypothesis tests -------------------------------------------------------


class TestResult(NamedTuple):
    name: str
    statistic: float
    p_value: float
    passed: bool | None  # None when a prerequisite failed
    note: str = ""


def _monobit(bits: BitBuffer) -> TestResult:
    n = len(bits)
    if n < 100:
        raise ValueError("monobit test needs at least 100 bits")
    s_obs = abs(2 * bits.ones() - n) / math.sqrt(n)
    p = math.erfc(s_obs / math.sqrt(2.0))
    return TestResult("monobit", s_obs, p, p >= ALPHA)


def monobit_test(bits: BitBuffer) -> float:
    """Frequency test: p = erfc(|sum(2x-1)| / sqrt(n) / sqrt(2))."""
    return _monobit(bits).p_value


def _block_frequency(bits: BitBuffer, block_size: int) -> TestResult:
    n = len(bits)
    if block_size < 1 or block_size > n:
        raise ValueError("bad block size")
    n_blocks = n // block_size
    trimmed = bits.bits[: n_blocks * block_size]
    pis = trimmed.reshape(n_blocks, block_size).mean(axis=1)
    chi2 = 4.0 * block_size * float(np.sum((pis - 0.5) ** 2))
    p = float(special.gammaincc(n_blocks / 2.0, chi2 / 2.0))
    return TestResult("block_frequency", chi2, p, p >= ALPHA)


def block_frequency_test(bits: BitBuffer, block_size: int) -> float:
    """Block frequency test: chi^2 = 4M sum(pi_j - 1/2)^2, p = Q(N/2, chi^2/2).

    Block sizes of at least 20 are recommended for the asymptotics, but any
    1 <= M <= n is accepted (the standard worked examples use M = 3 and 10).
    """
    return _block_frequency(bits, block_size).p_value


def _runs(bits: BitBuffer) -> TestResult:
    n = len(bits)
    if n < 100:
        raise ValueError("runs test needs at least 100 bits")
    pi = bits.ones() / n
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        raise PrerequisiteError(
            f"runs test prerequisite failed: |pi - 1/2| = {abs(pi - 0.5):.4g} "
            f">= 2/sqrt(n) = {2.0 / math.sqrt(n):.4g}"
        )
    v = 1 + int(np.count_nonzero(np.diff(bits.bits)))
    p = math.erfc(abs(v - 2.0 * n * pi * (1.0 - pi)) / (2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)))
    return TestResult("runs", float(v), p, p >= ALPHA)


def runs_test(bits: BitBuffer) -> float:
    """Runs test: V = 1 + #(adjacent unequal pairs), erfc form.

    Raises PrerequisiteError (distinct from a failing verdict) when the
    ones-fraction is too far from one half for the test to apply.
    """
    return _runs(bits).p_value


TESTS = {
    "monobit": lambda bits, block_size: _monobit(bits),
    "block_frequency": lambda bits, block_size: _block_frequency(bits, block_size),
    "runs": lambda bits, block_size: _runs(bits),
}


def battery(bits: BitBuffer, names=None, block_size: int = 128) -> list[TestResult]:
    """Run the named tests; a prerequisite failure yields verdict None, not fail."""
    results = []
    for name in names or TESTS:
        try:
            results.append(TESTS[name](bits, block_size))
        except PrerequisiteError as exc:
            results.append(TestResult(name, math.nan, math.nan, None, str(exc)))
    return results


def build_report(
    bits: BitBuffer, k_max: int = 16, test_names=None, block_size: int = 128
) -> StatsReport:
    b, b_err = bias(bits)
    profile = autocorr_profile(bits, k_max)
    tests = [(r.name, r.p_value, r.passed) for r in battery(bits, test_names, block_size)]
    return StatsReport(n=len(bits), bias=b, bias_err=b_err, autocorr=profile, tests=tests)


def render_report_text(report: StatsReport) -> str:
    lines = [
        f"n       {report.n}",
        f"bias    {report.bias:+.6e} +- {report.bias_err:.3e}",
        "",
        f"{'lag':>4}  {'a_k':>13}  {'err':>10}",
    ]
    for k, a, err in report.autocorr:
        flag = " *" if abs(a) > 3 * err else ""
        lines.append(f"{k:>4}  {a:>+13.6e}  {err:>10.3e}{flag}")
    lines.append("")
    lines.append(f"{'test':<16} {'p_value':>10}  verdict")
    for name, p, passed in report.tests:
        verdict = "skipped" if passed is None else ("pass" if passed else "FAIL")
        p_txt = "-" if math.isnan(p) else f"{p:.6f}"
        lines.append(f"{name:<16} {p_txt:>10}  {verdict}")
    return "\n".join(lines) + "\n"


def render_tests_csv(results: list[TestResult]) -> str:
    """Machine-readable battery results: test, statistic, p_value, verdict."""
    lines = ["test,statistic,p_value,verdict"]
    for r in results:
        verdict = "skipped" if r.passed is None else ("pass" if r.passed else "fail")
        stat = "" if math.isnan(r.statistic) else repr(float(r.statistic))
        p = "" if math.isnan(r.p_value) else repr(float(r.p_value))
        lines.append(f"{r.name},{stat},{p},{verdict}")
    return "\n".join(lines) + "\n"


# --- calibrated correlated source -------------------------------------------


@dataclass(frozen=True)
class MarkovSourceParams:
    """Two-state chain with prescribed stationary bias and lag-1 autocorrelation.

    With p = 0.5 + bias the transitions are P(1|1) = p + a1(1-p) and
    P(1|0) = p(1-a1); the stationary ones-probability is p and the lag-k
    autocorrelation is a1^k. Used as the ground-truth oracle for the XOR
    algebra and for estimator calibration.
    """

    bias: float
    a1: float

    def transitions(self) -> tuple[float, float, float]:
        p = 0.5 + self.bias
        p11 = p + self.a1 * (1.0 - p)
        p10 = p * (1.0 - self.a1)
        if not (0.0 <= p <= 1.0 and 0.0 <= p11 <= 1.0 and 0.0 <= p10 <= 1.0):
            raise ValueError(
                f"invalid Markov parameters: p={p:.4g}, P(1|1)={p11:.4g}, P(1|0)={p10:.4g}"
            )
        return p, p11, p10


@njit(cache=True)
def _markov_kernel(rng, n, p, p11, p10, out):
    state = 1 if rng.random() < p else 0
    out[0] = state
    for i in range(1, n):
        thr = p11 if state == 1 else p10
        state = 1 if rng.random() < thr else 0
        out[i] = state


def markov_source(params: MarkovSourceParams, n: int, seed) -> BitBuffer:
    """Draw n bits from the chain, first bit from the stationary distribution.

    `seed` may be an integer or a numpy Generator.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    p, p11, p10 = params.transitions()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.empty(n, dtype=np.uint8)
    _markov_kernel(rng, n, p, p11, p10, out)
    return BitBuffer(out)
