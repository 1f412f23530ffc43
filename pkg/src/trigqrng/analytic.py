"""Closed-form model of afterpulse-induced bit correlations in a triggered QRNG.

A detection at time 0 can influence the next bit, requested a period T later,
through two competing channels:

* coincidence enhancement: an afterpulse whose output pulse covers the next
  strobe forces that bit to 1;
* dead-time blinding: an afterpulse whose recovery interval is still open when
  the next coincidence window opens suppresses the next photon detection.

With an exponential afterpulse density p(t) = (P/tau_a) exp(-t/tau_a) both
channel probabilities are exponential masses over windows fixed by the pulse
width tau_pd, dead time tau_dead and strobe margin delta_t. The lag-1
autocorrelation is

    a1 = (p_plus - p_minus) / 2
    p_plus  =       mass over [T+dt-tau_pd,          T+dt]
    p_minus = 1/2 * mass over [T+dt-tau_pd-tau_dead, T+dt-tau_pd]

with both lower bounds clamped at tau_dead, because afterpulses released
during the parent's own dead interval never fire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import DetectorParams


@dataclass(frozen=True)
class A1Prediction:
    """Predicted lag-1 autocorrelation and its two components.

    `truncated` is set when either integration window had to be clamped at
    tau_dead, i.e. the run period is at or below the minimum unclamped period;
    predictions there are qualitative only.
    """

    a1: float
    p_plus: float
    p_minus: float
    truncated: bool


def afterpulse_pdf(t: float, p_after: float, tau_a: float) -> float:
    """Exponential afterpulse density (P/tau_a) * exp(-t/tau_a) at delay t >= 0 [1/ns]."""
    if tau_a <= 0:
        raise ValueError("tau_a must be positive")
    if t < 0:
        raise ValueError("afterpulse delay must be nonnegative")
    return (p_after / tau_a) * math.exp(-t / tau_a)


def predict_p1(mu: float, eta: float) -> float:
    """Probability that a Poisson-mu light pulse yields at least one detection.

    Ballistic detection: every photon is an independent trial with per-photon
    efficiency eta, so p1 = 1 - exp(-mu * eta).
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be in [0, 1]")
    return -math.expm1(-mu * eta)


def mean_photons_for_p1(p1: float, eta: float) -> float:
    """Invert predict_p1: the pulse energy that gives detection probability p1."""
    if not 0.0 < p1 < 1.0:
        raise ValueError("p1 must be in (0, 1)")
    if eta <= 0:
        raise ValueError("eta must be positive")
    return -math.log1p(-p1) / eta


def _exp_mass(lo: float, hi: float, p_after: float, tau_a: float) -> float:
    """Integral of the afterpulse density over [lo, hi], zero if hi <= lo."""
    if hi <= lo:
        return 0.0
    return p_after * (math.exp(-lo / tau_a) - math.exp(-hi / tau_a))


def predict_a1(det: DetectorParams, period: float, delta_t: float) -> A1Prediction:
    """Lag-1 autocorrelation of the bit stream for a detector driven at `period`."""
    if period <= 0:
        raise ValueError("period must be positive")
    horizon = period + delta_t
    lo_plus = horizon - det.tau_pd
    lo_minus = horizon - det.tau_pd - det.tau_dead
    hi_minus = lo_plus
    truncated = lo_plus < det.tau_dead or lo_minus < det.tau_dead
    p_plus = _exp_mass(max(lo_plus, det.tau_dead), horizon, det.p_after, det.tau_a)
    p_minus = 0.5 * _exp_mass(
        max(lo_minus, det.tau_dead), max(hi_minus, det.tau_dead), det.p_after, det.tau_a
    )
    return A1Prediction(
        a1=0.5 * (p_plus - p_minus),
        p_plus=p_plus,
        p_minus=p_minus,
        truncated=truncated,
    )


def optimal_tau_pd(tau_dead: float, tau_a: float) -> float:
    """Pulse width at which the two correlation channels cancel exactly.

    Solves exp(tau_pd/tau_a) * (3 - exp(tau_dead/tau_a)) = 2, i.e.
    tau_pd = tau_a * ln(2 / (3 - exp(tau_dead/tau_a))). The cancellation point
    is independent of the trigger period in the unclamped regime.
    """
    if tau_a <= 0:
        raise ValueError("tau_a must be positive")
    if tau_dead < 0:
        raise ValueError("tau_dead must be nonnegative")
    arg = 3.0 - math.exp(tau_dead / tau_a)
    if arg <= 0:
        raise ValueError(
            "no zero-crossing exists for this detector "
            f"(tau_dead/tau_a = {tau_dead / tau_a:.4f} >= ln 3)"
        )
    return tau_a * math.log(2.0 / arg)


def min_period(tau_dead: float, tau_pd: float, delta_t: float) -> float:
    """Smallest trigger period with both integration windows unclamped.

    Equals 2*tau_dead + tau_pd - delta_t; strictly above it the closed-form a1
    holds and the optimal pulse width is rate-independent.
    """
    return 2.0 * tau_dead + tau_pd - delta_t


_SENSITIVITY_AXES = ("tau_pd", "tau_dead", "period")


def sensitivity(det: DetectorParams, period: float, delta_t: float, which: str) -> float:
    """Partial derivative of the unclamped a1 with respect to one parameter [1/ns].

    d a1/d tau_pd   = (P/(4 tau_a)) (3 - e^(tau_dead/tau_a)) e^(-(T+dt-tau_pd)/tau_a)
    d a1/d tau_dead = -(P/(4 tau_a)) e^(tau_dead/tau_a) e^(-(T+dt-tau_pd)/tau_a)
    d a1/d period   = -a1 / tau_a

    The denominator is 4*tau_a: differentiating the closed form produces it,
    and only this form reproduces the reference device's quoted 32e-6 1/ns
    pulse-width sensitivity.
    """
    if which not in _SENSITIVITY_AXES:
        raise ValueError(f"which must be one of {_SENSITIVITY_AXES}")
    if period <= min_period(det.tau_dead, det.tau_pd, delta_t):
        raise ValueError("sensitivity formulas are invalid in the clamped regime")
    decay = math.exp(-(period + delta_t - det.tau_pd) / det.tau_a)
    scale = det.p_after / (4.0 * det.tau_a)
    if which == "tau_pd":
        return scale * (3.0 - math.exp(det.tau_dead / det.tau_a)) * decay
    if which == "tau_dead":
        return -scale * math.exp(det.tau_dead / det.tau_a) * decay
    return -predict_a1(det, period, delta_t).a1 / det.tau_a


def predict_lag_k(a1: float, period: float, tau_a: float, k: int) -> float:
    """Lag-k autocorrelation: both correlation windows shift by (k-1)*period.

    Shifting the exponential masses multiplies them by exp(-(k-1)*T/tau_a), so
    each further lag decays by that factor (about 21 per lag for the reference
    device at 10 MHz).
    """
    if k < 1:
        raise ValueError("lag must be at least 1")
    if tau_a <= 0:
        raise ValueError("tau_a must be positive")
    return a1 * math.exp(-(k - 1) * period / tau_a)


def xor_two_streams_prediction(b: float, a1: float) -> tuple[float, float]:
    """Bias and lag-1 autocorrelation after XOR of two independent streams.

    Both inputs carry bias b and autocorrelation a1; the output has
    b' = -2 b^2 and a1' = a1^2 + 8 a1 b^2. Output length equals input length,
    so the bit rate is preserved.
    """
    if abs(b) > 0.5:
        raise ValueError("bias must be in [-0.5, 0.5]")
    return -2.0 * b * b, a1 * a1 + 8.0 * a1 * b * b


def xor_adjacent_prediction(b: float, a1: float) -> tuple[float, float]:
    """Bias and lag-1 autocorrelation after XOR of non-overlapping bit pairs.

    For a single stream with bias b and autocorrelation a1 the pairwise XOR
    gives b' = -2 b^2 - a1/2 and a1' = 4 a1 b^2, at half the bit rate.
    """
    if abs(b) > 0.5:
        raise ValueError("bias must be in [-0.5, 0.5]")
    return -2.0 * b * b - 0.5 * a1, 4.0 * a1 * b * b
