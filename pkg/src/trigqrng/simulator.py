"""Event-driven Monte Carlo of the trigger -> laser -> detector -> strobe chain.

Each trigger n at time t_n = n*T:

1. With probability p1 = 1 - exp(-mu*eta) the light pulse produces one photon
   detection candidate at t_n + delay + jitter (source and detector jitter
   combined into a single Gaussian). Multi-photon pile-up inside the sub-ns
   pulse is unresolvable at pulse-width scale, so a pulse collapses to a
   single Bernoulli candidate.
2. Dark counts form a homogeneous Poisson process; dark and afterpulse
   candidates arriving inside any dead interval are discarded, never
   rescheduled.
3. An accepted detection at t_d emits an output pulse [t_d, t_d + tau_pd],
   opens a dead interval [t_d, t_d + tau_dead] and with probability p_after
   schedules one afterpulse candidate at t_d + Exp(tau_a). Afterpulse-caused
   detections schedule no further afterpulses unless chains are enabled.
4. bit_n = 1 iff some output pulse covers the strobe instant
   s_n = t_n + delay + delta_t.

Photon blinding follows the device's measured correlation structure rather
than naive arrival-time blocking: a photon candidate is suppressed when the
detector is still recovering at the instant the coincidence window opens
(s_n - tau_pd), with probability one half per such event. This recovery-gate
rule makes the simulated lag-1 autocorrelation equal to the closed-form
two-window model in `analytic` at first order in p_after, which is what the
reference device exhibits; plain arrival-time blocking would instead shift
the cancellation point of the two correlation channels to a visibly smaller
pulse width. A consequence is that an accepted photon may follow an accepted
afterpulse by less than the dead time; detections of all other cause pairs
remain separated by at least tau_dead.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from . import analytic, stats
from .core import (
    PAPER_SOURCE,
    BitBuffer,
    ConfigError,
    DetectorParams,
    RunConfig,
    SourceParams,
    combined_jitter_sigma,
    validate,
)

_INF = np.inf
_AP_HEAP_CAP = 1 << 15

# counts array layout
_PHOTON, _AFTERPULSE, _DARK, _SUPPRESSED, _BLINDED, _STROBE_MISS, _OVERFLOW = range(7)

# spawn_key domains for derived child streams
_SWEEP_DOMAIN = 0
_TUNE_DOMAIN = 1


def derived_rng(seed: int, *key: int) -> np.random.Generator:
    """Child generator for (seed, key) via SeedSequence spawn keys.

    This is the reproducibility splitting rule: sweep point i draws from
    SeedSequence(seed, spawn_key=(0, i)) and intensity-tuning iteration j of
    that point from SeedSequence(seed, spawn_key=(0, i, 1, j)), so results do
    not depend on scheduling order. An empty key is the top-level stream.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@njit(cache=True)
def _heap_push(heap, size, value):
    heap[size] = value
    i = size
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(heap, size):
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and heap[right] < heap[left]:
            child = right
        if heap[i] <= heap[child]:
            break
        heap[i], heap[child] = heap[child], heap[i]
        i = child
    return size


@njit(cache=True)
def _simulate_kernel(
    rng,
    n_triggers,
    period,
    delay,
    delta_t,
    tau_pd,
    tau_dead,
    tau_a,
    p_after,
    p1,
    sigma,
    dark_per_ns,
    allow_chains,
    gate_rule,
    bits,
    counts,
    det_log,
    cause_log,
    log_cap,
):
    dead_any = -_INF  # detector busy until here (any cause)
    dead_hard = -_INF  # busy-until from photon/dark detections only
    last_det = -_INF
    n_det = 0

    ap_heap = np.empty(_AP_HEAP_CAP, dtype=np.float64)
    ap_size = 0

    next_dark = rng.standard_exponential() / dark_per_ns if dark_per_ns > 0.0 else _INF

    pend_time = _INF  # pending photon candidate
    pend_strobe = 0.0
    pend_blocked = False
    have_pend = False

    for i in range(n_triggers):
        t = i * period
        strobe = t + delay + delta_t
        gate = strobe - tau_pd

        # --- march through candidates in time order up to the gate instant
        while True:
            tc = next_dark
            kind = _DARK
            if ap_size > 0 and ap_heap[0] < tc:
                tc = ap_heap[0]
                kind = _AFTERPULSE
            if have_pend and pend_time < tc:
                tc = pend_time
                kind = _PHOTON
            if tc > gate:
                break
            accept = False
            if kind == _DARK:
                next_dark += rng.standard_exponential() / dark_per_ns
                if tc >= dead_any:
                    accept = True
                else:
                    counts[_SUPPRESSED] += 1
            elif kind == _AFTERPULSE:
                ap_size = _heap_pop(ap_heap, ap_size)
                if tc >= dead_any:
                    accept = True
                else:
                    counts[_SUPPRESSED] += 1
            else:
                have_pend = False
                if pend_blocked:
                    counts[_BLINDED] += 1
                elif tc < dead_hard:
                    counts[_SUPPRESSED] += 1
                else:
                    accept = True
                    if tc > pend_strobe or tc + tau_pd < pend_strobe:
                        counts[_STROBE_MISS] += 1
            if accept:
                counts[kind] += 1
                last_det = tc
                if tc + tau_dead > dead_any:
                    dead_any = tc + tau_dead
                if kind != _AFTERPULSE and tc + tau_dead > dead_hard:
                    dead_hard = tc + tau_dead
                if log_cap > 0:
                    if n_det < log_cap:
                        det_log[n_det] = tc
                        cause_log[n_det] = kind
                    n_det += 1
                if (kind != _AFTERPULSE or allow_chains) and p_after > 0.0:
                    if rng.random() < p_after:
                        if ap_size >= _AP_HEAP_CAP:
                            counts[_OVERFLOW] = 1
                        else:
                            ap_size = _heap_push(
                                ap_heap, ap_size, tc + tau_a * rng.standard_exponential()
                            )

        # --- this trigger's photon candidate and the recovery-gate check
        if rng.random() < p1:
            # a leftover pending photon would need > 50 sigma of jitter; force it out
            if have_pend:
                have_pend = False
                counts[_SUPPRESSED] += 1
            u = t + delay + (sigma * rng.standard_normal() if sigma > 0.0 else 0.0)
            if gate_rule:
                blocked = dead_any > gate and rng.random() < 0.5
            else:
                blocked = u < dead_any
            pend_time = u
            pend_strobe = strobe
            pend_blocked = blocked
            have_pend = True

        # --- candidates up to the strobe instant
        while True:
            tc = next_dark
            kind = _DARK
            if ap_size > 0 and ap_heap[0] < tc:
                tc = ap_heap[0]
                kind = _AFTERPULSE
            if have_pend and pend_time < tc:
                tc = pend_time
                kind = _PHOTON
            if tc > strobe:
                break
            accept = False
            if kind == _DARK:
                next_dark += rng.standard_exponential() / dark_per_ns
                if tc >= dead_any:
                    accept = True
                else:
                    counts[_SUPPRESSED] += 1
            elif kind == _AFTERPULSE:
                ap_size = _heap_pop(ap_heap, ap_size)
                if tc >= dead_any:
                    accept = True
                else:
                    counts[_SUPPRESSED] += 1
            else:
                have_pend = False
                if pend_blocked:
                    counts[_BLINDED] += 1
                elif tc < dead_hard:
                    counts[_SUPPRESSED] += 1
                else:
                    accept = True
                    if tc > pend_strobe or tc + tau_pd < pend_strobe:
                        counts[_STROBE_MISS] += 1
            if accept:
                counts[kind] += 1
                last_det = tc
                if tc + tau_dead > dead_any:
                    dead_any = tc + tau_dead
                if kind != _AFTERPULSE and tc + tau_dead > dead_hard:
                    dead_hard = tc + tau_dead
                if log_cap > 0:
                    if n_det < log_cap:
                        det_log[n_det] = tc
                        cause_log[n_det] = kind
                    n_det += 1
                if (kind != _AFTERPULSE or allow_chains) and p_after > 0.0:
                    if rng.random() < p_after:
                        if ap_size >= _AP_HEAP_CAP:
                            counts[_OVERFLOW] = 1
                        else:
                            ap_size = _heap_push(
                                ap_heap, ap_size, tc + tau_a * rng.standard_exponential()
                            )

        bits[i] = 1 if (last_det <= strobe and last_det + tau_pd >= strobe) else 0

    return n_det


@dataclass(frozen=True)
class DetectionCounts:
    """Tally of accepted detections by cause plus discarded candidates.

    suppressed counts candidates discarded inside a dead interval; blinded
    counts photon candidates removed by the recovery-gate rule; strobe_miss
    counts accepted photons whose own pulse failed to cover their strobe.
    """

    photon: int
    afterpulse: int
    dark: int
    suppressed: int
    blinded: int
    strobe_miss: int

    @property
    def detections(self) -> int:
        return self.photon + self.afterpulse + self.dark


@dataclass
class SimResult:
    """One bit per trigger, in trigger order, with cause tallies."""

    bits: BitBuffer
    counts: DetectionCounts
    p1_hat: float


def simulate(
    det: DetectorParams,
    src: SourceParams,
    run: RunConfig,
    *,
    rng: np.random.Generator | None = None,
    capture_detections: bool = False,
):
    """Run the event chain for run.n_triggers triggers.

    Deterministic for a given (config, seed); by default the stream is
    np.random.default_rng(SeedSequence(run.seed)). Pass `rng` to draw from a
    derived child stream instead. With capture_detections=True returns
    (SimResult, detection_times, detection_causes) for event-log assertions;
    causes are 0 photon, 1 afterpulse, 2 dark.
    """
    validate(det, src, run)
    if det.tau_pd >= run.period:
        raise ConfigError("period must exceed tau_pd (one output pulse per trigger window)")
    if rng is None:
        rng = derived_rng(run.seed)

    n = run.n_triggers
    bits = np.empty(n, dtype=np.uint8)
    counts = np.zeros(7, dtype=np.int64)
    p1 = analytic.predict_p1(src.mean_photons, det.efficiency)
    sigma = combined_jitter_sigma(det, src)
    gate_rule = det.tau_pd >= run.delta_t

    log_cap = 0
    det_log = np.empty(0, dtype=np.float64)
    cause_log = np.empty(0, dtype=np.int8)
    if capture_detections:
        expect = n * (1.0 + det.p_after) + det.dark_rate * 1e-9 * n * run.period + 1024
        log_cap = int(expect)
        det_log = np.empty(log_cap, dtype=np.float64)
        cause_log = np.empty(log_cap, dtype=np.int8)

    n_det = _simulate_kernel(
        rng,
        n,
        float(run.period),
        float(det.delay),
        float(run.delta_t),
        float(det.tau_pd),
        float(det.tau_dead),
        float(det.tau_a),
        float(det.p_after),
        float(p1),
        float(sigma),
        float(det.dark_rate * 1e-9),
        run.allow_afterpulse_chains,
        gate_rule,
        bits,
        counts,
        det_log,
        cause_log,
        log_cap,
    )
    if counts[_OVERFLOW]:
        raise RuntimeError("pending-afterpulse queue overflow; configuration out of range")

    result = SimResult(
        bits=BitBuffer(bits),
        counts=DetectionCounts(
            photon=int(counts[_PHOTON]),
            afterpulse=int(counts[_AFTERPULSE]),
            dark=int(counts[_DARK]),
            suppressed=int(counts[_SUPPRESSED]),
            blinded=int(counts[_BLINDED]),
            strobe_miss=int(counts[_STROBE_MISS]),
        ),
        p1_hat=float(np.count_nonzero(bits)) / n,
    )
    if capture_detections:
        kept = min(n_det, log_cap)
        return result, det_log[:kept], cause_log[:kept]
    return result


def tune_intensity(
    det: DetectorParams,
    run: RunConfig,
    target_p1: float,
    tol: float,
    src: SourceParams | None = None,
    seed_key: tuple[int, ...] = (),
) -> float:
    """Bisect the pulse energy until a calibration run lands within tol of target_p1.

    Calibration runs are long enough that the binomial standard error
    sqrt(p(1-p)/N) is at most tol/3. Each iteration draws from an independent
    child stream of run.seed. Raises RuntimeError with the final bracket if
    the search does not converge.
    """
    if not 0.0 < target_p1 < 1.0:
        raise ValueError("target_p1 must be in (0, 1)")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    jitter = src.jitter_fwhm if src is not None else PAPER_SOURCE.jitter_fwhm
    cal_n = int(math.ceil(9.0 * target_p1 * (1.0 - target_p1) / (tol * tol)))
    cal_run = replace(run, n_triggers=cal_n)

    evals = 0

    def measure(mu: float) -> float:
        nonlocal evals
        rng = derived_rng(run.seed, *seed_key, _TUNE_DOMAIN, evals)
        evals += 1
        res = simulate(det, SourceParams(mean_photons=mu, jitter_fwhm=jitter), cal_run, rng=rng)
        return res.p1_hat

    guess = analytic.mean_photons_for_p1(target_p1, det.efficiency)
    lo, hi = 0.0, guess
    p_hi = measure(hi)
    expansions = 0
    while p_hi < target_p1 and expansions < 12:
        lo = hi
        hi *= 2.0
        p_hi = measure(hi)
        expansions += 1
    if p_hi < target_p1:
        raise RuntimeError(
            f"intensity tuning could not bracket target {target_p1}; bracket [{lo}, {hi}]"
        )
    if abs(p_hi - target_p1) <= tol:
        return hi

    for _ in range(48):
        mid = 0.5 * (lo + hi)
        p_mid = measure(mid)
        if abs(p_mid - target_p1) <= tol:
            return mid
        if p_mid < target_p1:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(
        f"intensity tuning did not converge after {evals} runs; bracket [{lo}, {hi}]"
    )


@dataclass
class SweepPoint:
    """One grid point of a rate or pulse-width sweep."""

    axis_value: float
    n: int
    p1_hat: float
    bias: float
    a1_hat: float
    a1_err: float
    a1_pred: float
    truncated: bool
    note: str = ""


SWEEP_AXES = ("rate", "tau_pd")


def _sweep_one(args) -> SweepPoint:
    det, src, run, axis, value, idx, target_p1, tol = args
    if axis == "rate":
        det_pt, run_pt = det, replace(run, period=1e3 / value)
    else:
        det_pt, run_pt = replace(det, tau_pd=value), run
    try:
        mu = tune_intensity(
            det_pt, run_pt, target_p1, tol, src=src, seed_key=(_SWEEP_DOMAIN, idx)
        )
        src_pt = replace(src, mean_photons=mu)
        rng = derived_rng(run.seed, _SWEEP_DOMAIN, idx)
        res = simulate(det_pt, src_pt, run_pt, rng=rng)
        a1_hat, a1_err = stats.autocorr(res.bits, 1)
        pred = analytic.predict_a1(det_pt, run_pt.period, run_pt.delta_t)
        return SweepPoint(
            axis_value=value,
            n=run_pt.n_triggers,
            p1_hat=res.p1_hat,
            bias=res.p1_hat - 0.5,
            a1_hat=a1_hat,
            a1_err=a1_err,
            a1_pred=pred.a1,
            truncated=pred.truncated,
        )
    except Exception as exc:  # per-point failure is recorded, sweep continues
        nan = float("nan")
        return SweepPoint(
            axis_value=value,
            n=run_pt.n_triggers,
            p1_hat=nan,
            bias=nan,
            a1_hat=nan,
            a1_err=nan,
            a1_pred=nan,
            truncated=False,
            note=f"{type(exc).__name__}: {exc}",
        )


def sweep(
    det: DetectorParams,
    src: SourceParams,
    run: RunConfig,
    axis: str,
    grid,
    *,
    target_p1: float = 0.5,
    tol: float = 5e-4,
    parallel: int = 0,
) -> list[SweepPoint]:
    """Measure a1 across a grid of rates [MHz] or pulse widths [ns].

    The intensity is re-tuned to target_p1 at every grid point before the
    measurement run, mirroring how the bias is re-zeroed per point on the
    bench. Each point uses an independent derived child seed, so results are
    identical whether points run sequentially or in parallel.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    jobs = [
        (det, src, run, axis, float(v), i, target_p1, tol) for i, v in enumerate(grid)
    ]
    if parallel and parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_sweep_one, jobs))
    return [_sweep_one(job) for job in jobs]
