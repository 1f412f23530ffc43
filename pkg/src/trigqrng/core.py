"""Device and run configuration types, bit buffers, and the flat config text format.

All internal times are real-valued nanoseconds; rates are counts per second.
Gaussian timing jitter is specified as FWHM and converted internally with
sigma = FWHM / (2*sqrt(2*ln 2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

# unit suffix -> multiplier into the canonical unit (ns for durations, cps for rates)
_DURATION_UNITS = {"ns": 1.0, "ps": 1e-3, "us": 1e3}
_RATE_UNITS = {"cps": 1.0, "MHz": 1e6}


class ConfigError(ValueError):
    """A configuration value violates an invariant or cannot be parsed."""


@dataclass(frozen=True)
class DetectorParams:
    """Single-photon detector model parameters.

    tau_pd       output pulse width [ns]
    tau_dead     dead time after any detection [ns]
    tau_a        afterpulse exponential time constant [ns]
    p_after      total afterpulsing probability per detection
    dark_rate    dark count rate [counts/s]
    efficiency   per-photon detection efficiency
    delay        trigger-to-output propagation [ns]
    jitter_fwhm  Gaussian FWHM of output timing [ns]
    """

    tau_pd: float
    tau_dead: float
    tau_a: float
    p_after: float
    dark_rate: float
    efficiency: float
    delay: float = 6.5
    jitter_fwhm: float = 0.37


@dataclass(frozen=True)
class SourceParams:
    """Pulsed laser parameters: Poisson mean photon number and timing jitter FWHM [ns]."""

    mean_photons: float
    jitter_fwhm: float = 0.19


@dataclass(frozen=True)
class RunConfig:
    """One simulation run: trigger period [ns], strobe margin [ns], bit count, seed."""

    period: float
    delta_t: float = 2.0
    n_triggers: int = 1
    seed: int = 0
    allow_afterpulse_chains: bool = False


# Reference device: the SLiK-APD detector with its pulse width set to the
# correlation-cancelling value, driven at 10 MHz.
PAPER_DETECTOR = DetectorParams(
    tau_pd=21.0,
    tau_dead=22.0,
    tau_a=33.0,
    p_after=0.047,
    dark_rate=235.0,
    efficiency=0.65,
    delay=6.5,
    jitter_fwhm=0.37,
)
PAPER_SOURCE = SourceParams(mean_photons=math.log(2.0) / 0.65, jitter_fwhm=0.19)
PAPER_RUN = RunConfig(period=100.0, delta_t=2.0, n_triggers=1, seed=0)

PRESETS: dict[str, tuple[DetectorParams, SourceParams, RunConfig]] = {
    "paper": (PAPER_DETECTOR, PAPER_SOURCE, PAPER_RUN),
}


def combined_jitter_sigma(det: DetectorParams, src: SourceParams) -> float:
    """Source and detector jitter combined as one Gaussian, variances summed."""
    sd = det.jitter_fwhm * FWHM_TO_SIGMA
    ss = src.jitter_fwhm * FWHM_TO_SIGMA
    return math.hypot(sd, ss)


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate(
    det: DetectorParams, src: SourceParams, run: RunConfig
) -> tuple[DetectorParams, SourceParams, RunConfig]:
    """Return the config unchanged if every invariant holds, else raise ConfigError.

    The first violated invariant is reported with its field name.
    """
    _check(det.tau_pd >= 0, "tau_pd must be nonnegative")
    _check(det.tau_dead >= 0, "tau_dead must be nonnegative")
    _check(det.tau_a > 0, "tau_a must be positive")
    _check(0.0 <= det.p_after <= 1.0, "p_after: probability out of range")
    _check(det.dark_rate >= 0, "dark_rate must be nonnegative")
    _check(0.0 <= det.efficiency <= 1.0, "efficiency: probability out of range")
    _check(det.delay >= 0, "delay must be nonnegative")
    _check(det.jitter_fwhm >= 0, "jitter_fwhm must be nonnegative")
    _check(src.mean_photons >= 0, "mean_photons must be nonnegative")
    _check(src.jitter_fwhm >= 0, "jitter_fwhm must be nonnegative")
    _check(run.period > 0, "period must be positive")
    _check(run.delta_t >= 0, "delta_t must be nonnegative")
    _check(run.n_triggers >= 1, "n_triggers must be at least 1")
    _check(0 <= run.seed < 2**64, "seed must fit in 64 bits")
    return det, src, run


class BitBuffer:
    """Ordered sequence of bits with exact length.

    The interchange currency between simulator, extractors, statistics and
    file I/O. Backed by a uint8 array of 0/1 values; treat the array view as
    read-only.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits) -> None:
        arr = np.ascontiguousarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("bits must contain only 0 and 1")
        self._bits = arr

    @classmethod
    def from01(cls, text: str) -> "BitBuffer":
        """Build from a string of '0'/'1' characters."""
        return cls(np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def ones(self) -> int:
        return int(np.count_nonzero(self._bits))

    def to01(self) -> str:
        return (self._bits + ord("0")).tobytes().decode("ascii")

    def __len__(self) -> int:
        return self._bits.size

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return BitBuffer(self._bits[idx])
        return int(self._bits[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitBuffer):
            return NotImplemented
        return self._bits.shape == other._bits.shape and bool(
            np.array_equal(self._bits, other._bits)
        )

    def __repr__(self) -> str:
        head = self.to01() if len(self) <= 32 else self.to01()[:32] + "..."
        return f"BitBuffer(n={len(self)}, bits={head})"


@dataclass
class StatsReport:
    """Bias, lag-k autocorrelation profile and test verdicts for one bit stream.

    autocorr rows are (lag, a_k, err) with err = 1/sqrt(n - k).
    tests rows are (name, p_value, passed); passed is None when a test's
    prerequisite failed and no verdict applies.
    """

    n: int
    bias: float
    bias_err: float
    autocorr: list[tuple[int, float, float]]
    tests: list[tuple[str, float, bool | None]]


# --- flat key = value config text ------------------------------------------
#
# One key per line, '#' starts a comment, durations accept ns/ps/us suffixes,
# rates accept cps/MHz. Unknown keys are an error.

_DURATION_KEYS = {
    "tau_pd",
    "tau_dead",
    "tau_a",
    "delay",
    "detector_jitter_fwhm",
    "laser_jitter_fwhm",
    "period",
    "delta_t",
}
_RATE_KEYS = {"dark_rate"}
_FLOAT_KEYS = {"p_after", "efficiency", "mean_photons"}
_INT_KEYS = {"n_triggers", "seed"}
_BOOL_KEYS = {"allow_afterpulse_chains"}
_ALL_KEYS = _DURATION_KEYS | _RATE_KEYS | _FLOAT_KEYS | _INT_KEYS | _BOOL_KEYS


def _parse_scalar(key: str, raw: str) -> float | int | bool:
    raw = raw.strip()
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    units = (
        _DURATION_UNITS if key in _DURATION_KEYS else _RATE_UNITS if key in _RATE_KEYS else None
    )
    scale = 1.0
    if units is not None:
        for suffix, mult in units.items():
            if raw.endswith(suffix):
                raw = raw[: -len(suffix)].strip()
                scale = mult
                break
    if key in _INT_KEYS:
        try:
            return int(raw)  # exact, even beyond 2**53
        except ValueError:
            pass
        try:
            value = float(raw)  # allow 1e7-style counts
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse value {raw!r}") from exc
        if not value.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(value)
    try:
        return float(raw) * scale
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from exc


def parse_config(
    text: str,
    base: tuple[DetectorParams, SourceParams, RunConfig] | None = None,
) -> tuple[DetectorParams, SourceParams, RunConfig]:
    """Parse the flat text format, overlaying values onto `base` (paper preset by default)."""
    det, src, run = base if base is not None else PRESETS["paper"]
    det_kw: dict = {}
    src_kw: dict = {}
    run_kw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        value = _parse_scalar(key, raw)
        if key == "detector_jitter_fwhm":
            det_kw["jitter_fwhm"] = value
        elif key == "laser_jitter_fwhm":
            src_kw["jitter_fwhm"] = value
        elif key == "mean_photons":
            src_kw[key] = value
        elif key in {f.name for f in fields(DetectorParams)}:
            det_kw[key] = value
        else:
            run_kw[key] = value
    det = replace(det, **det_kw)
    src = replace(src, **src_kw)
    run = replace(run, **run_kw)
    return validate(det, src, run)


def render_config(det: DetectorParams, src: SourceParams, run: RunConfig) -> str:
    """Render a config as flat text; parse_config(render_config(c)) == c."""
    lines = [
        "# detector",
        f"tau_pd = {det.tau_pd!r} ns",
        f"tau_dead = {det.tau_dead!r} ns",
        f"tau_a = {det.tau_a!r} ns",
        f"p_after = {det.p_after!r}",
        f"dark_rate = {det.dark_rate!r} cps",
        f"efficiency = {det.efficiency!r}",
        f"delay = {det.delay!r} ns",
        f"detector_jitter_fwhm = {det.jitter_fwhm!r} ns",
        "# source",
        f"mean_photons = {src.mean_photons!r}",
        f"laser_jitter_fwhm = {src.jitter_fwhm!r} ns",
        "# run",
        f"period = {run.period!r} ns",
        f"delta_t = {run.delta_t!r} ns",
        f"n_triggers = {run.n_triggers}",
        f"seed = {run.seed}",
        f"allow_afterpulse_chains = {'true' if run.allow_afterpulse_chains else 'false'}",
    ]
    return "\n".join(lines) + "\n"
