"""Digital twin of a triggered single-photon-detector quantum random number generator.

Subpackages:

* core        - configuration types, bit buffers, flat config text format
* analytic    - closed-form correlation model, optimal pulse width, XOR algebra
* simulator   - event-driven Monte Carlo of the trigger/laser/detector chain
* extractors  - XOR combiners and the Von Neumann extractor
* stats       - bias/autocorrelation estimators, test battery, Markov oracle
* bitio       - bit-exact file formats and sweep CSV tables
* plotting    - figures for sweep tables and analysis reports
* cli         - the `trigqrng` command
"""

from .core import (
    PAPER_DETECTOR,
    PAPER_RUN,
    PAPER_SOURCE,
    PRESETS,
    BitBuffer,
    ConfigError,
    DetectorParams,
    RunConfig,
    SourceParams,
    StatsReport,
    parse_config,
    render_config,
    validate,
)
from .simulator import DetectionCounts, SimResult, SweepPoint, simulate, sweep, tune_intensity

__version__ = "0.1.0"

__all__ = [
    "PAPER_DETECTOR",
    "PAPER_RUN",
    "PAPER_SOURCE",
    "PRESETS",
    "BitBuffer",
    "ConfigError",
    "DetectorParams",
    "RunConfig",
    "SourceParams",
    "StatsReport",
    "DetectionCounts",
    "SimResult",
    "SweepPoint",
    "parse_config",
    "render_config",
    "simulate",
    "sweep",
    "tune_intensity",
    "validate",
    "__version__",
]
