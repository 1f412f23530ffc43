"""Command-line entry point: simulate, predict, sweep, analyze, xor, vn.

Every command is a pure function of its flags, input files and seed;
re-running reproduces outputs byte for byte. Machine-readable summaries go to
stdout as key=value lines, diagnostics to stderr. Exit status is 0 iff no
errors occurred.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import analytic, bitio, extractors, plotting, stats
from .core import PRESETS, ConfigError, parse_config, validate
from .simulator import simulate, sweep


def _parse_duration_ns(text: str) -> float:
    t = text.strip()
    for suffix, mult in (("ns", 1.0), ("ps", 1e-3), ("us", 1e3)):
        if t.endswith(suffix):
            return float(t[: -len(suffix)]) * mult
    return float(t)


def _parse_rate_mhz(text: str) -> float:
    t = text.strip()
    if t.endswith("MHz"):
        t = t[:-3]
    return float(t)


def _parse_count(text: str) -> int:
    value = float(text)
    n = int(value)
    if n != value or n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer count, got {text!r}")
    return n


def _add_config_args(p: argparse.ArgumentParser, with_run: bool = True) -> None:
    g = p.add_argument_group("device configuration (defaults < preset < --config < flags)")
    g.add_argument("--preset", default="paper", choices=sorted(PRESETS))
    g.add_argument("--config", metavar="FILE", help="flat key = value config file")
    g.add_argument("--tau-pd", type=_parse_duration_ns, metavar="NS")
    g.add_argument("--tau-dead", type=_parse_duration_ns, metavar="NS")
    g.add_argument("--tau-a", type=_parse_duration_ns, metavar="NS")
    g.add_argument("--p-after", type=float)
    g.add_argument("--dark-rate", type=float, metavar="CPS")
    g.add_argument("--efficiency", type=float)
    g.add_argument("--delay", type=_parse_duration_ns, metavar="NS")
    g.add_argument("--det-jitter", type=_parse_duration_ns, metavar="FWHM_NS")
    g.add_argument("--mean-photons", type=float)
    g.add_argument("--laser-jitter", type=_parse_duration_ns, metavar="FWHM_NS")
    if with_run:
        g.add_argument("--rate", type=_parse_rate_mhz, metavar="MHZ", help="trigger rate in MHz")
        g.add_argument("--period", type=_parse_duration_ns, metavar="NS")
        g.add_argument("--delta-t", type=_parse_duration_ns, metavar="NS")
        g.add_argument("--seed", type=int, default=None)
        g.add_argument("--chains", action="store_true", help="afterpulses may spawn afterpulses")


def _resolve_config(args, with_run: bool = True):
    det, src, run = PRESETS[args.preset]
    if args.config:
        with open(args.config, "r", encoding="ascii") as fh:
            det, src, run = parse_config(fh.read(), base=(det, src, run))
    det_over = {
        "tau_pd": args.tau_pd,
        "tau_dead": args.tau_dead,
        "tau_a": args.tau_a,
        "p_after": args.p_after,
        "dark_rate": args.dark_rate,
        "efficiency": args.efficiency,
        "delay": args.delay,
        "jitter_fwhm": args.det_jitter,
    }
    det = replace(det, **{k: v for k, v in det_over.items() if v is not None})
    src_over = {"mean_photons": args.mean_photons, "jitter_fwhm": args.laser_jitter}
    src = replace(src, **{k: v for k, v in src_over.items() if v is not None})
    if with_run:
        if args.rate is not None and args.period is not None:
            raise ConfigError("specify either --rate or --period, not both")
        run_over = {}
        if args.rate is not None:
            if args.rate <= 0:
                raise ConfigError("rate must be positive")
            run_over["period"] = 1e3 / args.rate
        if args.period is not None:
            run_over["period"] = args.period
        if args.delta_t is not None:
            run_over["delta_t"] = args.delta_t
        if args.seed is not None:
            run_over["seed"] = args.seed
        if args.chains:
            run_over["allow_afterpulse_chains"] = True
        run = replace(run, **run_over)
    return validate(det, src, run)


def _emit(key: str, value) -> None:
    if isinstance(value, bool):
        value = "true" if value else "false"
    print(f"{key}={value}")


def _cmd_simulate(args) -> int:
    det, src, run = _resolve_config(args)
    run = replace(run, n_triggers=args.n)
    result = simulate(det, src, run)
    bitio.write_bit_file(args.out, result.bits, args.format)
    pred = analytic.predict_a1(det, run.period, run.delta_t)
    _emit("n", len(result.bits))
    _emit("ones", result.bits.ones())
    _emit("p1_hat", result.p1_hat)
    _emit("bias", result.p1_hat - 0.5)
    _emit("photon", result.counts.photon)
    _emit("afterpulse", result.counts.afterpulse)
    _emit("dark", result.counts.dark)
    _emit("suppressed", result.counts.suppressed)
    _emit("blinded", result.counts.blinded)
    _emit("strobe_miss", result.counts.strobe_miss)
    _emit("period_ns", run.period)
    _emit("min_period_ns", analytic.min_period(det.tau_dead, det.tau_pd, run.delta_t))
    _emit("truncated_regime", pred.truncated)
    _emit("seed", run.seed)
    _emit("out", args.out)
    return 0


def _cmd_predict_a1(args) -> int:
    det, src, run = _resolve_config(args)
    pred = analytic.predict_a1(det, run.period, run.delta_t)
    for key in ("tau_pd", "tau_dead", "tau_a", "p_after"):
        _emit(key, getattr(det, key))
    _emit("period_ns", run.period)
    _emit("delta_t_ns", run.delta_t)
    _emit("p_plus", pred.p_plus)
    _emit("p_minus", pred.p_minus)
    _emit("a1", pred.a1)
    _emit("truncated", pred.truncated)
    return 0


def _cmd_predict_optimal(args) -> int:
    det, _, _ = _resolve_config(args, with_run=False)
    value = analytic.optimal_tau_pd(det.tau_dead, det.tau_a)
    _emit("tau_dead", det.tau_dead)
    _emit("tau_a", det.tau_a)
    _emit("tau_pd_ns", value)
    return 0


def _cmd_predict_sensitivity(args) -> int:
    det, src, run = _resolve_config(args)
    which = args.which.replace("-", "_")
    axes = ("tau_pd", "tau_dead", "period") if which == "all" else (which,)
    for key in ("tau_pd", "tau_dead", "tau_a", "p_after"):
        _emit(key, getattr(det, key))
    _emit("period_ns", run.period)
    _emit("delta_t_ns", run.delta_t)
    for axis in axes:
        _emit(f"d_a1_d_{axis}", analytic.sensitivity(det, run.period, run.delta_t, axis))
    return 0


def _cmd_predict_lag(args) -> int:
    det, src, run = _resolve_config(args)
    a1 = args.a1
    if a1 is None:
        a1 = analytic.predict_a1(det, run.period, run.delta_t).a1
    _emit("a1", a1)
    _emit("period_ns", run.period)
    _emit("tau_a", det.tau_a)
    _emit("k", args.k)
    _emit("a_k", analytic.predict_lag_k(a1, run.period, det.tau_a, args.k))
    return 0


def _cmd_predict_xor(args, two_streams: bool) -> int:
    fn = analytic.xor_two_streams_prediction if two_streams else analytic.xor_adjacent_prediction
    b_out, a1_out = fn(args.b, args.a1)
    _emit("b_in", args.b)
    _emit("a1_in", args.a1)
    _emit("b_out", b_out)
    _emit("a1_out", a1_out)
    return 0


def _cmd_predict_p1(args) -> int:
    det, src, _ = _resolve_config(args, with_run=False)
    mu = args.mu if args.mu is not None else src.mean_photons
    _emit("mean_photons", mu)
    _emit("efficiency", det.efficiency)
    _emit("p1", analytic.predict_p1(mu, det.efficiency))
    return 0


def _cmd_sweep(args) -> int:
    det, src, run = _resolve_config(args)
    run = replace(run, n_triggers=args.n)
    axis = args.axis.replace("-", "_")
    if args.list:
        grid = [
            _parse_rate_mhz(v) if axis == "rate" else _parse_duration_ns(v)
            for v in args.list.split(",")
        ]
    else:
        if args.start is None or args.stop is None:
            raise ConfigError("sweep needs either --list or --from/--to")
        grid = []
        v = args.start
        while v <= args.stop + 1e-9:
            grid.append(round(v, 12))
            v += args.step
    print(f"sweep {axis}: {len(grid)} points, n={run.n_triggers} per point", file=sys.stderr)
    points = sweep(
        det, src, run, axis, grid, target_p1=args.target, tol=args.tol, parallel=args.parallel
    )
    for p in points:
        if p.note:
            print(f"point {p.axis_value}: {p.note}", file=sys.stderr)
    csv_text = bitio.write_sweep_csv(points)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(csv_text)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(csv_text)
    if args.plot:
        plotting.save_figure(plotting.sweep_figure(points, axis), args.plot)
        print(f"wrote {args.plot}", file=sys.stderr)
    return 0


def _cmd_analyze(args) -> int:
    bits = bitio.read_bit_file(args.file, args.format, lenient=args.lenient)
    names = args.tests.split(",") if args.tests else None
    report = stats.build_report(bits, k_max=args.lags, test_names=names, block_size=args.block_size)
    sys.stdout.write(stats.render_report_text(report))
    if args.csv:
        results = stats.battery(bits, names, args.block_size)
        with open(args.csv, "w", encoding="ascii") as fh:
            fh.write(stats.render_tests_csv(results))
        print(f"wrote {args.csv}", file=sys.stderr)
    if args.plot:
        plotting.save_figure(plotting.lag_profile_figure(report), args.plot)
        print(f"wrote {args.plot}", file=sys.stderr)
    return 0


def _cmd_xor(args) -> int:
    a = bitio.read_bit_file(args.inputs[0], args.format)
    if args.pairs:
        if len(args.inputs) != 1:
            raise ConfigError("--pairs takes exactly one input file")
        out = extractors.xor_pairs(a)
    else:
        if len(args.inputs) != 2:
            raise ConfigError("xor takes two input files (or one with --pairs)")
        b = bitio.read_bit_file(args.inputs[1], args.format)
        out = extractors.xor_streams(a, b)
    bitio.write_bit_file(args.out, out, args.format)
    _emit("n_in", len(a))
    _emit("n_out", len(out))
    _emit("out", args.out)
    return 0


def _cmd_vn(args) -> int:
    a = bitio.read_bit_file(args.file, args.format)
    out = extractors.von_neumann(a)
    bitio.write_bit_file(args.out, out, args.format)
    _emit("n_in", len(a))
    _emit("n_out", len(out))
    _emit("yield_per_input_bit", len(out) / len(a) if len(a) else 0.0)
    _emit("out", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trigqrng",
        description="Digital twin of a triggered single-photon-detector QRNG",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a bit file from the event-chain model")
    _add_config_args(p)
    p.add_argument("--n", type=_parse_count, required=True, help="number of triggers / bits")
    p.add_argument("--out", required=True, help="output bit file")
    p.add_argument("--format", default="packed", choices=bitio.FORMATS)
    p.set_defaults(handler=_cmd_simulate)

    pred = sub.add_parser("predict", help="closed-form model predictions")
    pred_sub = pred.add_subparsers(dest="predict_command", required=True)

    p = pred_sub.add_parser("a1", help="lag-1 autocorrelation of the device model")
    _add_config_args(p)
    p.set_defaults(handler=_cmd_predict_a1)

    p = pred_sub.add_parser("optimal-taupd", help="pulse width that cancels a1")
    _add_config_args(p, with_run=False)
    p.set_defaults(handler=_cmd_predict_optimal)

    p = pred_sub.add_parser("sensitivity", help="partial derivatives of a1")
    _add_config_args(p)
    p.add_argument("--which", default="all", choices=("tau-pd", "tau-dead", "period", "all"))
    p.set_defaults(handler=_cmd_predict_sensitivity)

    p = pred_sub.add_parser("lag", help="lag-k autocorrelation decay")
    _add_config_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--a1", type=float, default=None, help="override the lag-1 input value")
    p.set_defaults(handler=_cmd_predict_lag)

    p = pred_sub.add_parser("xor2", help="bias/autocorrelation after XOR of two streams")
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--a1", type=float, required=True)
    p.set_defaults(handler=lambda a: _cmd_predict_xor(a, True))

    p = pred_sub.add_parser("xor-pairs", help="bias/autocorrelation after pairwise XOR")
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--a1", type=float, required=True)
    p.set_defaults(handler=lambda a: _cmd_predict_xor(a, False))

    p = pred_sub.add_parser("p1", help="detection probability of a Poisson pulse")
    _add_config_args(p, with_run=False)
    p.add_argument("--mu", type=float, default=None)
    p.set_defaults(handler=_cmd_predict_p1)

    p = sub.add_parser("sweep", help="a1 versus rate or pulse width, CSV out")
    p.add_argument("axis", choices=("rate", "tau-pd"))
    _add_config_args(p)
    p.add_argument("--list", help="comma-separated grid values")
    p.add_argument("--from", dest="start", type=float, help="grid start")
    p.add_argument("--to", dest="stop", type=float, help="grid end (inclusive)")
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--n", type=_parse_count, required=True, help="triggers per grid point")
    p.add_argument("--target", type=float, default=0.5, help="p1 tuning target")
    p.add_argument("--tol", type=float, default=5e-4, help="p1 tuning tolerance")
    p.add_argument("--parallel", type=int, default=0, metavar="WORKERS")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--plot", help="also render the sweep figure to this file")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("analyze", help="bias, autocorrelation profile and tests for a bit file")
    p.add_argument("file")
    p.add_argument("--format", default="packed", choices=bitio.FORMATS)
    p.add_argument("--lenient", action="store_true", help="ascii reader skips whitespace")
    p.add_argument("--lags", type=int, default=16)
    p.add_argument("--tests", help="comma-separated subset of monobit,block_frequency,runs")
    p.add_argument("--block-size", type=int, default=128)
    p.add_argument("--csv", help="write test results CSV here")
    p.add_argument("--plot", help="render the lag profile figure to this file")
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("xor", help="XOR two bit files, or adjacent pairs of one")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--pairs", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="packed", choices=bitio.FORMATS)
    p.set_defaults(handler=_cmd_xor)

    p = sub.add_parser("vn", help="Von Neumann extractor on a bit file")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="packed", choices=bitio.FORMATS)
    p.set_defaults(handler=_cmd_vn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, bitio.BitFileError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
