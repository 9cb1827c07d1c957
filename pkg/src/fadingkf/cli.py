"""Command-line front end.

Exit codes: 0 success, 1 I/O or parse failure, 2 invalid system,
3 when ``verify`` finds a failing criterion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import classify_series, dichotomy_experiment, stability_verdict, verdict_vs_empirical
from .bounds import compute_bounds
from .channels import ChannelError
from .config import ConfigError, ExperimentConfig, load_config
from .errors import FadingKFError
from .system_model import profile_system, validate_system

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3


class _Invalid(Exception):
    pass


def _err(msg):
    print(f"fadingkf: {msg}", file=sys.stderr)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write(out_dir, name, text):
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _load(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.run.master_seed = args.seed
    if args.out is not None:
        cfg.output.directory = args.out
    if args.figures:
        cfg.output.figures = True
    return cfg


def _checked_system(cfg):
    report = validate_system(cfg.system, **({"tol": cfg.tolerances["rank"]}
                                            if "rank" in cfg.tolerances else {}))
    if not report.valid:
        for c in report.failures():
            _err(f"invalid system: {c.name} failed {c.detail}".rstrip())
        raise _Invalid()
    for w in report.warnings:
        _err(f"warning: {w}")
    return report


def cmd_analyze(cfg, log):
    validation = _checked_system(cfg)
    profile = profile_system(cfg.system)
    series = classify_series(cfg.channel)
    verdict = stability_verdict(profile, series)
    doc = {
        "validation": validation.to_dict(),
        "profile": profile.to_dict(),
        "series": series.to_dict(),
        "verdict": verdict.to_dict(),
    }
    path = _write(cfg.output.directory, "verdict.json", _dump(doc))
    log(f"lower_as={verdict.lower_as.value} upper_as={verdict.upper_as.value} -> {path}")
    return EXIT_OK


def cmd_bounds(cfg, log):
    _checked_system(cfg)
    report = compute_bounds(cfg.system, cfg.run.C_list)
    for c in report.out_of_domain:
        _err(f"threshold {c:g} is below Tr(M) = {np.trace(report.M):g}; reported out of domain")
    path = _write(cfg.output.directory, "bounds.json", _dump(report.to_dict()))
    log(f"Tr(M)={np.trace(report.M):g} Tr(P_bar)={np.trace(report.P_bar):g} -> {path}")
    return EXIT_OK


def cmd_simulate(cfg, log):
    _checked_system(cfg)
    out = Path(cfg.output.directory)
    run = cfg.run
    kept = []

    def keep(i, trace):
        if i < run.export_traces:
            kept.append((i, trace))
            if "csv" in cfg.output.formats:
                _write(out, f"traces/path_{i:04d}.csv", trace.to_csv())

    report = dichotomy_experiment(
        cfg.system, cfg.channel, run.horizon, run.num_paths, run.C_list, run.master_seed,
        horizons=run.horizons, burn_in=run.burn_in, k0_fraction=run.k0_fraction,
        on_path=keep,
    )
    verdict = stability_verdict(profile_system(cfg.system), classify_series(cfg.channel))
    consistency = verdict_vs_empirical(verdict, report)
    if "json" in cfg.output.formats:
        # the output location is not part of the experiment, keep it out of the report
        recorded = cfg.to_dict()
        recorded["output"].pop("directory")
        doc = {"report": report.to_dict(), "verdict": verdict.to_dict(),
               "consistency": consistency.to_dict(), "config": recorded}
        _write(out, "dichotomy.json", _dump(doc))
    if "csv" in cfg.output.formats:
        _write(out, "dichotomy.csv", report.to_csv())
    if cfg.output.figures:
        from .plotting import plot_dichotomy, plot_traces

        plot_dichotomy(report, out / "figures" / "dichotomy.png")
        if kept:
            plot_traces(kept, report.trace_M, out / "figures" / "traces.png", run.C_list)
    top = report.row(run.C_list[-1])
    log(f"{run.num_paths} paths, horizon {run.horizon}: p_exceed(C={top.threshold:g})="
        f"{top.p_exceed:.3f}, dichotomy-consistent={report.dichotomy_consistent} -> {out}")
    return EXIT_OK


def cmd_verify(args, log):
    from .verify import run_all

    only = None
    if args.only:
        only = {int(v) for v in args.only.split(",")}
    results = run_all(seed=args.seed or 0, only=only, echo=print if not args.quiet else None)
    if args.out is not None:
        _write(args.out, "verify.json", _dump([r.to_dict() for r in results]))
    failed = [r.number for r in results if not r.passed]
    log(f"{len(results) - len(failed)}/{len(results)} criteria passed"
        + (f"; failing: {failed}" if failed else ""))
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "bounds": cmd_bounds, "simulate": cmd_simulate}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--seed", type=int, metavar="U64", help="override run.master_seed")
    common.add_argument("--out", metavar="DIR", help="override output.directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    common.add_argument("--figures", action="store_true",
                        help="also render PNG figures (simulate only)")
    parser = argparse.ArgumentParser(
        prog="fadingkf", description="Kalman filtering over lossy packet channels")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="stability verdict from series tests")
    sub.add_parser("bounds", parents=[common], help="P_bar, M0, M and outage thresholds")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo dichotomy experiment")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    v.add_argument("--only", metavar="LIST", help="comma-separated criterion numbers")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    if args.seed is not None and not 0 <= args.seed < 2**64:
        _err("--seed must be an unsigned 64-bit integer")
        return EXIT_IO
    if args.command == "verify":
        return cmd_verify(args, log)
    try:
        cfg = _load(args)
    except (OSError, json.JSONDecodeError, ConfigError, ChannelError) as exc:
        _err(str(exc))
        return EXIT_IO
    except FadingKFError as exc:
        _err(f"invalid system: {exc}")
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg, log)
    except _Invalid:
        return EXIT_INVALID
    except FadingKFError as exc:
        _err(str(exc))
        return EXIT_INVALID
    except OSError as exc:
        _err(str(exc))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
