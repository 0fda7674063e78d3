"""Command-line entry point: ``afcmem <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .comb import afc_efficiency, optimal_finesse
from .errors import AFCError, ConfigError, DegenerateTraceError, NonDecayingError, ValidationError
from .estimation import fit_comb, fit_spin_linewidth, read_decay_csv, read_xy_csv
from .propagation import write_csv
from .protocol import REPORT_COLUMNS, load_config, run_scenario, sweep, validate_sequence

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3

EPILOG = """\
files:
  scenario config   JSON with sections comb, control, spin, sequence and optional
                    medium, grid, storage; unknown keys are rejected.
  trace CSV         t_or_nu,re,im  (time in s or frequency in Hz, field real/imag)
  comb scan CSV     header row, then x,y = detuning (Hz), optical depth
  decay CSV         ts_seconds,height
  report CSV        one row per point with columns:
                    parameter,value,""" + ",".join(REPORT_COLUMNS) + """,config_digest
exit codes: 0 success, 2 invalid config, sequence or input data, 3 fit did not converge.
"""


def _globals(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="scenario JSON file")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--seed", type=int, default=default, help="recorded in report provenance")
    parser.add_argument("--format", choices=("csv", "json"), default=default,
                        help="report format (default: json for single runs, csv for sweeps)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="afcmem",
        description="Atomic frequency comb memory simulator and trace fitter.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, epilog=EPILOG,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        _globals(sp, suppress=True)
        return sp

    add("simulate", "run one scenario; writes report and traces")
    sp = add("sweep", "run a scenario over values of one parameter")
    sp.add_argument("--path", required=True, help="dotted parameter path, e.g. comb.delta or sequence.ts")
    sp.add_argument("--values", required=True, help="comma-separated numbers")
    sp.add_argument("--optimal-finesse", action="store_true",
                    help="set each point's tooth width to the efficiency-optimal finesse")
    sp = add("fit-comb", "fit a Gaussian comb to an absorption scan")
    sp.add_argument("trace", type=Path)
    sp.add_argument("--delta-hint", type=float, required=True, help="tooth spacing guess (Hz)")
    sp.add_argument("--n-teeth", type=int)
    sp.add_argument("--instrument-fwhm", type=float, default=0.0, help="Gaussian instrument FWHM (Hz)")
    sp = add("fit-decay", "fit the inhomogeneous spin linewidth to echo heights")
    sp.add_argument("series", type=Path)
    sp.add_argument("--method", choices=("log", "nonlinear"), default="log")
    add("validate", "check pulse-sequence timing of a scenario")
    sp = add("optimize-finesse", "efficiency-optimal finesse at a given peak depth")
    sp.add_argument("--d", type=float, required=True, help="peak optical depth")
    sp.add_argument("--d0", type=float, default=0.0, help="background optical depth")
    return p


def _emit(text: str, out_dir: Path | None, name: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")


def _rows_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def _need_config(args):
    if args.config is None:
        raise ConfigError("--config is required")
    return load_config(args.config)


def cmd_simulate(args) -> int:
    cfg = _need_config(args)
    report = run_scenario(cfg, seed=args.seed)
    if args.format == "csv":
        row = {"parameter": "", "value": ""}
        row.update({k: getattr(report, k) for k in REPORT_COLUMNS})
        row["config_digest"] = report.provenance["config_digest"]
        _emit(_rows_csv([row]), args.out, "report.csv")
    else:
        _emit(report.to_json(), args.out, "report.json")
    if args.out is not None:
        write_csv(report.input_trace, args.out / "input_trace.csv")
        write_csv(report.output_trace, args.out / "output_trace.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _need_config(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: not a comma-separated list of numbers: {args.values!r}") from None
    rows = sweep(cfg, args.path, values, optimal_finesse=args.optimal_finesse)
    if args.format == "json":
        _emit(json.dumps(rows, indent=2) + "\n", args.out, "sweep.json")
    else:
        _emit(_rows_csv(rows), args.out, "sweep.csv")
    return EXIT_OK


def _fit_exit(result, args, name) -> int:
    _emit(result.to_json() + "\n", args.out, name)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_fit_comb(args) -> int:
    nu, od = read_xy_csv(args.trace)
    res = fit_comb(nu, od, args.delta_hint, n_teeth=args.n_teeth, instrument_fwhm=args.instrument_fwhm)
    return _fit_exit(res, args, "comb_fit.json")


def cmd_fit_decay(args) -> int:
    res = fit_spin_linewidth(read_decay_csv(args.series), method=args.method)
    return _fit_exit(res, args, "decay_fit.json")


def cmd_validate(args) -> int:
    cfg = _need_config(args)
    diags = validate_sequence(cfg.plan)
    text = "".join(f"{d}\n" for d in diags) or "ok\n"
    _emit(text, args.out, "validation.txt")
    return EXIT_VALIDATION if any(d.severity == "error" for d in diags) else EXIT_OK


def cmd_optimize_finesse(args) -> int:
    f = optimal_finesse(args.d)
    payload = {"d": args.d, "d0": args.d0, "finesse": f, "efficiency": afc_efficiency(args.d, f, args.d0)}
    _emit(json.dumps(payload, indent=2) + "\n", args.out, "finesse.json")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "fit-comb": cmd_fit_comb,
    "fit-decay": cmd_fit_decay,
    "validate": cmd_validate,
    "optimize-finesse": cmd_optimize_finesse,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DegenerateTraceError, NonDecayingError) as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AFCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
