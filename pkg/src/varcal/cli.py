"""Command-line interface: ``varcal {diagnose,rank,calibrate,plot,synth}``.

Exit status is 0 on success, 2 on usage or input-validation errors and 1 on
anything else. Output files are written atomically, so a failed run leaves no
partial file behind.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .calibrators import METHODS, VARIABLE_METHODS, MethodError, TreeSpec, fit_method, save_model
from .data import SchemaError, ValidationError, atomic_write_text, load_predictions, write_predictions
from .loess import DegenerateWindowError, LoessConfig, calibration_curves
from .metrics import BinningError, BinningScheme, DiagnosisReport, ece_hat, rank_variables, reliability_data, vece_hat
from .plots import FORMATS, emit_plot
from .synth import DEFAULT_SEED, GENERATORS, SynthParameterError, TheoremConfig, metadata, write_metadata

USER_ERRORS = (SchemaError, ValidationError, MethodError, BinningError, SynthParameterError, KeyError)


class UsageError(Exception):
    pass


def _add_binning(p):
    p.add_argument("--binning", choices=["equal_support", "equal_width"], default="equal_support")
    p.add_argument("--bins", type=int, default=10, help="number of bins B (default 10)")


def _add_loess(p):
    p.add_argument("--span", type=float, default=0.85, help="LOESS smoothing span (default 0.85)")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--grid-size", type=int, default=256)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varcal", description="Score- and variable-based calibration error tools")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file of option defaults; explicit flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("diagnose", help="ECE, per-variable VECE and worst-case VCE, plus reliability bins")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="report path (.json for structured output, otherwise text)")
    p.add_argument("--variables", nargs="+", help="restrict to these variables")
    _add_binning(p)
    _add_loess(p)

    p = sub.add_parser("rank", help="rank variables by decreasing VECE")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--variables", nargs="+")
    _add_binning(p)
    _add_loess(p)

    p = sub.add_parser("calibrate", help="fit a calibrator on one file and apply it to another")
    p.add_argument("cal")
    p.add_argument("target")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--variable", help="variable for variable-based methods and for the VECE printout")
    p.add_argument("-o", "--output", help="calibrated predictions (default: <target>.<method>.csv)")
    p.add_argument("--model-out", help="fitted model file (default: <output>.model.json)")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="Dirichlet L2 strength")
    p.add_argument("--sb-bins", type=int, default=10, help="scaling-binning bins")
    p.add_argument("--max-depth", type=int, default=2)
    p.add_argument("--min-leaf", type=float, default=0.1, help="minimum leaf fraction of the calibration set")
    p.add_argument("--quadratic", action="store_true", help="add a v^2 term to aug-beta")
    _add_binning(p)

    p = sub.add_parser("plot", help="variable-based calibration plot (SVG or grid table)")
    p.add_argument("input")
    p.add_argument("--variable", required=True)
    p.add_argument("--format", default="svg", choices=FORMATS)
    p.add_argument("-o", "--output", help="output path (default: stdout)")
    _add_loess(p)

    p = sub.add_parser("synth", help="generate a synthetic prediction file with known targets")
    p.add_argument("--theorem", type=int, choices=sorted(GENERATORS), required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--v-t", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--meta", help="sidecar metadata path (default: <output>.meta.json)")
    return parser


def _parse(argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        with open(known.config, encoding="utf-8") as fh:
            conf = json.load(fh)
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
        subparsers = parser._subparsers._group_actions[0].choices
        command = next((a for a in argv if a in subparsers), None)
        if command is None:
            raise UsageError("a subcommand is required")
        # keys may be given as destinations (max_depth) or flag names (max-depth, lambda)
        by_name = {}
        for action in subparsers[command]._actions:
            by_name[action.dest] = action
            for opt in action.option_strings:
                by_name[opt.lstrip("-").replace("-", "_")] = action
        unknown = sorted(k for k in conf if k.replace("-", "_") not in by_name)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        for key, value in conf.items():
            action = by_name[key.replace("-", "_")]
            action.default = value
            action.required = False
    return parser.parse_args(argv)


def _scheme(args) -> BinningScheme:
    try:
        return BinningScheme(args.binning, args.bins)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _loess(args) -> LoessConfig:
    try:
        return LoessConfig(args.span, args.degree, args.grid_size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_or_print(text: str, path: str | None) -> None:
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


def cmd_diagnose(args, full: bool = True) -> int:
    scheme, config = _scheme(args), _loess(args)
    data = load_predictions(args.input)
    names = args.variables or data.variable_names
    if names:
        report = rank_variables(data, scheme, config, names)
    else:
        report = DiagnosisReport(ece=ece_hat(data, scheme), scheme=scheme)
    table = report.to_table()
    if full:
        table = f"n={data.n} K={data.num_classes} binning={scheme.kind} B={scheme.num_bins}\n" + table
    if args.output and args.output.endswith(".json"):
        out = report.to_dict()
        if full:
            out["n"] = data.n
            out["num_classes"] = data.num_classes
            out["reliability"] = [asdict(b) for b in reliability_data(data, scheme)]
        atomic_write_text(args.output, json.dumps(out, indent=2) + "\n")
    elif args.output:
        atomic_write_text(args.output, table)
    sys.stdout.write(table)
    return 0


def cmd_calibrate(args) -> int:
    if args.method in VARIABLE_METHODS and not args.variable:
        raise UsageError(f"--method {args.method} requires --variable")
    scheme = _scheme(args)
    try:
        spec = TreeSpec(args.max_depth, args.min_leaf)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cal = load_predictions(args.cal)
    target = load_predictions(args.target)
    model = fit_method(args.method, cal, args.variable, num_bins=args.sb_bins, lam=args.lam,
                       tree_spec=spec, quadratic=args.quadratic)
    out = model.apply(target)
    output = args.output or str(Path(args.target).with_suffix("")) + f".{args.method}.csv"
    model_out = args.model_out or str(Path(output).with_suffix("")) + ".model.json"
    names = [args.variable] if args.variable else target.variable_names
    lines = [f"method: {args.method}", f"{'metric':<16}{'before':>10}{'after':>10}"]
    lines.append(f"{'ECE':<16}{100 * ece_hat(target, scheme):>9.2f}%{100 * ece_hat(out, scheme):>9.2f}%")
    for name in names:
        label = f"VECE({name})"
        lines.append(f"{label:<16}{100 * vece_hat(target, name, scheme):>9.2f}%{100 * vece_hat(out, name, scheme):>9.2f}%")
    lines.append(f"{'accuracy':<16}{100 * target.correct.mean():>9.2f}%{100 * out.correct.mean():>9.2f}%")
    write_predictions(out, output)
    save_model(model, model_out)
    lines.append(f"wrote {output} and {model_out}")
    print("\n".join(lines))
    return 0


def cmd_plot(args) -> int:
    data = load_predictions(args.input)
    data.variable(args.variable)
    err, pred = calibration_curves(data, args.variable, _loess(args))
    _write_or_print(emit_plot(err, pred, args.format, xlabel=f"variable value ({args.variable})"), args.output)
    return 0


def cmd_synth(args) -> int:
    cfg = TheoremConfig(k=args.k, alpha=args.alpha, n=args.n, v_t=args.v_t, seed=args.seed)
    data = GENERATORS[args.theorem](cfg)
    meta = metadata(args.theorem, cfg)
    write_predictions(data, args.output)
    write_metadata(meta, args.meta or args.output + ".meta.json")
    t = meta["targets"]
    print(f"wrote {data.n} records to {args.output}; analytic ECE={t['ece']:.6g} VECE={t['vece']:.6g}")
    return 0


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        if args.command == "diagnose":
            return cmd_diagnose(args)
        if args.command == "rank":
            return cmd_diagnose(args, full=False)
        if args.command == "calibrate":
            return cmd_calibrate(args)
        if args.command == "plot":
            return cmd_plot(args)
        if args.command == "synth":
            return cmd_synth(args)
        raise UsageError(f"unknown command {args.command!r}")
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"varcal: usage error: {exc}", file=sys.stderr)
        return 2
    except USER_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"varcal: error: {msg}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"varcal: error: {exc}", file=sys.stderr)
        return 2
    except DegenerateWindowError as exc:
        print(f"varcal: LOESS failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"varcal: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
