"""Command-line entry point.

Exit codes: 0 success, 1 invariant/oracle/gradient breach, 2 config error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import tzr
from .config import PipelineConfig, load_config
from .errors import ConfigError, DimensionError, StageError, TzrError
from .pipeline import GRIDS, init_model, run_pipeline, run_sweep, synth_sequence
from .verify import DEFAULT_H, gradcheck_suite, oracle_suite

EXIT_OK, EXIT_BREACH, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _error(message: str) -> None:
    print(f"tgbformer: {message}", file=sys.stderr)


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.synth:
        frames = synth_sequence(cfg)
    else:
        frames = tzr.load(args.input)
    out, report = run_pipeline(frames, cfg, init_model(cfg))
    if args.output:
        tzr.save(args.output, out)
        report.outputs.append(str(args.output))
    if args.report:
        report.outputs.append(str(args.report))
        try:
            Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
        except OSError as exc:
            raise TzrError(f"cannot write {args.report}: {exc}") from None
    else:
        print(report.to_json())
    for name, ok in report.invariants.items():
        if not ok:
            _error(f"invariant failed: {name}")
    return EXIT_OK if report.ok else EXIT_BREACH


def cmd_synth(args) -> int:
    cfg = _config(args)
    tzr.save(args.output, synth_sequence(cfg))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    rows = oracle_suite(cfg, inject_fault=args.inject_fault)
    print(f"{'kernel':<22} {'max_abs_diff':>12} {'tol':>8}  status")
    for r in rows:
        print(f"{r.kernel:<22} {r.max_abs_diff:>12.3e} {r.tol:>8.0e}  {'PASS' if r.passed else 'FAIL'}")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_BREACH


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    h = args.h
    if h < 1e-8:
        print(f"warning: h={h:g} is dominated by floating-point cancellation; "
              f"judging at the default h={DEFAULT_H:g}", file=sys.stderr)
        h = DEFAULT_H
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = gradcheck_suite(cfg, h=h, only=set(args.only) if args.only else None)
    print(f"{'check':<28} {'block':<44} {'rel_error':>10}  status")
    for r in rows:
        print(f"{r.check:<28} {r.block:<44} {r.rel_error:>10.2e}  {'PASS' if r.passed else 'FAIL'}")
    failed = [r for r in rows if not r.passed]
    for r in failed:
        _error(f"gradient breach in {r.check}: {r.block} (rel {r.rel_error:.2e})")
    return EXIT_OK if rows and not failed else EXIT_BREACH


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.outdir:
        Path(args.outdir).mkdir(parents=True, exist_ok=True)
    rows = run_sweep(args.grid, cfg, outdir=args.outdir)
    print(json.dumps(rows, indent=2))
    ok = all(r["finite"] and r["invariants_ok"] for r in rows)
    return EXIT_OK if ok else EXIT_BREACH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tgbformer", description="Transformer-GraphFormer feature blending")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("run", help="blend features for one window of frames")
    common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="frames TZR file, shape [N, c, h, w]")
    src.add_argument("--synth", action="store_true", help="use synthetic frames")
    p.add_argument("--output", help="write B as TZR, shape [D, N*M]")
    p.add_argument("--report", help="write the run report JSON here instead of stdout")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="compare vectorized kernels with loop oracles")
    common(p)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gradcheck", help="tape gradients vs central finite differences")
    common(p)
    p.add_argument("--h", type=float, default=DEFAULT_H, help="finite-difference step (default 1e-5)")
    p.add_argument("--only", action="append", help="restrict to a check or module prefix, e.g. blender")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write synthetic frames")
    common(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="run an ablation grid on synthetic frames")
    common(p)
    p.add_argument("--grid", choices=GRIDS, required=True,
                   help="l_dgc: graph layers 0..4; N: window length 1..30")
    p.add_argument("--outdir", help="write one TZR per grid point here")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        field = f" (field {exc.field})" if exc.field else ""
        _error(f"config error{field}: {exc}")
        return EXIT_CONFIG
    except StageError as exc:
        _error(str(exc))
        return EXIT_CONFIG if isinstance(exc.cause, (ConfigError, DimensionError)) else EXIT_BREACH
    except (TzrError, OSError) as exc:
        _error(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
