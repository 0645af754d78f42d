"""Command-line interface.

Subcommands: synth, train-wab, train-ws, eval, sweep-t, verify, export-ppm.
Common flags (--config, --seed, --profile, --out) attach to every
subcommand. Errors print to stderr and exit nonzero; results are written as
JSON/CSV files and their paths printed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import checkpoint as ckpt
from . import config as cfg
from . import dataset as ds
from . import evaluate as ev
from . import verify as vf
from .errors import StageOrderError, WidthError, WidthnetError
from .selector import train_ws
from .wab import train_wab


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (sectioned key=value)")
    parser.add_argument("--seed", type=int, help="run seed (mandatory unless the config sets one)")
    parser.add_argument("--profile", choices=cfg.PROFILES, help="base profile (default desk)")
    parser.add_argument("--out", help="output path (meaning depends on the subcommand)")


def _build_config(args) -> cfg.RunConfig:
    base = cfg.from_profile(args.profile) if args.profile else None
    if args.config:
        run = cfg.load_config(args.config, base=base)
    else:
        run = base if base is not None else cfg.from_profile("desk")
    if args.seed is not None:
        from dataclasses import replace
        run = replace(run, seed=args.seed)
    return run.validate()


def _require_out(args, what: str) -> str:
    if not args.out:
        raise WidthnetError(f"--out is required: {what}")
    return args.out


def _write_history_csv(history: list[dict], path: str) -> None:
    if not history:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(history[0]))
        writer.writeheader()
        writer.writerows(history)


def cmd_synth(args) -> int:
    run = _build_config(args)
    out = _require_out(args, "directory for the dataset pack")
    tasks = tuple(t.strip() for t in args.tasks.split(",")) if args.tasks else run.tasks
    count = args.count if args.count is not None else run.samples_per_task
    size = args.size if args.size is not None else run.image_size
    manifest = ds.synth_pack(out, tasks, count, size, run.seed)
    print(f"wrote {manifest['count']} samples ({', '.join(tasks)}) to {out}")
    return 0


def cmd_train_wab(args) -> int:
    run = _build_config(args)
    if args.epochs is not None:
        from dataclasses import replace
        run = replace(run, epochs_wab=args.epochs).validate()
    out = _require_out(args, "checkpoint file to write")
    data = ds.load_pack(args.data)
    model, history = train_wab(run, data, progress=_epoch_printer("wab"))
    with open(out, "wb") as fh:
        fh.write(ckpt.checkpoint_save(model, run, extra={"stage": "wab"}))
    _write_history_csv(history, out + ".loss.csv")
    print(f"wrote {out} and {out}.loss.csv")
    return 0


def cmd_train_ws(args) -> int:
    run = _build_config(args)
    out = _require_out(args, "selector checkpoint file to write")
    if not os.path.exists(args.wab):
        raise StageOrderError(
            f"no backbone checkpoint at {args.wab}; train-wab must run before train-ws"
        )
    with open(args.wab, "rb") as fh:
        model, wab_config, _ = ckpt.checkpoint_load(fh.read(), expect_kind="wab")
    ckpt.check_config_compat(wab_config, run, "backbone checkpoint")
    target = args.target_t if args.target_t is not None else run.sparsity_target
    data = ds.load_pack(args.data)
    sel, history = train_ws(model, data, target, run, progress=_epoch_printer("ws"))
    with open(out, "wb") as fh:
        fh.write(ckpt.checkpoint_save(sel, run, extra={"stage": "ws", "sparsity_target": target}))
    _write_history_csv(history, out + ".loss.csv")
    print(f"wrote {out} and {out}.loss.csv")
    return 0


def _epoch_printer(tag: str):
    def cb(row: dict) -> None:
        print(f"[{tag}] epoch {row['epoch'] + 1}: loss {row['total']:.5f} ({row['seconds']:.0f}s)")
    return cb


def cmd_eval(args) -> int:
    run = _build_config(args)
    out = _require_out(args, "report path prefix (.json/.csv are appended)")
    data = ds.load_pack(args.data)
    with open(args.wab, "rb") as fh:
        model, wab_config, _ = ckpt.checkpoint_load(fh.read(), expect_kind="wab")
    if args.ws:
        with open(args.ws, "rb") as fh:
            sel, sel_config, _ = ckpt.checkpoint_load(fh.read(), expect_kind="selector")
        ckpt.check_checkpoint_pair(wab_config, sel_config)
        report = ev.evaluate_routed(model, sel, data)
    else:
        candidates = model.candidates
        try:
            idx = list(candidates.ratios).index(args.width)
        except ValueError:
            raise WidthError(
                f"--width {args.width} is not a candidate ratio; candidates: {candidates.ratios}"
            ) from None
        report = ev.evaluate_fixed(model, data, candidates.widths[idx])
    jpath, cpath = report.write(out)
    print(f"wrote {jpath} and {cpath}")
    for t in report.per_task:
        print(f"  {t.task}: psnr {t.psnr:.2f} ssim {t.ssim:.4f} ratio {t.mean_ratio:.3f}")
    print(f"  average: psnr {report.average['psnr']:.2f} flops {report.average['mean_flops']:.3e}")
    return 0


def cmd_sweep_t(args) -> int:
    run = _build_config(args)
    out = _require_out(args, "CSV path for the sweep table")
    targets = tuple(float(v) for v in args.targets.split(","))
    train_data = ds.load_pack(args.data)
    eval_data = ds.load_pack(args.eval_data) if args.eval_data else train_data
    with open(args.wab, "rb") as fh:
        model, wab_config, _ = ckpt.checkpoint_load(fh.read(), expect_kind="wab")
    ckpt.check_config_compat(wab_config, run, "backbone checkpoint")
    rows = ev.sweep_targets(model, train_data, eval_data, targets, run,
                            progress=lambda r: print(
                                f"[sweep] t={r.target:.2f}: ratio {r.mean_ratio:.3f} "
                                f"psnr {r.mean_psnr:.2f} flops {r.mean_flops:.3e}"))
    ev.write_sweep_csv(rows, out)
    print(f"wrote {out}")
    return 0


def cmd_verify(args) -> int:
    names = None if args.suite == "all" else [args.suite]
    seed = args.seed if args.seed is not None else 0
    results = vf.run_suites(names, seed=seed, mutate=args.mutate)
    failed = 0
    for suite in results:
        for check in suite.checks:
            status = "PASS" if check.passed else "FAIL"
            detail = f" ({check.detail})" if check.detail else ""
            print(f"{status} {check.name}: max deviation {check.deviation:.3e} "
                  f"tol {check.tol:.0e}{detail}")
            failed += 0 if check.passed else 1
    print(f"{'all checks passed' if failed == 0 else f'{failed} check(s) FAILED'}")
    return 0 if failed == 0 else 1


def cmd_export_ppm(args) -> int:
    out = _require_out(args, "directory for the PPM files")
    pack = ds.load_pack(args.data)
    written = ds.export_ppm(pack, out, which=args.which)
    print(f"wrote {len(written)} PPM files to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="widthnet",
        description="dynamic-width image restoration: synthesize data, train, route, verify",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a dataset pack")
    _common(p)
    p.add_argument("--tasks", help="comma-separated task names (default: config tasks)")
    p.add_argument("--count", type=int, help="samples per task")
    p.add_argument("--size", type=int, help="square image size")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train-wab", help="train the width-adaptive backbone")
    _common(p)
    p.add_argument("--data", required=True, help="dataset pack directory")
    p.add_argument("--epochs", type=int, help="override epochs_wab")
    p.set_defaults(fn=cmd_train_wab)

    p = sub.add_parser("train-ws", help="train the width selector against a frozen backbone")
    _common(p)
    p.add_argument("--data", required=True, help="dataset pack directory")
    p.add_argument("--wab", required=True, help="backbone checkpoint")
    p.add_argument("--target-t", type=float, dest="target_t", help="sparsity target")
    p.set_defaults(fn=cmd_train_ws)

    p = sub.add_parser("eval", help="evaluate a backbone at a fixed width or routed")
    _common(p)
    p.add_argument("--data", required=True, help="dataset pack directory")
    p.add_argument("--wab", required=True, help="backbone checkpoint")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ws", help="selector checkpoint (routed mode)")
    group.add_argument("--width", type=float, help="fixed width ratio, e.g. 0.6")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep-t", help="train and evaluate a selector per sparsity target")
    _common(p)
    p.add_argument("--data", required=True, help="training pack directory")
    p.add_argument("--eval-data", dest="eval_data", help="eval pack (default: training pack)")
    p.add_argument("--wab", required=True, help="backbone checkpoint")
    p.add_argument("--targets", default="0.6,0.7,0.8,0.9,1.0", help="comma-separated targets")
    p.set_defaults(fn=cmd_sweep_t)

    p = sub.add_parser("verify", help="run the verification suites")
    _common(p)
    p.add_argument("--suite", default="all", choices=["all", *sorted(vf.SUITES)])
    p.add_argument("--mutate", action="store_true",
                   help="corrupt a weight slice mid-check to prove the prefix suite bites")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("export-ppm", help="export pack images as binary PPM")
    _common(p)
    p.add_argument("--data", required=True, help="dataset pack directory")
    p.add_argument("--which", default="both", choices=["clean", "degraded", "both"])
    p.set_defaults(fn=cmd_export_ppm)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except WidthnetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
