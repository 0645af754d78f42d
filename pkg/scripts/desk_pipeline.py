"""End-to-end desk run: synthesize data, train the backbone, train the
selector, and report fixed-width vs routed restoration quality.

Everything lands in one run directory so a run can be archived whole:

    python3 scripts/desk_pipeline.py --out runs/desk0 --seed 7 --epochs 24
"""

import argparse
import dataclasses
import os
import sys
import time

from widthnet.checkpoint import checkpoint_save
from widthnet.config import from_profile
from widthnet.dataset import load_pack, synth_pack
from widthnet.evaluate import evaluate_fixed, evaluate_routed, sweep_targets, write_sweep_csv
from widthnet.selector import train_ws
from widthnet.wab import train_wab


def parse_args(argv):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True, help="run directory (created if absent)")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int, default=24, help="backbone epochs")
    p.add_argument("--samples", type=int, default=300, help="training samples per task")
    p.add_argument("--tasks", default="noise25,rain,haze")
    p.add_argument("--target", type=float, default=0.8, help="sparsity target t")
    p.add_argument("--sweep", action="store_true", help="also sweep t over the candidate grid")
    return p.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    cfg = dataclasses.replace(
        from_profile("desk"),
        seed=args.seed,
        epochs_wab=args.epochs,
        samples_per_task=args.samples,
        tasks=tuple(args.tasks.split(",")),
    ).validate()
    os.makedirs(args.out, exist_ok=True)

    t0 = time.perf_counter()
    synth_pack(os.path.join(args.out, "train_pack"), cfg.tasks,
               cfg.samples_per_task, cfg.image_size, cfg.seed)
    synth_pack(os.path.join(args.out, "eval_pack"), cfg.tasks,
               cfg.eval_samples_per_task, cfg.image_size, cfg.seed + 1)
    train_data = load_pack(os.path.join(args.out, "train_pack"))
    eval_data = load_pack(os.path.join(args.out, "eval_pack"))
    print(f"data: {train_data.count} train / {eval_data.count} eval "
          f"({time.perf_counter() - t0:.1f}s)")

    model, hist = train_wab(cfg, train_data, progress=lambda r: print(
        f"  wab epoch {r['epoch'] + 1}/{cfg.epochs_wab}  loss {r['total']:.4f}", flush=True))
    with open(os.path.join(args.out, "wab.ckpt"), "wb") as fh:
        fh.write(checkpoint_save(model, cfg, extra={"stage": "wab"}))
    print(f"backbone trained in {hist[-1]['seconds']:.0f}s")

    sel, _ = train_ws(model, train_data, args.target, cfg, progress=lambda r: print(
        f"  ws epoch {r['epoch'] + 1}/{cfg.epochs_ws}  loss {r['total']:.4f}", flush=True))
    with open(os.path.join(args.out, "ws.ckpt"), "wb") as fh:
        fh.write(checkpoint_save(sel, cfg, extra={"stage": "ws", "sparsity_target": str(args.target)}))

    print("\nfixed-width eval:")
    print(f"{'width':>6} {'ratio':>6} {'psnr':>8} {'ssim':>8}")
    for w in model.candidates.widths:
        rep = evaluate_fixed(model, eval_data, w)
        rep.write(os.path.join(args.out, f"eval_w{w}"))
        print(f"{w:>6} {rep.width_ratio:>6.2f} {rep.average['psnr']:>8.3f} "
              f"{rep.average['ssim']:>8.4f}")

    routed = evaluate_routed(model, sel, eval_data)
    routed.write(os.path.join(args.out, "eval_routed"))
    print(f"\nrouted (t={args.target}):")
    for t in routed.per_task:
        print(f"  {t.task:>8}  psnr {t.psnr:.3f}  mean ratio {t.mean_ratio:.3f}")
    print(f"  {'average':>8}  psnr {routed.average['psnr']:.3f}  "
          f"mean ratio {routed.average['mean_ratio']:.3f}")

    if args.sweep:
        rows = sweep_targets(model, train_data, eval_data, cfg.width_ratios, cfg,
                             progress=lambda r: print(
                                 f"  t={r.target:.1f}  ratio {r.mean_ratio:.3f}  "
                                 f"psnr {r.mean_psnr:.3f}", flush=True))
        write_sweep_csv(rows, os.path.join(args.out, "sweep.csv"))

    print(f"\ntotal {time.perf_counter() - t0:.0f}s; artifacts in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
