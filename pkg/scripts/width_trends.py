"""Per-width quality/cost table for a trained backbone checkpoint.

Loads a backbone and an eval pack, runs every candidate width, and prints
PSNR / SSIM / GFLOPs per task and on average. Useful for eyeballing how
gracefully quality degrades as the network narrows:

    python3 scripts/width_trends.py --wab runs/desk0/wab.ckpt \
        --data runs/desk0/eval_pack
"""

import argparse
import sys

from widthnet.checkpoint import checkpoint_load
from widthnet.dataset import load_pack
from widthnet.evaluate import evaluate_fixed
from widthnet.metrics import count_flops
from widthnet.evaluate import model_desc


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--wab", required=True)
    p.add_argument("--data", required=True)
    args = p.parse_args(argv)

    with open(args.wab, "rb") as fh:
        model, cfg, _ = checkpoint_load(fh.read(), expect_kind="wab")
    data = load_pack(args.data)
    tasks = sorted({s["task"] for s in data.manifest["samples"]})
    h, w = data.image_size

    head = f"{'width':>6} {'ratio':>6} {'gflops':>8}"
    for t in tasks:
        head += f" {t:>10}"
    head += f" {'mean':>10}"
    print(head)

    for width in model.candidates.widths:
        rep = evaluate_fixed(model, data, width)
        gflops = count_flops(model_desc(model), width, h, w).flops / 1e9
        per = {t.task: t.psnr for t in rep.per_task}
        row = f"{width:>6} {rep.width_ratio:>6.2f} {gflops:>8.3f}"
        for t in tasks:
            row += f" {per[t]:>10.3f}"
        row += f" {rep.average['psnr']:>10.3f}"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
