"""Evaluation reports: fixed-width and routed restoration quality.

Restored images are clamped to [0,1] before metrics so PSNR/SSIM compare
displayable images. Reports aggregate per task and overall, and serialize
to both JSON and CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import TrainSet
from .metrics import ModelDesc, count_flops, psnr, ssim
from .selector import SelectorModel, route_and_restore
from .tensor import Tensor
from .wab import WabModel


@dataclass
class TaskAggregate:
    task: str
    count: int
    psnr: float
    ssim: float
    psnr_degraded: float
    mean_ratio: float
    mean_flops: float


@dataclass
class EvalReport:
    mode: str  # "fixed" or "routed"
    width: int | None
    width_ratio: float | None
    per_task: list[TaskAggregate]
    average: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def write(self, prefix: str) -> tuple[str, str]:
        jpath, cpath = prefix + ".json", prefix + ".csv"
        with open(jpath, "w") as fh:
            fh.write(self.to_json())
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "count", "psnr", "ssim", "psnr_degraded", "mean_ratio", "mean_flops"])
            for t in self.per_task:
                w.writerow([t.task, t.count, f"{t.psnr:.4f}", f"{t.ssim:.5f}",
                            f"{t.psnr_degraded:.4f}", f"{t.mean_ratio:.5f}", f"{t.mean_flops:.0f}"])
            a = self.average
            w.writerow(["average", a["count"], f"{a['psnr']:.4f}", f"{a['ssim']:.5f}",
                        f"{a['psnr_degraded']:.4f}", f"{a['mean_ratio']:.5f}", f"{a['mean_flops']:.0f}"])
        return jpath, cpath


def model_desc(model: WabModel, include_selector: bool = False) -> ModelDesc:
    return ModelDesc(
        omega=model.candidates.omega, c_de=model.c_de, trunk_depth=model.trunk_depth,
        kernel=model.kernel, n_widths=model.candidates.n,
        num_classes=model.num_classes, include_selector=include_selector,
    )


def _aggregate(mode, width, ratio, rows) -> EvalReport:
    by_task: dict[str, list] = {}
    label_of: dict[str, int] = {}
    for r in rows:
        by_task.setdefault(r["task"], []).append(r)
        label_of[r["task"]] = r["label"]
    per_task = []
    for task in sorted(by_task, key=label_of.get):
        sub = by_task[task]
        per_task.append(TaskAggregate(
            task=task,
            count=len(sub),
            psnr=float(np.mean([r["psnr"] for r in sub])),
            ssim=float(np.mean([r["ssim"] for r in sub])),
            psnr_degraded=float(np.mean([r["psnr_degraded"] for r in sub])),
            mean_ratio=float(np.mean([r["ratio"] for r in sub])),
            mean_flops=float(np.mean([r["flops"] for r in sub])),
        ))
    average = {
        "count": len(rows),
        "psnr": float(np.mean([r["psnr"] for r in rows])),
        "ssim": float(np.mean([r["ssim"] for r in rows])),
        "psnr_degraded": float(np.mean([r["psnr_degraded"] for r in rows])),
        "mean_ratio": float(np.mean([r["ratio"] for r in rows])),
        "mean_flops": float(np.mean([r["flops"] for r in rows])),
    }
    return EvalReport(mode=mode, width=width, width_ratio=ratio,
                      per_task=per_task, average=average)


def evaluate_fixed(model: WabModel, data: TrainSet, width: int, chunk: int = 16) -> EvalReport:
    """Run the whole eval set at one width."""
    model.candidates.index_of(width)
    h, w = data.image_size
    flops = count_flops(model_desc(model), width, h, w).flops
    ratio = model.candidates.actual_ratio(width)
    label_names = {}
    for s in data.manifest["samples"]:
        label_names[s["index"]] = (s["task"], s["label"])
    rows = []
    for start in range(0, data.count, chunk):
        sl = slice(start, min(start + chunk, data.count))
        restored, _ = model.forward(Tensor(data.degraded[sl]), width)
        out = np.clip(restored.data, 0.0, 1.0)
        for j in range(out.shape[0]):
            i = start + j
            task, label = label_names[i]
            rows.append({
                "task": task, "label": label,
                "psnr": psnr(out[j], data.clean[i]),
                "ssim": ssim(out[j], data.clean[i]),
                "psnr_degraded": psnr(data.degraded[i], data.clean[i]),
                "ratio": ratio, "flops": flops,
            })
    return _aggregate("fixed", width, ratio, rows)


def evaluate_routed(model: WabModel, sel: SelectorModel, data: TrainSet) -> EvalReport:
    """Let the selector pick a width per sample."""
    label_names = {s["index"]: (s["task"], s["label"]) for s in data.manifest["samples"]}
    rows = []
    for i in range(data.count):
        res = route_and_restore(model, sel, data.degraded[i])
        out = np.clip(res.restored, 0.0, 1.0)
        task, label = label_names[i]
        rows.append({
            "task": task, "label": label,
            "psnr": psnr(out, data.clean[i]),
            "ssim": ssim(out, data.clean[i]),
            "psnr_degraded": psnr(data.degraded[i], data.clean[i]),
            "ratio": res.chosen_ratio, "flops": res.flops_used,
        })
    return _aggregate("routed", None, None, rows)


@dataclass
class SweepRow:
    target: float
    mean_psnr: float
    mean_ssim: float
    mean_ratio: float
    mean_flops: float
    full_flops: int


def sweep_targets(model: WabModel, train_data: TrainSet, eval_data: TrainSet,
                  targets: tuple[float, ...], config, progress=None) -> list[SweepRow]:
    """Train one selector per sparsity target (same seed) and evaluate each.

    The frozen-backbone features are shared across targets; they do not
    depend on t.
    """
    from .selector import precompute_frozen, train_ws

    frozen = precompute_frozen(model, train_data)
    h, w = eval_data.image_size
    full_flops = count_flops(model_desc(model), model.candidates.omega, h, w).flops
    rows = []
    for t in targets:
        sel, _ = train_ws(model, train_data, t, config, frozen=frozen)
        report = evaluate_routed(model, sel, eval_data)
        rows.append(SweepRow(
            target=float(t),
            mean_psnr=report.average["psnr"],
            mean_ssim=report.average["ssim"],
            mean_ratio=report.average["mean_ratio"],
            mean_flops=report.average["mean_flops"],
            full_flops=full_flops,
        ))
        if progress is not None:
            progress(rows[-1])
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target", "mean_psnr", "mean_ssim", "mean_ratio", "mean_flops", "full_flops"])
        for r in rows:
            w.writerow([f"{r.target:.3f}", f"{r.mean_psnr:.4f}", f"{r.mean_ssim:.5f}",
                        f"{r.mean_ratio:.5f}", f"{r.mean_flops:.0f}", r.full_flops])
