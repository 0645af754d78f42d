"""Learned width routing on top of a frozen backbone.

The selector reads the degradation features f_de through two branches:

  * a task branch: fixed-width residual block, pooled, then a classifier
    head whose logits also carry the auxiliary task-classification loss;
  * a sample branch: pooled features through two linear projections and a
    second classifier head.

The two heads' logits are summed into one decision over the width
candidates; routing takes the argmax, breaking exact ties toward the
smaller width. Because widths are ordered by capacity and tasks by
difficulty, the heads double as both task and width classifiers, which is
why the number of width candidates must equal the number of task types.

Training keeps the backbone frozen and balances three terms: the task
cross-entropy, a sparsity penalty pulling each sample's expected width
ratio toward a target t, and an expected-reconstruction-loss term weighting
each candidate by how well the frozen backbone restores at that width.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import CompatibilityError, ConfigurationError, DimensionError
from .tensor import Tensor
from .wab import WabModel, WidthAdaptiveConvLayer, WidthCandidates

log = logging.getLogger(__name__)


class LinearLayer:
    def __init__(self, dout: int, din: int, rng, dtype=np.float32) -> None:
        scale = float(np.sqrt(1.0 / din))
        if rng is None:
            w = np.zeros((dout, din))
        else:
            w = rng.normal(0.0, scale, (dout, din))
        self.weight = Tensor(np.asarray(w, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(dout, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class SelectorModel:
    def __init__(self, candidates: WidthCandidates, c_de: int, kernel: int,
                 num_classes: int, rng: np.random.Generator | None, dtype=np.float32) -> None:
        if num_classes != candidates.n:
            raise ConfigurationError(
                f"the task-label space ({num_classes}) must match the number of width "
                f"candidates ({candidates.n}); the decision heads serve both roles"
            )
        self.candidates = candidates
        self.c_de = c_de
        self.kernel = kernel
        self.task_conv1 = WidthAdaptiveConvLayer(c_de, c_de, kernel, rng, dtype)
        self.task_conv2 = WidthAdaptiveConvLayer(c_de, c_de, kernel, rng, dtype)
        self.cls_task = LinearLayer(candidates.n, c_de, rng, dtype)
        self.proj1 = LinearLayer(c_de, c_de, rng, dtype)
        self.proj2 = LinearLayer(c_de, c_de, rng, dtype)
        self.cls_sample = LinearLayer(candidates.n, c_de, rng, dtype)

    def decision(self, f_de: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (task logits, width probabilities) for a batch of f_de maps."""
        if f_de.data.ndim != 4 or f_de.data.shape[1] != self.c_de:
            raise DimensionError(f"f_de must be [B,{self.c_de},H,W], got {f_de.data.shape}")
        y = T.relu(self.task_conv1(f_de, self.c_de, self.c_de))
        task_map = f_de + self.task_conv2(y, self.c_de, self.c_de)
        f_task = T.global_avg_pool(task_map)
        task_logits = self.cls_task(f_task)
        f_sample = self.proj2(self.proj1(T.global_avg_pool(f_de)))
        probs = T.softmax(task_logits + self.cls_sample(f_sample))
        return task_logits, probs

    def parameters(self) -> list[Tensor]:
        return (self.task_conv1.parameters() + self.task_conv2.parameters()
                + self.cls_task.parameters() + self.proj1.parameters()
                + self.proj2.parameters() + self.cls_sample.parameters())

    def named_parameters(self) -> dict[str, Tensor]:
        return {
            "task.conv1.weight": self.task_conv1.weight, "task.conv1.bias": self.task_conv1.bias,
            "task.conv2.weight": self.task_conv2.weight, "task.conv2.bias": self.task_conv2.bias,
            "cls_task.weight": self.cls_task.weight, "cls_task.bias": self.cls_task.bias,
            "proj1.weight": self.proj1.weight, "proj1.bias": self.proj1.bias,
            "proj2.weight": self.proj2.weight, "proj2.bias": self.proj2.bias,
            "cls_sample.weight": self.cls_sample.weight, "cls_sample.bias": self.cls_sample.bias,
        }

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.named_parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        named = self.named_parameters()
        missing = sorted(set(named) - set(state))
        extra = sorted(set(state) - set(named))
        if missing or extra:
            raise ConfigurationError(f"state dict mismatch; missing={missing}, extra={extra}")
        for k, t in named.items():
            arr = np.asarray(state[k], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ConfigurationError(f"parameter {k}: shape {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()


@dataclass
class SelectorDecision:
    probs: np.ndarray
    chosen_index: int
    chosen_width: int
    chosen_ratio: float


def _argmax_small_tie(probs: np.ndarray) -> int:
    # np.argmax returns the first maximum, and candidates ascend, so exact
    # ties already resolve toward the smaller width
    return int(np.argmax(probs))


def selector_forward(sel: SelectorModel, f_de: Tensor | np.ndarray) -> SelectorDecision:
    """Route one sample. Accepts an f_de map [C,H,W] or a singleton batch."""
    data = f_de.data if isinstance(f_de, Tensor) else np.asarray(f_de)
    if data.ndim == 3:
        data = data[None]
    if data.shape[0] != 1:
        raise DimensionError(f"selector_forward routes one sample, got batch {data.shape[0]}")
    _, probs = sel.decision(Tensor(data))
    p = probs.data[0]
    idx = _argmax_small_tie(p)
    return SelectorDecision(
        probs=np.asarray(p, dtype=np.float64),
        chosen_index=idx,
        chosen_width=sel.candidates.widths[idx],
        chosen_ratio=sel.candidates.actual_ratio(sel.candidates.widths[idx]),
    )


# -------------------------------------------------------------------- losses


def sparsity_loss(probs: Tensor, ratios: np.ndarray, target: float) -> Tensor:
    """Batch mean of (expected width ratio - target)^2."""
    if probs.data.ndim != 2 or probs.data.shape[1] != len(ratios):
        raise DimensionError(f"probs [B,n] vs ratios {len(ratios)}: got {probs.data.shape}")
    r = Tensor(np.asarray(ratios, dtype=np.float64).reshape(1, -1))
    expected = (probs * r).sum(axis=1)
    dev = expected - float(target)
    return (dev * dev).mean()


def selection_loss(probs: Tensor, per_width_l1: np.ndarray) -> Tensor:
    """Probability-weighted reconstruction loss, averaged over batch and widths."""
    if probs.data.shape != per_width_l1.shape:
        raise DimensionError(
            f"probs {probs.data.shape} and per-width losses {per_width_l1.shape} must match"
        )
    m, n = per_width_l1.shape
    return (probs * Tensor(np.asarray(per_width_l1, dtype=np.float64))).sum() * (1.0 / (m * n))


@dataclass
class SelectorLosses:
    cls: Tensor
    spars: Tensor
    select: Tensor
    total: Tensor


def selector_losses(sel: SelectorModel, f_de: Tensor, task_labels: np.ndarray,
                    per_width_l1: np.ndarray, target: float) -> SelectorLosses:
    labels = np.asarray(task_labels)
    if labels.size and labels.max(initial=0) >= sel.candidates.n:
        raise ConfigurationError(
            f"task labels reach {int(labels.max())} but there are only "
            f"{sel.candidates.n} width candidates; the label space must equal n"
        )
    task_logits, probs = sel.decision(f_de)
    ratios = np.array([sel.candidates.actual_ratio(w) for w in sel.candidates.widths])
    cls = T.cross_entropy(task_logits, labels)
    spars = sparsity_loss(probs, ratios, target)
    select = selection_loss(probs, per_width_l1)
    total = cls + spars + select
    return SelectorLosses(cls=cls, spars=spars, select=select, total=total)


# ------------------------------------------------------------------ training


@dataclass
class FrozenFeatures:
    """Precomputed outputs of a frozen backbone over a dataset.

    Recomputing f_de and the per-width reconstruction losses every batch
    would give bit-identical values (the backbone is frozen and the ops are
    deterministic), so they are computed once up front.
    """

    f_de: np.ndarray          # [N, C_de, H, W]
    per_width_l1: np.ndarray  # [N, n]
    labels: np.ndarray        # [N]


def precompute_frozen(model: WabModel, dataset, chunk: int = 16) -> FrozenFeatures:
    n_samples = dataset.count
    widths = model.candidates.widths
    f_de_all = np.empty((n_samples, model.c_de) + dataset.degraded.shape[2:], dtype=np.float32)
    l1_all = np.empty((n_samples, len(widths)), dtype=np.float64)
    for start in range(0, n_samples, chunk):
        sl = slice(start, min(start + chunk, n_samples))
        img = Tensor(dataset.degraded[sl])
        clean = dataset.clean[sl]
        f_de = model.encoder.encode(img)
        f_de_all[sl] = f_de.data
        for i, w in enumerate(widths):
            restored, _ = model.forward(img, w, f_de)
            l1_all[sl, i] = np.abs(restored.data - clean).mean(axis=(1, 2, 3))
    return FrozenFeatures(f_de=f_de_all, per_width_l1=l1_all, labels=dataset.labels.copy())


def train_ws(model: WabModel, dataset, target: float, config,
             frozen: FrozenFeatures | None = None, progress=None) -> tuple[SelectorModel, list[dict]]:
    """Train a selector against a frozen backbone; returns (selector, history)."""
    if dataset.count == 0:
        raise ConfigurationError("training dataset is empty")
    if not 0.0 < target <= 1.0:
        raise ConfigurationError(f"sparsity target must lie in (0,1], got {target}")
    model.freeze()
    if frozen is None:
        frozen = precompute_frozen(model, dataset)

    rng_init = np.random.default_rng([config.seed, 4])
    rng_shuffle = np.random.default_rng([config.seed, 5])
    sel = SelectorModel(model.candidates, model.c_de, model.kernel,
                        model.num_classes, rng_init)
    opt = T.Adam(sel.parameters(), lr=config.lr_ws)

    history: list[dict] = []
    n = dataset.count
    bs = min(config.batch_size, n)
    t0 = time.perf_counter()
    for epoch in range(config.epochs_ws):
        order = rng_shuffle.permutation(n)
        sums = {"total": 0.0, "cls": 0.0, "spars": 0.0, "select": 0.0}
        batches = 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            f_de = Tensor(frozen.f_de[idx])
            opt.zero_grad()
            with T.Tape() as tape:
                losses = selector_losses(sel, f_de, frozen.labels[idx],
                                         frozen.per_width_l1[idx], target)
            T.backward(losses.total, tape)
            opt.step()
            sums["total"] += losses.total.item()
            sums["cls"] += losses.cls.item()
            sums["spars"] += losses.spars.item()
            sums["select"] += losses.select.item()
            batches += 1
        row = {"epoch": epoch, **{k: v / batches for k, v in sums.items()},
               "seconds": time.perf_counter() - t0}
        history.append(row)
        log.info("ws epoch %d/%d loss %.5f", epoch + 1, config.epochs_ws, row["total"])
        if progress is not None:
            progress(row)
    return sel, history


# ------------------------------------------------------------------- routing


@dataclass
class RouteResult:
    restored: np.ndarray
    chosen_index: int
    chosen_width: int
    chosen_ratio: float
    flops_used: int
    probs: np.ndarray


def check_compatible(model: WabModel, sel: SelectorModel) -> None:
    mismatches = []
    if model.candidates != sel.candidates:
        mismatches.append(f"width candidates: {model.candidates} vs {sel.candidates}")
    if model.c_de != sel.c_de:
        mismatches.append(f"c_de: {model.c_de} vs {sel.c_de}")
    if mismatches:
        raise CompatibilityError("backbone/selector mismatch on " + "; ".join(mismatches))


def route_and_restore(model: WabModel, sel: SelectorModel, img: np.ndarray) -> RouteResult:
    """Encode once, pick a width, restore at it, and price the whole pass."""
    from .metrics import ModelDesc, count_flops

    check_compatible(model, sel)
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[0] != 1 or arr.shape[1] != 3:
        raise DimensionError(f"route_and_restore wants one [3,H,W] image, got {np.asarray(img).shape}")
    x = Tensor(arr)
    f_de = model.encoder.encode(x)
    decision = selector_forward(sel, f_de)
    restored, _ = model.forward(x, decision.chosen_width, f_de)
    desc = ModelDesc(
        omega=model.candidates.omega, c_de=model.c_de, trunk_depth=model.trunk_depth,
        kernel=model.kernel, n_widths=model.candidates.n,
        num_classes=model.num_classes, include_selector=True,
    )
    cost = count_flops(desc, decision.chosen_width, arr.shape[2], arr.shape[3])
    return RouteResult(
        restored=restored.data[0],
        chosen_index=decision.chosen_index,
        chosen_width=decision.chosen_width,
        chosen_ratio=decision.chosen_ratio,
        flops_used=cost.flops,
        probs=decision.probs,
    )
