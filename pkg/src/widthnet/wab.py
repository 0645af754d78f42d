"""Width-adaptive restoration backbone.

One shared parameter store serves a family of sub-networks: the network of
width rho reads the first rho input channels and writes the first rho output
channels of every adaptive convolution, so narrow networks are channel
prefixes of the full one. Exactness of that nesting is what
verify_prefix_decomposition checks: for a linear stack the wide pass equals
the narrow pass plus a remainder built only from the cross blocks
W[0:r1, r1:r2] and the extra channels.

Training samples one random sub-width per iteration (uniform over all but
the widest candidate), always trains the full width alongside it, and
distills the sub-network toward the detached full-width output. A small
fixed-width encoder looks at the degraded input once, produces degradation
features f_de that are fused into every sub-network through a sliced 1x1
transform, and carries an auxiliary task classifier.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, VerificationError, WidthError
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WidthCandidates:
    """The discrete widths a backbone can run at: ratios of a base width."""

    ratios: tuple[float, ...]
    omega: int

    def __post_init__(self):
        if len(self.ratios) < 2:
            raise ConfigurationError("need at least two width candidates")
        if any(not 0.0 < r <= 1.0 for r in self.ratios):
            raise ConfigurationError(f"width ratios must lie in (0,1], got {self.ratios}")
        if list(self.ratios) != sorted(set(self.ratios)):
            raise ConfigurationError(f"width ratios must be strictly ascending, got {self.ratios}")
        if self.ratios[-1] != 1.0:
            raise ConfigurationError("the last width ratio must be exactly 1.0")
        if self.omega < 1:
            raise ConfigurationError(f"base width must be >= 1, got {self.omega}")
        w = self.widths
        if any(x < 1 for x in w):
            raise ConfigurationError(f"every candidate width must round to >= 1, got {w}")
        if list(w) != sorted(set(w)):
            raise ConfigurationError(
                f"width candidates collide after rounding at omega={self.omega}: {w}"
            )

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(int(round(r * self.omega)) for r in self.ratios)

    @property
    def n(self) -> int:
        return len(self.ratios)

    @property
    def full(self) -> int:
        return self.omega

    def actual_ratio(self, width: int) -> float:
        return width / self.omega

    def index_of(self, width: int) -> int:
        try:
            return self.widths.index(width)
        except ValueError:
            raise WidthError(f"width {width} is not a candidate; candidates: {self.widths}") from None


def _param_rng(rng: np.random.Generator | None):
    if rng is not None:
        return rng
    # zero-filled parameters; used when a checkpoint will overwrite them
    class _Zero:
        def normal(self, loc, scale, size):
            return np.zeros(size)
    return _Zero()


class WidthAdaptiveConvLayer:
    """A conv layer evaluated through leading-channel slices of its kernel."""

    def __init__(self, out_max: int, in_max: int, kernel: int,
                 rng: np.random.Generator | None, dtype=np.float32, bias: bool = True) -> None:
        scale = float(np.sqrt(2.0 / (in_max * kernel * kernel)))
        w = _param_rng(rng).normal(0.0, scale, (out_max, in_max, kernel, kernel))
        self.weight = Tensor(np.asarray(w, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_max, dtype=dtype), requires_grad=True) if bias else None

    def __call__(self, x: Tensor, rho_in: int, rho_out: int) -> Tensor:
        return T.conv2d_sliced(x, self.weight, self.bias, rho_in, rho_out)

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias is not None else [])


class ResidualBlock:
    """conv-relu-conv with a block-local skip, all at the running width."""

    def __init__(self, width: int, kernel: int, rng, dtype=np.float32) -> None:
        self.conv1 = WidthAdaptiveConvLayer(width, width, kernel, rng, dtype)
        self.conv2 = WidthAdaptiveConvLayer(width, width, kernel, rng, dtype)

    def __call__(self, x: Tensor, rho: int) -> Tensor:
        y = T.relu(self.conv1(x, rho, rho))
        return x + self.conv2(y, rho, rho)

    def parameters(self) -> list[Tensor]:
        return self.conv1.parameters() + self.conv2.parameters()


class DegradationEncoder:
    """Fixed-width residual block over the degraded input.

    Produces the degradation feature map f_de and, through a pooled linear
    head, task logits for the auxiliary classification loss.
    """

    def __init__(self, c_de: int, kernel: int, num_classes: int, rng, dtype=np.float32) -> None:
        self.c_de = c_de
        self.proj = WidthAdaptiveConvLayer(c_de, 3, kernel, rng, dtype)
        self.conv1 = WidthAdaptiveConvLayer(c_de, c_de, kernel, rng, dtype)
        self.conv2 = WidthAdaptiveConvLayer(c_de, c_de, kernel, rng, dtype)
        scale = float(np.sqrt(1.0 / c_de))
        cw = _param_rng(rng).normal(0.0, scale, (num_classes, c_de))
        self.cls_w = Tensor(np.asarray(cw, dtype=dtype), requires_grad=True)
        self.cls_b = Tensor(np.zeros(num_classes, dtype=dtype), requires_grad=True)

    def encode(self, img: Tensor) -> Tensor:
        f = T.relu(self.proj(img, 3, self.c_de))
        y = T.relu(self.conv1(f, self.c_de, self.c_de))
        return f + self.conv2(y, self.c_de, self.c_de)

    def class_logits(self, f_de: Tensor) -> Tensor:
        return T.linear(T.global_avg_pool(f_de), self.cls_w, self.cls_b)

    def parameters(self) -> list[Tensor]:
        return (self.proj.parameters() + self.conv1.parameters() + self.conv2.parameters()
                + [self.cls_w, self.cls_b])


class WabModel:
    """The full restoration backbone: head, fused encoder features, residual
    trunk, tail, and a global input skip."""

    def __init__(self, candidates: WidthCandidates, c_de: int, trunk_depth: int,
                 kernel: int, num_classes: int, rng: np.random.Generator | None,
                 dtype=np.float32) -> None:
        if trunk_depth < 1:
            raise ConfigurationError(f"trunk depth must be >= 1, got {trunk_depth}")
        om = candidates.omega
        self.candidates = candidates
        self.c_de = c_de
        self.trunk_depth = trunk_depth
        self.kernel = kernel
        self.num_classes = num_classes
        self.dtype = dtype
        self.head = WidthAdaptiveConvLayer(om, 3, kernel, rng, dtype)
        self.encoder = DegradationEncoder(c_de, kernel, num_classes, rng, dtype)
        self.transform = WidthAdaptiveConvLayer(om, c_de, 1, rng, dtype, bias=False)
        self.trunk = [ResidualBlock(om, kernel, rng, dtype) for _ in range(trunk_depth)]
        self.tail = WidthAdaptiveConvLayer(3, om, kernel, rng, dtype)

    def forward(self, img: Tensor, rho: int, f_de: Tensor | None = None) -> tuple[Tensor, Tensor]:
        self.candidates.index_of(rho)  # raises WidthError for non-candidates
        if f_de is None:
            f_de = self.encoder.encode(img)
        h = self.head(img, 3, rho)
        h = h + self.transform(f_de, self.c_de, rho)
        for block in self.trunk:
            h = block(h, rho)
        return img + self.tail(h, rho, 3), f_de

    def parameters(self) -> list[Tensor]:
        ps = self.head.parameters() + self.encoder.parameters() + self.transform.parameters()
        for block in self.trunk:
            ps += block.parameters()
        return ps + self.tail.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {
            "head.weight": self.head.weight, "head.bias": self.head.bias,
            "encoder.proj.weight": self.encoder.proj.weight, "encoder.proj.bias": self.encoder.proj.bias,
            "encoder.conv1.weight": self.encoder.conv1.weight, "encoder.conv1.bias": self.encoder.conv1.bias,
            "encoder.conv2.weight": self.encoder.conv2.weight, "encoder.conv2.bias": self.encoder.conv2.bias,
            "encoder.cls.weight": self.encoder.cls_w, "encoder.cls.bias": self.encoder.cls_b,
            "transform.weight": self.transform.weight,
        }
        for i, block in enumerate(self.trunk):
            named[f"trunk.{i}.conv1.weight"] = block.conv1.weight
            named[f"trunk.{i}.conv1.bias"] = block.conv1.bias
            named[f"trunk.{i}.conv2.weight"] = block.conv2.weight
            named[f"trunk.{i}.conv2.bias"] = block.conv2.bias
        named["tail.weight"] = self.tail.weight
        named["tail.bias"] = self.tail.bias
        return named

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

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad = False


def wab_forward(model: WabModel, img: Tensor, rho: int) -> tuple[Tensor, Tensor]:
    """Restore img with the width-rho sub-network; also returns f_de."""
    return model.forward(img, rho)


# ---------------------------------------------------- prefix decomposition


@dataclass
class PrefixReport:
    per_layer: tuple[float, ...]  # max |wide prefix - (narrow + remainder)| per layer
    max_deviation: float
    passed: bool


def verify_prefix_decomposition(layers: list[WidthAdaptiveConvLayer], x: np.ndarray,
                                rho1: int, rho2: int, tol: float = 1e-9,
                                mutation_hook=None) -> PrefixReport:
    """Check prefix nesting on a linear stack (no activations) by two routes.

    Route one runs the stack at width rho2 directly. Route two runs it at
    width rho1 and accumulates the remainder recursively: the deviation in
    the first rho1 channels after layer i+1 is the narrow kernel applied to
    the previous deviation plus the cross block W[0:r1, r1:r2] applied to
    the extra channels, which themselves evolve through W[r1:r2, 0:r2].
    The two routes never share intermediate activations.

    mutation_hook, if given, is called with the layers between the two
    routes; it exists so a deliberate corruption can prove the check bites.
    """
    if rho1 > rho2:
        raise WidthError(f"need rho1 <= rho2, got {rho1} > {rho2}")
    if x.ndim != 4 or x.shape[1] != rho2:
        raise WidthError(f"input must be [B,{rho2},H,W], got {x.shape}")
    for i, layer in enumerate(layers):
        w_out, w_in = layer.weight.data.shape[:2]
        if rho2 > w_out or rho2 > w_in:
            raise WidthError(f"layer {i} stores [{w_out},{w_in}], cannot slice at {rho2}")

    x = np.asarray(x, dtype=np.float64)
    kernel = layers[0].weight.data.shape[-1]
    pad = kernel // 2

    def conv(inp, w, b):
        return T._conv_fwd(inp, np.asarray(w, dtype=np.float64),
                           None if b is None else np.asarray(b, dtype=np.float64), pad)

    # route two: narrow pass plus recursive remainder
    narrow: list[np.ndarray] = []
    remainders: list[np.ndarray] = []
    f = x[:, :rho1]
    dev = np.zeros_like(f)
    extra = x[:, rho1:rho2]
    for layer in layers:
        w = layer.weight.data
        b = layer.bias.data if layer.bias is not None else None
        wide_in = np.concatenate([f + dev, extra], axis=1)
        f = conv(f, w[:rho1, :rho1], None if b is None else b[:rho1])
        dev = conv(dev, w[:rho1, :rho1], None) + conv(extra, w[:rho1, rho1:rho2], None)
        extra = conv(wide_in, w[rho1:rho2, :rho2], None if b is None else b[rho1:rho2])
        narrow.append(f)
        remainders.append(dev)

    if mutation_hook is not None:
        mutation_hook(layers)

    # route one: direct wide pass
    deviations = []
    wide = x
    for i, layer in enumerate(layers):
        w = layer.weight.data
        b = layer.bias.data if layer.bias is not None else None
        wide = conv(wide, w[:rho2, :rho2], None if b is None else b[:rho2])
        deviations.append(float(np.abs(wide[:, :rho1] - (narrow[i] + remainders[i])).max()))

    worst = max(deviations)
    passed = worst <= tol
    report = PrefixReport(per_layer=tuple(deviations), max_deviation=worst, passed=passed)
    if not passed:
        bad = int(np.argmax(deviations))
        raise VerificationError(
            f"prefix decomposition violated at layer {bad}: deviation {deviations[bad]:.3e} > {tol:.0e}"
        )
    return report


# ------------------------------------------------------------------ training


def sample_widths(rng: np.random.Generator, candidates: WidthCandidates) -> tuple[int, int]:
    """One training draw: a uniform random sub-width plus the full width."""
    idx = int(rng.integers(0, candidates.n - 1))
    return candidates.widths[idx], candidates.widths[-1]


@dataclass
class WabLosses:
    recon: Tensor
    distill: Tensor
    de: Tensor
    total: Tensor


def wab_losses(model: WabModel, img: Tensor, clean: Tensor, labels: np.ndarray,
               rho_rand: int) -> WabLosses:
    """Reconstruction at both widths, distillation toward the detached full
    output, and the encoder's task-classification loss."""
    f_de = model.encoder.encode(img)
    restored_sub, _ = model.forward(img, rho_rand, f_de)
    restored_full, _ = model.forward(img, model.candidates.full, f_de)
    recon = T.l1_loss(restored_sub, clean) + T.l1_loss(restored_full, clean)
    distill = T.l1_loss(restored_sub, restored_full.detach())
    de = T.cross_entropy(model.encoder.class_logits(f_de), labels)
    total = recon + distill + de
    return WabLosses(recon=recon, distill=distill, de=de, total=total)


def train_wab(config, dataset, progress=None) -> tuple[WabModel, list[dict]]:
    """Train the backbone; returns (model, per-epoch loss history).

    config is a RunConfig; dataset is a TrainSet from widthnet.dataset.
    Deterministic for a fixed config: init, width draws and shuffles each
    use their own seeded stream.
    """
    if dataset.count == 0:
        raise ConfigurationError("training dataset is empty")
    present = set(int(v) for v in np.unique(dataset.labels))
    wanted = set(config.task_labels())
    if not wanted <= present:
        from .degrade import TASK_NAMES
        missing = sorted(TASK_NAMES[i] for i in wanted - present)
        raise ConfigurationError(f"dataset is missing configured tasks: {missing}")

    candidates = config.candidates()
    rng_init = np.random.default_rng([config.seed, 1])
    rng_width = np.random.default_rng([config.seed, 2])
    rng_shuffle = np.random.default_rng([config.seed, 3])
    model = WabModel(candidates, config.c_de, config.trunk_depth, config.kernel,
                     config.num_classes(), rng_init)
    opt = T.Adam(model.parameters(), lr=config.lr_wab)

    history: list[dict] = []
    n = dataset.count
    bs = min(config.batch_size, n)
    t0 = time.perf_counter()
    for epoch in range(config.epochs_wab):
        # cosine decay to a 10% floor: the l1 gradients stay unit-sized near
        # the optimum, so a constant step keeps rattling converged weights
        if config.epochs_wab > 1:
            frac = epoch / (config.epochs_wab - 1)
            opt.state.lr = config.lr_wab * (0.1 + 0.45 * (1.0 + math.cos(math.pi * frac)))
        order = rng_shuffle.permutation(n)
        sums = {"total": 0.0, "recon": 0.0, "distill": 0.0, "de": 0.0}
        batches = 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            img = Tensor(dataset.degraded[idx])
            clean = Tensor(dataset.clean[idx])
            labels = dataset.labels[idx]
            rho_rand, _ = sample_widths(rng_width, candidates)
            opt.zero_grad()
            with T.Tape() as tape:
                losses = wab_losses(model, img, clean, labels, rho_rand)
            T.backward(losses.total, tape)
            opt.step()
            sums["total"] += losses.total.item()
            sums["recon"] += losses.recon.item()
            sums["distill"] += losses.distill.item()
            sums["de"] += losses.de.item()
            batches += 1
        row = {"epoch": epoch, **{k: v / batches for k, v in sums.items()},
               "seconds": time.perf_counter() - t0}
        history.append(row)
        log.info("wab epoch %d/%d loss %.5f", epoch + 1, config.epochs_wab, row["total"])
        if progress is not None:
            progress(row)
    return model, history
