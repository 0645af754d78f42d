"""Verification suites: the runnable ground truth for the core math.

Five suites, each independent of the implementation path it checks:

  grad     central finite differences against every differentiable op
  slicing  sub-width forward vs a zero-masked full-width model
  prefix   wide pass vs narrow pass + analytic cross-block remainder
  degrade  the additive/multiplicative degradation identities
  loss     closed-form unit identities of the training losses

All suites run in float64. Each returns a SuiteResult; the CLI prints one
line per check and exits nonzero if anything failed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .degrade import HazeSpec, NoiseSpec, RainSpec, synth_clean, verify_decomposition
from .errors import VerificationError
from .selector import selection_loss, sparsity_loss
from .tensor import Tensor
from .wab import (WabModel, WidthAdaptiveConvLayer, WidthCandidates,
                  verify_prefix_decomposition, wab_losses)

GRAD_STEP = 1e-5
GRAD_TOL = 1e-4
EXACT_TOL = 1e-9
DEGRADE_TOL = 1e-12
UNIT_TOL = 1e-9


@dataclass
class CheckResult:
    name: str
    deviation: float
    tol: float
    passed: bool
    detail: str = ""


@dataclass
class SuiteResult:
    suite: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, deviation: float, tol: float, detail: str = "") -> None:
        self.checks.append(CheckResult(name, float(deviation), tol, float(deviation) <= tol, detail))

    def add_flag(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks.append(CheckResult(name, 0.0 if ok else 1.0, 0.0, ok, detail))


# ------------------------------------------------------------ gradient suite


def _numeric_grad(make_loss, tensors: list[Tensor], h: float = GRAD_STEP) -> list[np.ndarray]:
    """Central differences of a scalar-valued closure in every input element."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = make_loss()
            flat[i] = keep - h
            down = make_loss()
            flat[i] = keep
            gf[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def check_gradients(name: str, fn, tensors: list[Tensor], rng: np.random.Generator,
                    tol: float = GRAD_TOL) -> float:
    """Compare backward() grads of sum(fn(...) * R) against finite differences."""
    out_probe = fn()
    r = rng.standard_normal(out_probe.data.shape)

    def scalar() -> float:
        return float((fn().data * r).sum())

    for t in tensors:  # some cases share input tensors; start from clean grads
        t.grad = None
    with T.Tape() as tape:
        loss = (fn() * Tensor(r)).sum()
    T.backward(loss, tape)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    numeric = _numeric_grad(scalar, tensors)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum.reduce([np.abs(a), np.abs(n), np.full_like(a, 1e-6)])
        worst = max(worst, float((np.abs(a - n) / denom).max()) if a.size else 0.0)
    if worst > tol:
        raise VerificationError(f"gradient check {name!r}: worst relative error {worst:.3e} > {tol:.0e}")
    return worst


def _grad_cases(rng: np.random.Generator):
    """One random instance per differentiable op; all float64, tiny shapes."""
    def t(shape, scale=1.0, shift=0.0):
        return Tensor(scale * rng.standard_normal(shape) + shift, requires_grad=True)

    x = t((2, 2, 4, 4))
    w = t((3, 2, 3, 3), scale=0.5)
    b = t((3,))
    yield "conv2d", (lambda: T.conv2d(x, w, b)), [x, w, b]

    xs = t((1, 2, 4, 4))
    ws = t((4, 3, 3, 3), scale=0.5)
    bs = t((4,))
    yield "conv2d_sliced", (lambda: T.conv2d_sliced(xs, ws, bs, 2, 3)), [xs, ws, bs]

    xr = t((2, 3, 4))
    xr.data[np.abs(xr.data) < 0.1] += 0.2  # keep clear of the relu kink
    yield "relu", (lambda: T.relu(xr)), [xr]

    xp = t((2, 3, 4, 5))
    yield "global_avg_pool", (lambda: T.global_avg_pool(xp)), [xp]

    xl = t((2, 4))
    wl = t((3, 4))
    bl = t((3,))
    yield "linear", (lambda: T.linear(xl, wl, bl)), [xl, wl, bl]

    zs = t((2, 5))
    yield "softmax", (lambda: T.softmax(zs)), [zs]

    zc = t((3, 5))
    labels = rng.integers(0, 5, size=3)
    yield "cross_entropy", (lambda: T.cross_entropy(zc, labels)), [zc]

    a1 = t((2, 3, 4))
    b1 = Tensor(a1.data + rng.choice([-1.0, 1.0], size=a1.data.shape) *
                rng.uniform(0.1, 0.5, size=a1.data.shape), requires_grad=True)
    yield "l1_loss", (lambda: T.l1_loss(a1, b1)), [a1, b1]

    aa, bb = t((2, 3)), t((2, 3))
    yield "add", (lambda: aa + bb), [aa, bb]
    yield "sub", (lambda: aa - bb), [aa, bb]
    yield "mul", (lambda: aa * bb), [aa, bb]

    ab = t((2, 3))
    row = t((1, 3))
    yield "mul_broadcast", (lambda: ab * row), [ab, row]
    yield "add_scalar", (lambda: ab + 1.5), [ab]
    yield "mul_scalar", (lambda: ab * -2.5), [ab]

    sx = t((2, 3, 4))
    yield "sum_all", (lambda: sx.sum()), [sx]
    yield "sum_axis", (lambda: sx.sum(axis=1)), [sx]
    yield "mean_all", (lambda: sx.mean()), [sx]
    yield "mean_axis", (lambda: sx.mean(axis=2)), [sx]


GRAD_OP_NAMES = tuple(name for name, _, _ in _grad_cases(np.random.default_rng(0)))


def gradient_suite(seed: int = 0, instances: int = 20) -> SuiteResult:
    result = SuiteResult("grad")
    rng = np.random.default_rng([seed, 11])
    worst: dict[str, float] = {}
    try:
        for _ in range(instances):
            for name, fn, tensors in _grad_cases(rng):
                err = check_gradients(name, fn, tensors, rng)
                worst[name] = max(worst.get(name, 0.0), err)
    except VerificationError as e:
        result.add_flag("gradient_suite", False, str(e))
        return result
    for name, err in worst.items():
        result.add(f"grad.{name}", err, GRAD_TOL, f"{instances} instances")
    return result


# ------------------------------------------------------------ slicing suite


def zero_masked_clone(model: WabModel, rho: int) -> WabModel:
    """Independent oracle for width slicing: keep the full width but zero
    every weight row/column and bias entry at index >= rho."""
    masked = copy.deepcopy(model)
    om = model.candidates.omega
    masked.head.weight.data[rho:] = 0.0
    masked.head.bias.data[rho:] = 0.0
    masked.transform.weight.data[rho:] = 0.0
    for block in masked.trunk:
        for conv in (block.conv1, block.conv2):
            conv.weight.data[rho:] = 0.0
            conv.weight.data[:, rho:] = 0.0
            conv.bias.data[rho:] = 0.0
    masked.tail.weight.data[:, rho:] = 0.0
    return masked


def slicing_suite(seed: int = 0, inputs_per_width: int = 20, tol: float = EXACT_TOL) -> SuiteResult:
    result = SuiteResult("slicing")
    rng = np.random.default_rng([seed, 12])
    candidates = WidthCandidates((0.6, 0.7, 0.8, 0.9, 1.0), omega=16)
    model = WabModel(candidates, c_de=4, trunk_depth=2, kernel=3, num_classes=5,
                     rng=rng, dtype=np.float64)
    for rho in candidates.widths:
        masked = zero_masked_clone(model, rho)
        worst = 0.0
        for _ in range(inputs_per_width):
            img = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 12, 12)))
            sliced, _ = model.forward(img, rho)
            full, _ = masked.forward(img, candidates.omega)
            worst = max(worst, float(np.abs(sliced.data - full.data).max()))
        result.add(f"slicing.width_{rho}", worst, tol, f"{inputs_per_width} inputs")
    return result


# ------------------------------------------------------------- prefix suite


def prefix_suite(seed: int = 0, trials: int = 50, omega: int = 16, rho1: int = 8,
                 rho2: int = 12, depth: int = 3, tol: float = EXACT_TOL,
                 mutation_hook=None) -> SuiteResult:
    result = SuiteResult("prefix")
    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng([seed, 13, trial])
        layers = [WidthAdaptiveConvLayer(omega, omega, 3, rng, dtype=np.float64)
                  for _ in range(depth)]
        x = rng.standard_normal((1, rho2, 8, 8))
        try:
            report = verify_prefix_decomposition(layers, x, rho1, rho2, tol=tol,
                                                 mutation_hook=mutation_hook)
        except VerificationError as e:
            result.add_flag(f"prefix.trial_{trial}", False, str(e))
            return result
        worst = max(worst, report.max_deviation)
    result.add("prefix.remainder", worst, tol, f"{trials} trials, depth {depth}, {rho1}->{rho2}")
    # degenerate slice: equal widths must leave no remainder at all
    rng = np.random.default_rng([seed, 14])
    layers = [WidthAdaptiveConvLayer(omega, omega, 3, rng, dtype=np.float64) for _ in range(depth)]
    x = rng.standard_normal((1, rho1, 8, 8))
    report = verify_prefix_decomposition(layers, x, rho1, rho1, tol=0.0)
    result.add("prefix.equal_widths", report.max_deviation, 0.0, "rho1 == rho2")
    return result


def corrupt_cross_block(layers: list[WidthAdaptiveConvLayer]) -> None:
    """Mutation hook: nudge one cross-block slice so the two routes disagree."""
    w = layers[len(layers) // 2].weight.data
    rho = w.shape[0] // 2
    w[:rho, rho:rho + 1] += 1e-3


# ----------------------------------------------------------- degrade suite


def degradation_suite(seed: int = 0, samples: int = 100, size: int = 64,
                      tol: float = DEGRADE_TOL) -> SuiteResult:
    result = SuiteResult("degrade")
    sigma = 25.0 / 255.0
    noise_spec = NoiseSpec(sigma=sigma)
    rain_spec = RainSpec(sigma=sigma)
    haze_spec = HazeSpec(sigma=sigma)
    worst = {"rain_additivity": 0.0, "haze_residual": 0.0, "rain_to_haze": 0.0}
    sparsity_ok = True
    margin = 1.0
    for i in range(samples):
        x = synth_clean(seed * 100003 + i, size, size)
        try:
            rep = verify_decomposition(x, noise_spec, rain_spec, haze_spec,
                                       seed=seed * 7919 + i, tol=tol)
        except VerificationError as e:
            result.add_flag(f"degrade.sample_{i}", False, str(e))
            return result
        worst["rain_additivity"] = max(worst["rain_additivity"], rep.rain_additivity)
        worst["haze_residual"] = max(worst["haze_residual"], rep.haze_residual)
        worst["rain_to_haze"] = max(worst["rain_to_haze"], rep.rain_to_haze)
        sparsity_ok &= rep.rain_support_fraction < rep.residual_support_fraction
        margin = min(margin, rep.residual_support_fraction - rep.rain_support_fraction)
    for name, dev in worst.items():
        result.add(f"degrade.{name}", dev, tol, f"{samples} samples")
    result.add_flag("degrade.rain_sparser_than_residual", sparsity_ok,
                    f"min support gap {margin:.3f}")
    return result


# --------------------------------------------------------------- loss suite


def loss_suite(tol: float = UNIT_TOL) -> SuiteResult:
    result = SuiteResult("loss")
    # exact candidate ratios: omega divisible by 10
    candidates = WidthCandidates((0.6, 0.7, 0.8, 0.9, 1.0), omega=20)
    ratios = np.array([w / candidates.omega for w in candidates.widths])

    one_hot_08 = np.zeros((1, 5))
    one_hot_08[0, 2] = 1.0  # the 0.8 candidate
    dev = abs(sparsity_loss(Tensor(one_hot_08), ratios, 0.8).item())
    result.add("loss.sparsity_at_target", dev, 1e-12, "one-hot on ratio 0.8, t=0.8")

    one_hot_full = np.zeros((1, 5))
    one_hot_full[0, 4] = 1.0
    val = sparsity_loss(Tensor(one_hot_full), ratios, 0.8).item()
    result.add("loss.sparsity_full_width", abs(val - 0.04), 1e-12, "one-hot on 1.0, t=0.8")

    uniform = np.full((3, 5), 0.2)
    dev = abs(sparsity_loss(Tensor(uniform), ratios, 0.8).item())
    result.add("loss.sparsity_uniform", dev, 1e-12, "uniform probs, mean ratio 0.8")

    l1_matrix = np.array([[0.5, 0.4, 0.3, 0.2, 0.1]])
    for i in (0, 3):
        p = np.zeros((1, 5))
        p[0, i] = 1.0
        got = selection_loss(Tensor(p), l1_matrix).item()
        result.add(f"loss.selection_one_hot_{i}", abs(got - l1_matrix[0, i] / 5), 1e-12,
                   "one-hot picks L_i/n")

    x = np.linspace(0.0, 1.0, 48).reshape(1, 3, 4, 4)
    dev = abs(T.l1_loss(Tensor(x), Tensor(x.copy())).item())
    result.add("loss.distill_identical", dev, 0.0, "L1 of equal outputs is exactly 0")

    ce = T.cross_entropy(Tensor(np.zeros((1, 5))), np.array([2])).item()
    result.add("loss.ce_uniform", abs(ce - np.log(5.0)), tol, "uniform 5-way logits -> ln 5")

    # the combined objective is exactly the sum of its parts
    rng = np.random.default_rng(17)
    cands = WidthCandidates((0.5, 1.0), omega=8)
    model = WabModel(cands, c_de=4, trunk_depth=1, kernel=3, num_classes=5,
                     rng=rng, dtype=np.float64)
    img = Tensor(rng.uniform(0, 1, (2, 3, 8, 8)))
    clean = Tensor(rng.uniform(0, 1, (2, 3, 8, 8)))
    losses = wab_losses(model, img, clean, np.array([1, 4]), 4)
    total = losses.recon.item() + losses.distill.item() + losses.de.item()
    result.add("loss.wab_total_is_sum", abs(losses.total.item() - total), 1e-12)
    return result


# ------------------------------------------------------------------- runner


SUITES = {
    "grad": gradient_suite,
    "slicing": slicing_suite,
    "prefix": prefix_suite,
    "degrade": degradation_suite,
    "loss": lambda seed=0: loss_suite(),
}


def run_suites(names: list[str] | None = None, seed: int = 0,
               mutate: bool = False) -> list[SuiteResult]:
    chosen = names or list(SUITES)
    results = []
    for name in chosen:
        if name not in SUITES:
            raise VerificationError(f"unknown suite {name!r}; valid: {sorted(SUITES)}")
        if name == "prefix" and mutate:
            try:
                res = prefix_suite(seed=seed, mutation_hook=corrupt_cross_block)
            except VerificationError as e:
                res = SuiteResult("prefix")
                res.add_flag("prefix.mutated", False, str(e))
            results.append(res)
            continue
        results.append(SUITES[name](seed=seed))
    return results
