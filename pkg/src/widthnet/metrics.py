"""Quality metrics and analytic cost accounting.

PSNR and SSIM are computed in float64 regardless of input dtype. The cost
model counts 2 FLOPs per multiply-accumulate and takes the width-sliced
channel counts for the adaptive layers, so the backbone trunk scales
quadratically in the width ratio while the degradation encoder is a fixed
overhead counted once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 100 dB (identical images hit the cap)."""
    if a.shape != b.shape:
        raise DimensionError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(peak * peak / mse)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _windows(plane: np.ndarray, k: int) -> np.ndarray:
    h, w = plane.shape
    sh, sw = plane.strides
    return np.lib.stride_tricks.as_strided(
        plane, (h - k + 1, w - k + 1, k, k), (sh, sw, sh, sw), writeable=False
    )


def _ssim_plane(a: np.ndarray, b: np.ndarray, window: np.ndarray, c1: float, c2: float) -> float:
    wa = _windows(a, window.shape[0])
    wb = _windows(b, window.shape[0])
    mu1 = np.tensordot(wa, window, axes=([2, 3], [0, 1]))
    mu2 = np.tensordot(wb, window, axes=([2, 3], [0, 1]))
    m11 = np.tensordot(wa * wa, window, axes=([2, 3], [0, 1]))
    m22 = np.tensordot(wb * wb, window, axes=([2, 3], [0, 1]))
    m12 = np.tensordot(wa * wb, window, axes=([2, 3], [0, 1]))
    var1 = m11 - mu1 * mu1
    var2 = m22 - mu2 * mu2
    cov = m12 - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean local SSIM over valid 11x11 Gaussian windows, channels averaged.

    Accepts [H,W] or [C,H,W]; the spatial dims must each be at least the
    window size.
    """
    if a.shape != b.shape:
        raise DimensionError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.ndim != 3:
        raise DimensionError(f"ssim wants [H,W] or [C,H,W], got shape {a.shape}")
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise DimensionError(
            f"ssim needs spatial dims >= {SSIM_WINDOW}, got {a.shape[1]}x{a.shape[2]}"
        )
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    vals = [_ssim_plane(a[c], b[c], window, c1, c2) for c in range(a.shape[0])]
    return float(np.mean(vals))


# ----------------------------------------------------------------- cost model


@dataclass(frozen=True)
class ModelDesc:
    """Structural description of the networks, enough to price any width."""

    omega: int
    c_de: int
    trunk_depth: int
    kernel: int
    n_widths: int
    num_classes: int
    include_selector: bool = False


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str  # "conv" or "linear"
    flops: int
    params: int


@dataclass(frozen=True)
class CostReport:
    flops: int
    params: int
    breakdown: tuple[LayerCost, ...]

    def flops_matching(self, prefix: str) -> int:
        return sum(c.flops for c in self.breakdown if c.name.startswith(prefix))


def _conv_cost(name, cin_eval, cout_eval, cin_max, cout_max, k, h, w, bias=True) -> LayerCost:
    flops = 2 * k * k * cin_eval * cout_eval * h * w
    params = cout_max * cin_max * k * k + (cout_max if bias else 0)
    return LayerCost(name, "conv", flops, params)


def _linear_cost(name, din, dout) -> LayerCost:
    return LayerCost(name, "linear", 2 * din * dout, dout * din + dout)


def _layer_costs(desc: ModelDesc, rho: int, h: int, w: int) -> list[LayerCost]:
    k, cd, om = desc.kernel, desc.c_de, desc.omega
    costs = [
        _conv_cost("encoder.proj", 3, cd, 3, cd, k, h, w),
        _conv_cost("encoder.conv1", cd, cd, cd, cd, k, h, w),
        _conv_cost("encoder.conv2", cd, cd, cd, cd, k, h, w),
        _linear_cost("encoder.cls", cd, desc.num_classes),
        _conv_cost("head", 3, rho, 3, om, k, h, w),
        _conv_cost("transform", cd, rho, cd, om, 1, h, w, bias=False),
    ]
    for i in range(desc.trunk_depth):
        costs.append(_conv_cost(f"trunk.{i}.conv1", rho, rho, om, om, k, h, w))
        costs.append(_conv_cost(f"trunk.{i}.conv2", rho, rho, om, om, k, h, w))
    costs.append(_conv_cost("tail", rho, 3, om, 3, k, h, w))
    if desc.include_selector:
        costs.append(_conv_cost("selector.task.conv1", cd, cd, cd, cd, k, h, w))
        costs.append(_conv_cost("selector.task.conv2", cd, cd, cd, cd, k, h, w))
        costs.append(_linear_cost("selector.cls_task", cd, desc.n_widths))
        costs.append(_linear_cost("selector.proj1", cd, cd))
        costs.append(_linear_cost("selector.proj2", cd, cd))
        costs.append(_linear_cost("selector.cls_sample", cd, desc.n_widths))
    return costs


def count_flops(desc: ModelDesc, rho: int, h: int, w: int) -> CostReport:
    """Price one forward pass at width rho on an h-by-w input."""
    if not 1 <= rho <= desc.omega:
        raise DimensionError(f"width {rho} outside [1,{desc.omega}]")
    costs = _layer_costs(desc, rho, h, w)
    return CostReport(
        flops=sum(c.flops for c in costs),
        params=sum(c.params for c in costs),
        breakdown=tuple(costs),
    )


def count_params(desc: ModelDesc) -> int:
    """Stored parameter count; the shared store makes it width-independent."""
    return sum(c.params for c in _layer_costs(desc, desc.omega, 1, 1))
