"""Synthetic clean images and the degradation algebra that links the tasks.

Every corrupted observation is clean content plus a task-specific layer and
shared additive noise:

    y_noise = x + N
    y_rain  = x + A_rain + N            (sparse additive streak layer)
    y_haze  = x * A_haze + N            (multiplicative transmission map)

The haze observation rewrites as y_noise plus a dense residual layer
A' = (A_haze - 1) * x, so rain and haze differ from plain noise only in the
structure of their additive layer: A_rain touches a small fraction of the
pixels, A' touches nearly all of them. verify_decomposition recomputes each
side of those identities independently and checks them pre-clamp to 1e-12.

All randomness flows through numpy Generators keyed as [tag, seed], so a
sample is fully reproducible from (spec, seed), and the additive-noise draw
for a given seed is the same across variants.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError, DimensionError, VerificationError

_CLEAN_TAG = 101
_NOISE_TAG = 211
_RAIN_TAG = 307
_HAZE_TAG = 401

CHANNELS = 3

# Fixed task registry: labels are ordered by how hard restoration is.
TASK_NAMES = ("noise15", "noise25", "noise50", "rain", "haze")
NUM_TASK_TYPES = len(TASK_NAMES)


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError(f"noise sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class RainSpec:
    streaks: int = 20
    length: float = 12.0
    angle: float = 75.0  # degrees from horizontal
    intensity: float = 0.35
    thickness: float = 1.0
    sigma: float = 0.0  # optional shared additive noise

    def __post_init__(self):
        if self.streaks < 0:
            raise ConfigurationError(f"streak count must be >= 0, got {self.streaks}")
        if self.length <= 0 or self.thickness <= 0 or self.intensity <= 0:
            raise ConfigurationError("rain length, thickness and intensity must be positive")
        if self.sigma < 0:
            raise ConfigurationError(f"noise sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class HazeSpec:
    beta: float = 1.2
    airlight: float = 0.8
    mode: str = "paper"  # "paper": y = x*A + N; "scattering": adds airlight*(1-A)
    sigma: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigurationError(f"haze beta must be >= 0, got {self.beta}")
        if not 0.0 <= self.airlight <= 1.0:
            raise ConfigurationError(f"airlight must lie in [0,1], got {self.airlight}")
        if self.mode not in ("paper", "scattering"):
            raise ConfigurationError(f"haze mode must be 'paper' or 'scattering', got {self.mode!r}")
        if self.sigma < 0:
            raise ConfigurationError(f"noise sigma must be >= 0, got {self.sigma}")


DegradationSpec = NoiseSpec | RainSpec | HazeSpec


@dataclass
class DegradedSample:
    """One training/eval sample with every layer kept around for checks."""

    clean: np.ndarray            # [3,H,W] in [0,1]
    degraded: np.ndarray         # clamped to [0,1]
    degraded_raw: np.ndarray     # pre-clamp, satisfies the identities exactly
    components: dict[str, np.ndarray] = field(default_factory=dict)
    task_label: int = 0
    task: str = ""
    seed: int = 0


def _rng(tag: int, seed: int) -> np.random.Generator:
    return np.random.default_rng([tag, int(seed)])


def synth_clean(seed: int, height: int, width: int) -> np.ndarray:
    """Procedural clean image: low-frequency color gradients plus a few
    rectangles and discs, clamped to [0,1]. Deterministic in the seed."""
    if height < 1 or width < 1:
        raise DimensionError(f"image dims must be positive, got {height}x{width}")
    rng = _rng(_CLEAN_TAG, seed)
    yy, xx = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    img = np.empty((CHANNELS, height, width), dtype=np.float64)
    for c in range(CHANNELS):
        fx, fy = rng.uniform(0.3, 1.6, size=2) * rng.choice([-1.0, 1.0], size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        img[c] = 0.5 + 0.25 * np.cos(2.0 * math.pi * (fx * xx + fy * yy) + phase)
        fx2, fy2 = rng.uniform(0.2, 0.9, size=2)
        phase2 = rng.uniform(0.0, 2.0 * math.pi)
        img[c] += 0.12 * np.cos(2.0 * math.pi * (fx2 * xx - fy2 * yy) + phase2)

    for _ in range(rng.integers(2, 6)):
        h0, w0 = rng.integers(0, height), rng.integers(0, width)
        h1 = min(height, h0 + int(rng.integers(max(2, height // 8), max(3, height // 2))))
        w1 = min(width, w0 + int(rng.integers(max(2, width // 8), max(3, width // 2))))
        img[:, h0:h1, w0:w1] += rng.uniform(-0.3, 0.3, size=(CHANNELS, 1, 1))
    for _ in range(rng.integers(2, 6)):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        r = rng.uniform(min(height, width) / 10, min(height, width) / 3)
        mask = (yy * height - cy) ** 2 + (xx * width - cx) ** 2 <= r * r
        img[:, mask] += rng.uniform(-0.3, 0.3, size=(CHANNELS, 1))

    return np.clip(img, 0.0, 1.0)


def _noise_field(shape: tuple[int, ...], sigma: float, seed: int) -> np.ndarray:
    """The shared additive-noise draw: identical across variants for one seed."""
    if sigma == 0.0:
        return np.zeros(shape, dtype=np.float64)
    return sigma * _rng(_NOISE_TAG, seed).standard_normal(shape)


def apply_noise(x: np.ndarray, sigma: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """y = x + N with N ~ iid Gaussian(0, sigma^2). Returns (y, N), pre-clamp."""
    if sigma < 0:
        raise ConfigurationError(f"noise sigma must be >= 0, got {sigma}")
    noise = _noise_field(x.shape, sigma, seed)
    return x + noise, noise


def _rasterize_streaks(height: int, width: int, spec: RainSpec, rng: np.random.Generator) -> np.ndarray:
    layer = np.zeros((height, width), dtype=np.float64)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    for _ in range(spec.streaks):
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        ang = math.radians(spec.angle + rng.normal(0.0, 4.0))
        half = 0.5 * spec.length * rng.uniform(0.7, 1.3)
        dy, dx = math.sin(ang), math.cos(ang)
        gain = spec.intensity * rng.uniform(0.8, 1.2)
        # distance from each pixel to the segment, clipped to its extent
        t = np.clip((yy - cy) * dy + (xx - cx) * dx, -half, half)
        dist = np.hypot(yy - (cy + t * dy), xx - (cx + t * dx))
        layer += gain * np.clip(1.0 - dist / spec.thickness, 0.0, 1.0)
    return layer


def apply_rain(x: np.ndarray, spec: RainSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """y = x + A_rain + N. Returns (y, A_rain), pre-clamp.

    A_rain is a nonnegative layer of anti-aliased streak segments shared by
    all channels; it must stay sparse (under 30% of pixels nonzero).
    """
    _, height, width = x.shape
    layer2d = _rasterize_streaks(height, width, spec, _rng(_RAIN_TAG, seed))
    frac = float(np.count_nonzero(layer2d)) / layer2d.size
    if frac >= 0.3:
        raise ConfigurationError(
            f"rain layer covers {frac:.0%} of pixels; specs must keep it under 30%"
        )
    rain = np.broadcast_to(layer2d, x.shape).copy()
    noise = _noise_field(x.shape, spec.sigma, seed)
    return (x + rain) + noise, rain


def _depth_field(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing="ij")
    d = np.zeros((height, width), dtype=np.float64)
    for _ in range(3):
        fx, fy = rng.uniform(0.3, 1.4, size=2) * rng.choice([-1.0, 1.0], size=2)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        d += rng.uniform(0.4, 1.0) * np.cos(2.0 * math.pi * (fx * xx + fy * yy) + phase)
    lo, hi = d.min(), d.max()
    return (d - lo) / (hi - lo)


def apply_haze(x: np.ndarray, spec: HazeSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Transmission-map haze. Returns (y, A_haze), pre-clamp.

    A_haze = exp(-beta * depth) with a smooth random depth field in [0,1].
    Mode "paper" keeps y = x * A_haze + N so the residual identity below is
    exact; mode "scattering" adds the airlight term airlight * (1 - A_haze).
    """
    _, height, width = x.shape
    depth = _depth_field(height, width, _rng(_HAZE_TAG, seed))
    trans2d = np.exp(-spec.beta * depth)
    trans = np.broadcast_to(trans2d, x.shape).copy()
    noise = _noise_field(x.shape, spec.sigma, seed)
    y = x * trans
    if spec.mode == "scattering":
        y = y + spec.airlight * (1.0 - trans)
    return y + noise, trans


def residual_haze(x: np.ndarray, trans: np.ndarray) -> np.ndarray:
    """The haze observation as an additive layer on top of x: A' = (A_haze - 1) * x."""
    if x.shape != trans.shape:
        raise DimensionError(f"image and transmission shapes differ: {x.shape} vs {trans.shape}")
    return (trans - 1.0) * x


@dataclass
class DecompositionReport:
    rain_additivity: float       # max |y_rain - (y_noise + A_rain)|
    haze_residual: float         # max |y_haze - (y_noise + A')|
    rain_to_haze: float          # max |y_haze - (y_rain + patch)| with the support-split patch
    rain_support_fraction: float
    residual_support_fraction: float
    passed: bool


_SUPPORT_EPS = 1e-9


def verify_decomposition(x: np.ndarray, noise_spec: NoiseSpec, rain_spec: RainSpec,
                         haze_spec: HazeSpec, seed: int, tol: float = 1e-12) -> DecompositionReport:
    """Check the cross-variant identities on one clean image, pre-clamp.

    All three variants must share the same additive-noise sigma so they see
    the same noise draw. Haze must use the "paper" mode; the airlight term
    has no additive rewrite against plain noise.
    """
    if not (noise_spec.sigma == rain_spec.sigma == haze_spec.sigma):
        raise ConfigurationError(
            f"shared-noise check needs equal sigmas, got "
            f"{noise_spec.sigma}/{rain_spec.sigma}/{haze_spec.sigma}"
        )
    if haze_spec.mode != "paper":
        raise ConfigurationError("decomposition identities hold for haze mode 'paper' only")

    y_noise, _ = apply_noise(x, noise_spec.sigma, seed)
    y_rain, rain = apply_rain(x, rain_spec, seed)
    y_haze, trans = apply_haze(x, haze_spec, seed)
    resid = residual_haze(x, trans)

    report = _check_identities(y_noise, y_rain, y_haze, rain, resid, tol)
    if not report.passed:
        worst = max(
            ("rain additivity", report.rain_additivity),
            ("haze residual", report.haze_residual),
            ("rain-to-haze", report.rain_to_haze),
            key=lambda kv: kv[1],
        )
        raise VerificationError(
            f"degradation identity '{worst[0]}' violated: max deviation {worst[1]:.3e} > {tol:.0e}"
        )
    return report


def _check_identities(y_noise, y_rain, y_haze, rain, resid, tol) -> DecompositionReport:
    dev_rain = float(np.abs(y_rain - (y_noise + rain)).max())
    dev_haze = float(np.abs(y_haze - (y_noise + resid)).max())
    support = np.abs(rain) > _SUPPORT_EPS
    patch = np.where(support, resid - rain, resid)
    dev_cross = float(np.abs(y_haze - (y_rain + patch)).max())
    frac_rain = float(np.count_nonzero(np.abs(rain) > _SUPPORT_EPS)) / rain.size
    frac_resid = float(np.count_nonzero(np.abs(resid) > _SUPPORT_EPS)) / resid.size
    sparsity_ok = frac_rain < frac_resid or (frac_rain == 0.0 and frac_resid == 0.0)
    passed = dev_rain <= tol and dev_haze <= tol and dev_cross <= tol and sparsity_ok
    return DecompositionReport(
        rain_additivity=dev_rain,
        haze_residual=dev_haze,
        rain_to_haze=dev_cross,
        rain_support_fraction=frac_rain,
        residual_support_fraction=frac_resid,
        passed=passed,
    )


# ------------------------------------------------------------- task registry


_NOISE_SIGMAS = {"noise15": 15.0 / 255.0, "noise25": 25.0 / 255.0, "noise50": 50.0 / 255.0}


def task_label(name: str) -> int:
    try:
        return TASK_NAMES.index(name)
    except ValueError:
        raise ConfigurationError(f"unknown task {name!r}; valid tasks: {', '.join(TASK_NAMES)}") from None


def default_spec(name: str, height: int, width: int, **overrides) -> DegradationSpec:
    """Canonical spec for a registry task, streak density scaled to the image area."""
    if name in _NOISE_SIGMAS:
        _reject_unknown(overrides, NoiseSpec, name)
        return NoiseSpec(sigma=overrides.get("sigma", _NOISE_SIGMAS[name]))
    if name == "rain":
        _reject_unknown(overrides, RainSpec, name)
        area_scale = (height * width) / 4096.0  # defaults are tuned on 64x64
        base = dict(streaks=max(1, round(20 * area_scale)))
        base.update(overrides)
        return RainSpec(**base)
    if name == "haze":
        _reject_unknown(overrides, HazeSpec, name)
        # the canonical haze task keeps the additive-noise term: pure
        # multiplicative haze is a smooth gain, which even narrow widths
        # invert well; noise under a 1/A_haze amplification is what makes
        # dehazing the capacity-hungry task
        base = dict(sigma=25.0 / 255.0)
        base.update(overrides)
        return HazeSpec(**base)
    raise ConfigurationError(f"unknown task {name!r}; valid tasks: {', '.join(TASK_NAMES)}")


def _reject_unknown(overrides: dict, spec_cls, name: str) -> None:
    allowed = {f.name for f in dataclasses.fields(spec_cls)}
    bad = sorted(set(overrides) - allowed)
    if bad:
        raise ConfigurationError(f"task {name!r} does not accept {bad}; knobs: {sorted(allowed)}")


def spec_to_dict(spec: DegradationSpec) -> dict:
    d = asdict(spec)
    d["variant"] = type(spec).__name__.removesuffix("Spec").lower()
    return d


def spec_from_dict(d: dict) -> DegradationSpec:
    kinds = {"noise": NoiseSpec, "rain": RainSpec, "haze": HazeSpec}
    d = dict(d)
    variant = d.pop("variant")
    if variant not in kinds:
        raise ConfigurationError(f"unknown degradation variant {variant!r}")
    return kinds[variant](**d)


def make_sample(task: str, spec: DegradationSpec, seed: int, height: int, width: int) -> DegradedSample:
    """Generate one sample: clean image, degraded observation, and all layers."""
    clean = synth_clean(seed, height, width)
    components: dict[str, np.ndarray] = {}
    if isinstance(spec, NoiseSpec):
        raw, noise = apply_noise(clean, spec.sigma, seed)
        components["noise"] = noise
    elif isinstance(spec, RainSpec):
        raw, rain = apply_rain(clean, spec, seed)
        components["noise"] = _noise_field(clean.shape, spec.sigma, seed)
        components["rain_layer"] = rain
    elif isinstance(spec, HazeSpec):
        raw, trans = apply_haze(clean, spec, seed)
        components["noise"] = _noise_field(clean.shape, spec.sigma, seed)
        components["haze_map"] = trans
        components["haze_residual"] = residual_haze(clean, trans)
    else:
        raise ConfigurationError(f"unsupported spec type {type(spec).__name__}")
    return DegradedSample(
        clean=clean,
        degraded=np.clip(raw, 0.0, 1.0),
        degraded_raw=raw,
        components=components,
        task_label=task_label(task),
        task=task,
        seed=int(seed),
    )
