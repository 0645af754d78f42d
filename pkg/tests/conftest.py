import numpy as np

from widthnet.config import RunConfig
from widthnet.wab import WabModel, WidthCandidates

RATIOS5 = (0.6, 0.7, 0.8, 0.9, 1.0)


def tiny_model(seed: int = 0, omega: int = 16, c_de: int = 4, trunk_depth: int = 2,
               dtype=np.float64) -> WabModel:
    """Smallest model with five distinct widths after rounding (omega >= 16)."""
    cand = WidthCandidates(RATIOS5, omega)
    rng = np.random.default_rng(seed)
    return WabModel(cand, c_de=c_de, trunk_depth=trunk_depth, kernel=3,
                    num_classes=5, rng=rng, dtype=dtype)


def tiny_config(**overrides) -> RunConfig:
    """Config small enough that training finishes in seconds."""
    base = dict(
        profile="desk", seed=7, omega=16, width_ratios=RATIOS5, trunk_depth=1,
        c_de=4, kernel=3, batch_size=4, epochs_wab=2, epochs_ws=2, lr_wab=1e-3,
        lr_ws=0.01, sparsity_target=0.8, tasks=("noise25", "rain"), image_size=12,
        samples_per_task=4, eval_samples_per_task=2,
    )
    base.update(overrides)
    return RunConfig(**base).validate()
