"""Run configuration: profiles, validation, and the sectioned key=value file.

Two profiles exist. "desk" is sized so the whole pipeline (data synthesis,
both training stages, evaluation, sweeps) runs on a laptop CPU in minutes;
"full" mirrors the reference scale. Either way every field can be
overridden from a config file or CLI flags, and unknown keys are errors,
not warnings.
"""

from __future__ import annotations

import configparser
import difflib
from dataclasses import dataclass, fields, replace

from .degrade import NUM_TASK_TYPES, TASK_NAMES, task_label
from .errors import ConfigurationError
from .wab import WidthCandidates

PROFILES = ("desk", "full")


@dataclass(frozen=True)
class RunConfig:
    profile: str = "desk"
    seed: int | None = None

    # model
    omega: int = 32
    width_ratios: tuple[float, ...] = (0.6, 0.7, 0.8, 0.9, 1.0)
    trunk_depth: int = 4
    c_de: int = 8
    kernel: int = 3

    # training
    batch_size: int = 4
    epochs_wab: int = 300
    epochs_ws: int = 20
    lr_wab: float = 1e-3
    lr_ws: float = 0.01
    sparsity_target: float = 0.8

    # data
    tasks: tuple[str, ...] = TASK_NAMES
    image_size: int = 32
    samples_per_task: int = 100
    eval_samples_per_task: int = 24

    def validate(self) -> "RunConfig":
        if self.profile not in PROFILES:
            raise ConfigurationError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.seed is None:
            raise ConfigurationError("a seed is mandatory; set it in the config file or with --seed")
        self.candidates()  # raises on bad ratios/omega
        if len(self.width_ratios) != NUM_TASK_TYPES:
            raise ConfigurationError(
                f"the decision heads serve both tasks and widths, so the number of width "
                f"candidates ({len(self.width_ratios)}) must equal the number of task "
                f"types ({NUM_TASK_TYPES})"
            )
        if not self.tasks:
            raise ConfigurationError("at least one task is required")
        for t in self.tasks:
            task_label(t)  # raises on unknown names
        if len(set(self.tasks)) != len(self.tasks):
            raise ConfigurationError(f"duplicate tasks in {self.tasks}")
        for name, lo in (("trunk_depth", 1), ("c_de", 1), ("batch_size", 1),
                         ("epochs_wab", 1), ("epochs_ws", 1), ("image_size", 12),
                         ("samples_per_task", 1), ("eval_samples_per_task", 1)):
            if getattr(self, name) < lo:
                raise ConfigurationError(f"{name} must be >= {lo}, got {getattr(self, name)}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigurationError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.lr_wab <= 0 or self.lr_ws <= 0:
            raise ConfigurationError("learning rates must be positive")
        if not 0.0 < self.sparsity_target <= 1.0:
            raise ConfigurationError(f"sparsity target must lie in (0,1], got {self.sparsity_target}")
        return self

    def candidates(self) -> WidthCandidates:
        return WidthCandidates(ratios=tuple(self.width_ratios), omega=self.omega)

    def num_classes(self) -> int:
        """Size of the task-label space (the full registry, not the run's subset)."""
        return NUM_TASK_TYPES

    def task_labels(self) -> tuple[int, ...]:
        return tuple(task_label(t) for t in self.tasks)


_FULL_OVERRIDES = dict(
    profile="full", omega=64, c_de=16, image_size=64, batch_size=16,
    epochs_wab=2000, samples_per_task=400, eval_samples_per_task=48,
)


def from_profile(name: str) -> RunConfig:
    if name == "desk":
        return RunConfig()
    if name == "full":
        return replace(RunConfig(), **_FULL_OVERRIDES)
    raise ConfigurationError(f"profile must be one of {PROFILES}, got {name!r}")


# ------------------------------------------------------------- file format
#
# Sections group fields by the part of the system they steer:
#
#   [pipeline] profile seed batch_size
#   [model]    omega width_ratios trunk_depth c_de kernel
#   [train]    epochs_wab epochs_ws lr_wab lr_ws sparsity_target
#   [data]     tasks image_size samples_per_task eval_samples_per_task

_SECTIONS: dict[str, tuple[str, ...]] = {
    "pipeline": ("profile", "seed", "batch_size"),
    "model": ("omega", "width_ratios", "trunk_depth", "c_de", "kernel"),
    "train": ("epochs_wab", "epochs_ws", "lr_wab", "lr_ws", "sparsity_target"),
    "data": ("tasks", "image_size", "samples_per_task", "eval_samples_per_task"),
}

_FIELD_SECTION = {f: s for s, fs in _SECTIONS.items() for f in fs}


def _parse_value(name: str, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    raw = raw.strip()
    try:
        if name == "width_ratios":
            return tuple(float(v) for v in raw.split(","))
        if name == "tasks":
            return tuple(v.strip() for v in raw.split(",") if v.strip())
        if name in ("lr_wab", "lr_ws", "sparsity_target"):
            return float(raw)
        if name == "profile":
            return raw
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"cannot parse {name} = {raw!r} as {kind}") from None


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    """Parse a config file on top of a base (default: the file's profile)."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")

    unknown_sections = [s for s in parser.sections() if s not in _SECTIONS]
    if unknown_sections:
        raise ConfigurationError(f"unknown config sections: {unknown_sections}")
    overrides: dict[str, object] = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                if key in _FIELD_SECTION:
                    hint = f"; it belongs in section [{_FIELD_SECTION[key]}]"
                else:
                    close = difflib.get_close_matches(key, _FIELD_SECTION, n=1)
                    hint = f"; did you mean {close[0]!r}?" if close else ""
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]{hint}")
            overrides[key] = _parse_value(key, raw)

    if base is None:
        base = from_profile(str(overrides.get("profile", "desk")))
    return replace(base, **overrides)


def write_config(cfg: RunConfig, path: str) -> None:
    parser = configparser.ConfigParser()
    for section, names in _SECTIONS.items():
        parser[section] = {}
        for name in names:
            value = getattr(cfg, name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            parser[section][name] = str(value)
    with open(path, "w") as fh:
        parser.write(fh)
