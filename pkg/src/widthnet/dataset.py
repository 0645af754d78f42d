"""Dataset packs: a JSON manifest plus one raw float32 blob.

Each sample stores its clean image followed by the clamped degraded
observation, little-endian float32 in C order. The manifest records the
exact degradation spec and per-sample seed, so any sample can be
regenerated bit for bit without the blob. 8-bit export writes binary PPM
(P6, maxval 255).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .degrade import (CHANNELS, DegradedSample, default_spec, make_sample,
                      spec_from_dict, spec_to_dict, task_label)
from .errors import ConfigurationError, ManifestError

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "images.f32"
_DTYPE = np.dtype("<f4")


@dataclass
class TrainSet:
    """In-memory view of a pack: degraded inputs, clean targets, labels."""

    clean: np.ndarray     # [N,3,H,W] float32
    degraded: np.ndarray  # [N,3,H,W] float32
    labels: np.ndarray    # [N] int64
    tasks: tuple[str, ...]
    manifest: dict

    @property
    def count(self) -> int:
        return self.clean.shape[0]

    @property
    def image_size(self) -> tuple[int, int]:
        return self.clean.shape[2], self.clean.shape[3]

    def task_indices(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.labels == task_label(name))


def _sample_seed(seed: int, label: int, index: int) -> int:
    # one scalar per sample so the manifest can record it directly
    return int(np.random.SeedSequence([seed, label, index]).generate_state(1)[0])


def synth_pack(out_dir: str, tasks: tuple[str, ...], count_per_task: int,
               image_size: int, seed: int, spec_overrides: dict | None = None) -> dict:
    """Generate a pack deterministically from (tasks, count, size, seed)."""
    if count_per_task < 1:
        raise ConfigurationError(f"count per task must be >= 1, got {count_per_task}")
    if not tasks:
        raise ConfigurationError("at least one task is required")
    os.makedirs(out_dir, exist_ok=True)
    height = width = int(image_size)
    samples_meta = []
    frame = CHANNELS * height * width * _DTYPE.itemsize
    with open(os.path.join(out_dir, BLOB_NAME), "wb") as blob:
        offset = 0
        for task in tasks:
            label = task_label(task)
            overrides = (spec_overrides or {}).get(task, {})
            spec = default_spec(task, height, width, **overrides)
            for i in range(count_per_task):
                s = make_sample(task, spec, _sample_seed(seed, label, i), height, width)
                blob.write(np.ascontiguousarray(s.clean, dtype=_DTYPE).tobytes())
                blob.write(np.ascontiguousarray(s.degraded, dtype=_DTYPE).tobytes())
                samples_meta.append({
                    "index": len(samples_meta),
                    "task": task,
                    "label": label,
                    "seed": s.seed,
                    "spec": spec_to_dict(spec),
                    "clean_offset": offset,
                    "degraded_offset": offset + frame,
                })
                offset += 2 * frame
    manifest = {
        "format": "widthnet-pack",
        "version": 1,
        "count": len(samples_meta),
        "height": height,
        "width": width,
        "channels": CHANNELS,
        "dtype": "float32",
        "byteorder": "little",
        "seed": int(seed),
        "tasks": list(tasks),
        "blob": BLOB_NAME,
        "samples": samples_meta,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def load_pack(pack_dir: str) -> TrainSet:
    manifest_path = os.path.join(pack_dir, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise ManifestError(f"no {MANIFEST_NAME} in {pack_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "widthnet-pack":
        raise ManifestError(f"{manifest_path} is not a dataset pack manifest")
    h, w, c, n = manifest["height"], manifest["width"], manifest["channels"], manifest["count"]
    blob_path = os.path.join(pack_dir, manifest["blob"])
    raw = np.fromfile(blob_path, dtype=_DTYPE)
    frame = c * h * w
    if raw.size != 2 * frame * n:
        raise ManifestError(
            f"blob holds {raw.size} values, manifest expects {2 * frame * n}"
        )
    clean = np.empty((n, c, h, w), dtype=np.float32)
    degraded = np.empty((n, c, h, w), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for s in manifest["samples"]:
        i = s["index"]
        co, do = s["clean_offset"] // _DTYPE.itemsize, s["degraded_offset"] // _DTYPE.itemsize
        clean[i] = raw[co:co + frame].reshape(c, h, w)
        degraded[i] = raw[do:do + frame].reshape(c, h, w)
        labels[i] = s["label"]
    return TrainSet(clean=clean, degraded=degraded, labels=labels,
                    tasks=tuple(manifest["tasks"]), manifest=manifest)


def regenerate_sample(manifest: dict, index: int) -> DegradedSample:
    """Re-derive one sample purely from its recorded (spec, seed)."""
    entry = manifest["samples"][index]
    spec = spec_from_dict(entry["spec"])
    return make_sample(entry["task"], spec, entry["seed"], manifest["height"], manifest["width"])


# ------------------------------------------------------------------ ppm


def to_ppm_bytes(img: np.ndarray) -> bytes:
    """[3,H,W] floats in [0,1] -> binary PPM (P6, maxval 255)."""
    if img.ndim != 3 or img.shape[0] != 3:
        raise ConfigurationError(f"PPM export wants [3,H,W], got {img.shape}")
    u8 = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = u8.shape[1], u8.shape[2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + u8.transpose(1, 2, 0).tobytes()


def export_ppm(pack: TrainSet, out_dir: str, which: str = "both") -> list[str]:
    if which not in ("clean", "degraded", "both"):
        raise ConfigurationError(f"which must be clean|degraded|both, got {which!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for s in pack.manifest["samples"]:
        i = s["index"]
        variants = []
        if which in ("clean", "both"):
            variants.append(("clean", pack.clean[i]))
        if which in ("degraded", "both"):
            variants.append(("degraded", pack.degraded[i]))
        for tag, img in variants:
            path = os.path.join(out_dir, f"{i:05d}_{s['task']}_{tag}.ppm")
            with open(path, "wb") as fh:
                fh.write(to_ppm_bytes(img))
            written.append(path)
    return written
