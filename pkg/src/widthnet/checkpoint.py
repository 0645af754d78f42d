"""Binary checkpoint format.

Layout:  magic "UWADN1" (6 bytes)
         header length (8 bytes, little-endian unsigned)
         header (UTF-8 JSON: kind, config snapshot, tensor manifest with
                 name/shape/dtype/byte offsets, payload sha256)
         payload (concatenated little-endian float32 blobs, C order)

The header is serialized canonically (sorted keys, no whitespace) and the
manifest preserves tensor order, so save(load(b)) == b byte for byte.
Loading verifies magic, manifest consistency, and the payload checksum,
each with its own error type.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, fields

import numpy as np

from .config import RunConfig
from .errors import (BadMagicError, ChecksumError, CompatibilityError,
                     ConfigurationError, ManifestError)
from .selector import SelectorModel
from .wab import WabModel

MAGIC = b"UWADN1"
_LEN_FMT = "<Q"
_DTYPE = np.dtype("<f4")


def serialize_state(tensors: dict[str, np.ndarray], meta: dict) -> bytes:
    """Pack named arrays plus metadata into the binary format.

    Tensors are laid out sorted by name so the bytes are canonical for a
    given state, whatever order the caller assembled the dict in. Only
    float32 is admitted; a silent cast would break the bit-exact round trip.
    """
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        if arr.dtype != np.float32:
            raise ManifestError(f"checkpoint tensors must be float32, got {arr.dtype} for {name!r}")
        blob = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        manifest.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "float32",
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    header = dict(meta)
    header["tensors"] = manifest
    header["checksum"] = "sha256:" + hashlib.sha256(payload).hexdigest()
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack(_LEN_FMT, len(header_bytes)) + header_bytes + payload


def deserialize_state(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Unpack bytes into (meta, named arrays), verifying structure and checksum."""
    if len(data) < len(MAGIC) + struct.calcsize(_LEN_FMT) or data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"not a checkpoint: expected magic {MAGIC!r}")
    pos = len(MAGIC)
    (header_len,) = struct.unpack_from(_LEN_FMT, data, pos)
    pos += struct.calcsize(_LEN_FMT)
    if pos + header_len > len(data):
        raise ManifestError(f"header length {header_len} overruns the file")
    try:
        header = json.loads(data[pos:pos + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ManifestError(f"header is not valid JSON: {e}") from None
    payload = data[pos + header_len:]

    manifest = header.get("tensors")
    if not isinstance(manifest, list):
        raise ManifestError("header has no tensor manifest")

    # structural pass before hashing: a truncated or padded file is a
    # manifest problem, not a flipped bit
    entries = []
    expected_end = 0
    for entry in manifest:
        try:
            name, shape = entry["name"], tuple(entry["shape"])
            offset, nbytes, dtype = entry["offset"], entry["nbytes"], entry["dtype"]
        except (KeyError, TypeError):
            raise ManifestError(f"malformed manifest entry: {entry}") from None
        if dtype != "float32":
            raise ManifestError(f"tensor {name}: unsupported dtype {dtype}")
        if offset != expected_end:
            raise ManifestError(f"tensor {name}: offset {offset} is not contiguous")
        if offset + nbytes > len(payload):
            raise ManifestError(f"tensor {name}: extends past end of payload")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if count * _DTYPE.itemsize != nbytes:
            raise ManifestError(f"tensor {name}: shape {shape} does not match {nbytes} bytes")
        entries.append((name, shape, offset, count))
        expected_end = offset + nbytes
    if expected_end != len(payload):
        raise ManifestError(f"payload has {len(payload) - expected_end} unaccounted trailing bytes")

    checksum = header.get("checksum", "")
    if checksum != "sha256:" + hashlib.sha256(payload).hexdigest():
        raise ChecksumError("payload checksum mismatch; the file is corrupt")

    tensors: dict[str, np.ndarray] = {}
    for name, shape, offset, count in entries:
        tensors[name] = np.frombuffer(payload, dtype=_DTYPE, count=count,
                                      offset=offset).reshape(shape).copy()
    meta = {k: v for k, v in header.items() if k not in ("tensors", "checksum")}
    return meta, tensors


# --------------------------------------------------------------- model level


def _config_snapshot(config: RunConfig) -> dict:
    snap = asdict(config)
    snap["width_ratios"] = list(snap["width_ratios"])
    snap["tasks"] = list(snap["tasks"])
    return snap


_RESERVED_META = ("format", "version", "kind", "config", "tensors", "checksum")


def _check_model_matches_config(model: WabModel | SelectorModel, config: RunConfig) -> None:
    """A checkpoint whose tensors disagree with its own config snapshot
    would only blow up at load time; refuse to write one."""
    problems = []
    if model.candidates != config.candidates():
        problems.append("width candidates")
    if model.c_de != config.c_de:
        problems.append("c_de")
    if model.kernel != config.kernel:
        problems.append("kernel")
    if isinstance(model, WabModel) and model.trunk_depth != config.trunk_depth:
        problems.append("trunk_depth")
    if problems:
        raise ConfigurationError(
            f"model does not match the config being saved with it: {', '.join(problems)}"
        )


def checkpoint_save(model: WabModel | SelectorModel, config: RunConfig, extra: dict | None = None) -> bytes:
    kind = "wab" if isinstance(model, WabModel) else "selector"
    _check_model_matches_config(model, config.validate())
    meta = {"format": "widthnet-checkpoint", "version": 1, "kind": kind,
            "config": _config_snapshot(config)}
    for key, value in (extra or {}).items():
        if key in _RESERVED_META:
            raise ConfigurationError(f"extra metadata key {key!r} is reserved")
        meta[key] = value
    return serialize_state(model.state_dict(), meta)


def _config_from_meta(meta: dict) -> RunConfig:
    snap = dict(meta.get("config", {}))
    if not snap:
        raise ManifestError("checkpoint header has no config snapshot")
    snap["width_ratios"] = tuple(snap.get("width_ratios", ()))
    snap["tasks"] = tuple(snap.get("tasks", ()))
    valid = {f.name for f in fields(RunConfig)}
    unknown = set(snap) - valid
    if unknown:
        raise ManifestError(f"config snapshot has unknown fields: {sorted(unknown)}")
    return RunConfig(**snap).validate()


def checkpoint_load(data: bytes, expect_kind: str | None = None) -> tuple[WabModel | SelectorModel, RunConfig, dict]:
    """Rebuild a model from checkpoint bytes: (model, config, meta)."""
    meta, tensors = deserialize_state(data)
    kind = meta.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise CompatibilityError(f"expected a {expect_kind} checkpoint, got kind={kind!r}")
    config = _config_from_meta(meta)
    candidates = config.candidates()
    if kind == "wab":
        model: WabModel | SelectorModel = WabModel(
            candidates, config.c_de, config.trunk_depth, config.kernel,
            config.num_classes(), rng=None)
    elif kind == "selector":
        model = SelectorModel(candidates, config.c_de, config.kernel,
                              config.num_classes(), rng=None)
    else:
        raise ManifestError(f"unknown checkpoint kind {kind!r}")
    try:
        model.load_state(tensors)
    except ConfigurationError as e:
        raise ManifestError(str(e)) from None
    return model, config, meta


_STRUCTURAL_FIELDS = ("omega", "width_ratios", "trunk_depth", "c_de", "kernel")


def check_config_compat(loaded: RunConfig, wanted: RunConfig, context: str) -> None:
    """Structural fields of a checkpoint must match the run that uses it."""
    bad = [f"{name}: {getattr(loaded, name)} != {getattr(wanted, name)}"
           for name in _STRUCTURAL_FIELDS if getattr(loaded, name) != getattr(wanted, name)]
    if bad:
        raise CompatibilityError(f"{context} is structurally incompatible on " + "; ".join(bad))


def check_checkpoint_pair(wab_config: RunConfig, sel_config: RunConfig) -> None:
    check_config_compat(sel_config, wab_config, "selector checkpoint")
