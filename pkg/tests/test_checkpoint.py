"""Checkpoint container: byte-exact round trips, canonical serialization,
and a rejection test per failure mode."""

import hashlib

import numpy as np
import pytest

from conftest import tiny_config, tiny_model
from widthnet.checkpoint import (
    MAGIC,
    check_checkpoint_pair,
    check_config_compat,
    checkpoint_load,
    checkpoint_save,
    deserialize_state,
    serialize_state,
)
from widthnet.errors import (
    BadMagicError,
    ChecksumError,
    CompatibilityError,
    ManifestError,
)
from widthnet.selector import SelectorModel
from widthnet.wab import WidthCandidates


def small_state():
    rng = np.random.default_rng(0)
    return {
        "a.weight": rng.standard_normal((3, 2, 3, 3)).astype(np.float32),
        "a.bias": rng.standard_normal(3).astype(np.float32),
        "z.weight": rng.standard_normal((4, 5)).astype(np.float32),
    }


def test_round_trip_bit_exact():
    state = small_state()
    blob = serialize_state(state, {"kind": "test"})
    meta, loaded = deserialize_state(blob)
    assert meta["kind"] == "test"
    assert set(loaded) == set(state)
    for name in state:
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], state[name])


def test_serialization_is_canonical():
    state = small_state()
    a = serialize_state(state, {"kind": "test", "x": 1})
    b = serialize_state(dict(reversed(state.items())), {"x": 1, "kind": "test"})
    assert a == b  # key order never leaks into the bytes


def test_magic_prefix():
    blob = serialize_state(small_state(), {"kind": "test"})
    assert blob[:6] == MAGIC == b"UWADN1"


def test_bad_magic_rejected():
    blob = bytearray(serialize_state(small_state(), {"kind": "test"}))
    blob[0] ^= 0xFF
    with pytest.raises(BadMagicError):
        deserialize_state(bytes(blob))


def test_flipped_payload_byte_fails_checksum():
    blob = bytearray(serialize_state(small_state(), {"kind": "test"}))
    blob[-1] ^= 0x01
    with pytest.raises(ChecksumError):
        deserialize_state(bytes(blob))


def test_flipped_header_byte_is_manifest_or_checksum_error():
    blob = bytearray(serialize_state(small_state(), {"kind": "test"}))
    blob[20] ^= 0x01  # somewhere inside the JSON header
    with pytest.raises((ManifestError, ChecksumError)):
        deserialize_state(bytes(blob))


def test_truncated_payload_rejected():
    blob = serialize_state(small_state(), {"kind": "test"})
    with pytest.raises(ManifestError):
        deserialize_state(blob[:-8])


def test_trailing_garbage_rejected():
    blob = serialize_state(small_state(), {"kind": "test"})
    with pytest.raises(ManifestError):
        deserialize_state(blob + b"\x00" * 4)


def test_header_length_overrun_rejected():
    blob = bytearray(serialize_state(small_state(), {"kind": "test"}))
    blob[6:14] = (2**40).to_bytes(8, "little")
    with pytest.raises(ManifestError):
        deserialize_state(bytes(blob))


def test_non_f32_manifest_dtype_rejected():
    state = {"w": np.zeros(3, dtype=np.float64)}
    with pytest.raises(ManifestError):
        serialize_state(state, {"kind": "test"})


def test_model_checkpoint_round_trip_every_tensor():
    cfg = tiny_config(trunk_depth=2)
    model = tiny_model(seed=1, dtype=np.float32)
    blob = checkpoint_save(model, cfg, extra={"stage": "wab"})
    loaded, loaded_cfg, meta = checkpoint_load(blob)
    assert meta["kind"] == "wab"
    assert meta["stage"] == "wab"
    assert loaded_cfg == cfg
    before = model.state_dict()
    after = loaded.state_dict()
    assert set(before) == set(after)
    for name in before:
        assert np.array_equal(before[name], after[name]), name
    # and the next save is byte-identical
    assert checkpoint_save(loaded, loaded_cfg, extra={"stage": "wab"}) == blob


def test_selector_checkpoint_round_trip():
    cfg = tiny_config()
    sel = SelectorModel(cfg.candidates(), c_de=cfg.c_de, kernel=cfg.kernel,
                        num_classes=cfg.num_classes(), rng=np.random.default_rng(2))
    blob = checkpoint_save(sel, cfg)
    loaded, _, meta = checkpoint_load(blob, expect_kind="selector")
    assert meta["kind"] == "selector"
    for name, arr in sel.state_dict().items():
        assert np.array_equal(arr, loaded.state_dict()[name]), name


def test_expect_kind_mismatch_rejected():
    cfg = tiny_config(trunk_depth=2)
    blob = checkpoint_save(tiny_model(seed=3, dtype=np.float32), cfg)
    with pytest.raises(CompatibilityError):
        checkpoint_load(blob, expect_kind="selector")


def test_save_refuses_model_config_disagreement():
    from widthnet.errors import ConfigurationError

    cfg = tiny_config(trunk_depth=1)
    model = tiny_model(seed=3, trunk_depth=2, dtype=np.float32)
    with pytest.raises(ConfigurationError):
        checkpoint_save(model, cfg)


def test_compat_error_names_the_field():
    a = tiny_config()
    b = tiny_config(omega=32)
    with pytest.raises(CompatibilityError) as err:
        check_config_compat(a, b, "checkpoint")
    assert "omega" in str(err.value)
    with pytest.raises(CompatibilityError):
        check_checkpoint_pair(a, tiny_config(trunk_depth=3))
    check_checkpoint_pair(a, tiny_config(epochs_ws=9))  # non-structural: fine


def test_same_seed_checkpoints_have_identical_hashes(tmp_path):
    """Training determinism surfaces as equal checkpoint digests."""
    from widthnet.dataset import load_pack, synth_pack
    from widthnet.wab import train_wab

    cfg = tiny_config(epochs_wab=2, samples_per_task=4, batch_size=2)
    digests = []
    for run in ("one", "two"):
        pack = tmp_path / run
        synth_pack(pack, cfg.tasks, cfg.samples_per_task, cfg.image_size, cfg.seed)
        model, _ = train_wab(cfg, load_pack(pack))
        digests.append(hashlib.sha256(checkpoint_save(model, cfg)).hexdigest())
    assert digests[0] == digests[1]
