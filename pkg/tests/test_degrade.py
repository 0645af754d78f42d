"""Synthetic degradations: determinism, value ranges, and the exact
algebra tying noise, rain, and haze together before clamping."""

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

import widthnet.degrade as dg
from widthnet.degrade import (
    HazeSpec,
    NoiseSpec,
    RainSpec,
    apply_haze,
    apply_noise,
    apply_rain,
    default_spec,
    make_sample,
    residual_haze,
    synth_clean,
    task_label,
    verify_decomposition,
)
from widthnet.errors import ConfigurationError, VerificationError

seeds = st.integers(0, 2**31 - 1)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_synth_clean_bounds_and_shape(seed):
    img = synth_clean(seed, 24, 40)
    assert img.shape == (3, 24, 40)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img.std() > 0.01  # never a flat field


def test_synth_clean_deterministic():
    a = synth_clean(123, 32, 32)
    b = synth_clean(123, 32, 32)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, synth_clean(124, 32, 32))


def test_apply_noise_is_exactly_additive():
    x = synth_clean(0, 16, 16)
    y, n = apply_noise(x, 25.0 / 255.0, seed=9)
    assert np.array_equal(y, x + n)
    y2, n2 = apply_noise(x, 25.0 / 255.0, seed=9)
    assert np.array_equal(n, n2)


def test_apply_noise_sigma_zero_is_identity():
    x = synth_clean(1, 8, 8)
    y, n = apply_noise(x, 0.0, seed=5)
    assert np.all(n == 0.0)
    assert np.array_equal(y, x)


def test_noise_std_matches_sigma():
    x = np.zeros((3, 128, 128))
    _, n = apply_noise(x, 0.2, seed=77)
    assert abs(n.std() - 0.2) < 0.01


def test_same_seed_shares_one_noise_draw_across_variants():
    """The additive noise in y_noise, y_rain, y_haze is one field, not three."""
    x = synth_clean(4, 32, 32)
    sigma = 25.0 / 255.0
    _, n = apply_noise(x, sigma, seed=42)
    y_rain, rain = apply_rain(x, default_spec("rain", 32, 32, sigma=sigma), seed=42)
    y_haze, trans = apply_haze(x, HazeSpec(sigma=sigma), seed=42)
    assert np.allclose(y_rain - x - rain, n, atol=1e-12, rtol=0)
    assert np.allclose(y_haze - x * trans, n, atol=1e-12, rtol=0)


def test_rain_streaks_nonnegative_and_sparse():
    x = synth_clean(6, 64, 64)
    spec = default_spec("rain", 64, 64)
    _, rain = apply_rain(x, spec, seed=13)
    assert rain.min() >= 0.0
    frac = np.count_nonzero(rain) / rain.size
    assert 0.0 < frac < 0.3


@settings(max_examples=15, deadline=None)
@given(seeds, st.sampled_from([32, 48, 64]))
def test_rain_sparsity_holds_across_sizes(seed, size):
    spec = default_spec("rain", size, size)
    _, rain = apply_rain(synth_clean(seed, size, size), spec, seed=seed)
    assert np.count_nonzero(rain) / rain.size < 0.3


def test_rain_rejects_dense_fields():
    spec = RainSpec(streaks=4000, length=40, thickness=3)
    with pytest.raises(ConfigurationError):
        apply_rain(synth_clean(2, 32, 32), spec, seed=1)


def test_haze_transmission_range_and_modes():
    x = synth_clean(8, 32, 32)
    y, trans = apply_haze(x, HazeSpec(beta=1.2, sigma=0.0), seed=3)
    assert trans.min() > 0.0 and trans.max() <= 1.0
    assert np.array_equal(y, x * trans)
    spec_s = HazeSpec(beta=1.2, airlight=0.8, mode="scattering", sigma=0.0)
    y_s, trans_s = apply_haze(x, spec_s, seed=3)
    assert np.array_equal(trans_s, trans)  # same depth draw
    assert np.array_equal(y_s, x * trans + 0.8 * (1.0 - trans))


def test_residual_haze_identity():
    x = synth_clean(9, 16, 16)
    _, trans = apply_haze(x, HazeSpec(sigma=0.0), seed=4)
    resid = residual_haze(x, trans)
    assert np.allclose(x + resid, x * trans, atol=1e-15, rtol=0)
    # haze residual touches essentially every pixel, unlike rain
    assert np.count_nonzero(resid) / resid.size > 0.9


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_decomposition_identities(seed):
    x = synth_clean(seed, 32, 32)
    sigma = 25.0 / 255.0
    report = verify_decomposition(x, NoiseSpec(sigma),
                                  default_spec("rain", 32, 32, sigma=sigma),
                                  HazeSpec(sigma=sigma), seed=seed)
    assert report.passed
    assert max(report.rain_additivity, report.haze_residual, report.rain_to_haze) < 1e-12
    assert report.rain_support_fraction < report.residual_support_fraction


def test_decomposition_requires_shared_sigma():
    x = synth_clean(0, 16, 16)
    with pytest.raises(ConfigurationError):
        verify_decomposition(x, NoiseSpec(0.1), RainSpec(sigma=0.2),
                             HazeSpec(sigma=0.1), seed=0)


def test_decomposition_requires_multiplicative_only_haze():
    x = synth_clean(0, 16, 16)
    with pytest.raises(ConfigurationError):
        verify_decomposition(x, NoiseSpec(0.1), RainSpec(sigma=0.1),
                             HazeSpec(sigma=0.1, mode="scattering"), seed=0)


def test_task_labels_frozen():
    assert [task_label(t) for t in dg.TASK_NAMES] == [0, 1, 2, 3, 4]
    assert dg.TASK_NAMES == ("noise15", "noise25", "noise50", "rain", "haze")
    with pytest.raises(ConfigurationError):
        task_label("blur")


def test_default_specs():
    assert default_spec("noise15", 32, 32).sigma == pytest.approx(15.0 / 255.0)
    assert default_spec("noise50", 32, 32).sigma == pytest.approx(50.0 / 255.0)
    assert isinstance(default_spec("rain", 32, 32), RainSpec)
    assert isinstance(default_spec("haze", 32, 32), HazeSpec)
    with pytest.raises(ConfigurationError):
        default_spec("rain", 32, 32, airlight=0.5)  # not a rain knob


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        NoiseSpec(sigma=-0.1)
    with pytest.raises(ConfigurationError):
        RainSpec(streaks=-1)
    with pytest.raises(ConfigurationError):
        RainSpec(intensity=0.0)
    with pytest.raises(ConfigurationError):
        HazeSpec(beta=-1.0)
    with pytest.raises(ConfigurationError):
        HazeSpec(airlight=1.5)
    with pytest.raises(ConfigurationError):
        HazeSpec(mode="volumetric")


def test_spec_dict_round_trip():
    for name in dg.TASK_NAMES:
        spec = default_spec(name, 32, 32)
        again = dg.spec_from_dict(dg.spec_to_dict(spec))
        assert again == spec


def test_make_sample_fields():
    spec = default_spec("haze", 16, 16)
    s = make_sample("haze", spec, seed=21, height=16, width=16)
    assert s.task == "haze"
    assert s.task_label == 4
    assert s.clean.shape == s.degraded.shape == (3, 16, 16)
    assert np.array_equal(s.degraded, np.clip(s.degraded_raw, 0.0, 1.0))
    assert s.degraded.min() >= 0.0 and s.degraded.max() <= 1.0
    # same seed, same bytes
    s2 = make_sample("haze", spec, seed=21, height=16, width=16)
    assert np.array_equal(s.degraded, s2.degraded)
