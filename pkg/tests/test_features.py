import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import marfeat.features as features
from marfeat.config import ConfigError, PipelineConfig
from marfeat.features import (
    LOG_FLOOR,
    FrameSpec,
    assemble_context,
    extract,
    extract_bf_mb,
    extract_fbank,
    extract_mc_mar,
    gain_normalize,
    integrate_envelope,
    log_compress,
    mel_filterbank,
)
from marfeat.mar_core import EnvelopeMatrix
from marfeat.wave_io import MultiChannelWave
from signals import speechlike, synthetic_array

# small configuration for property tests: 8 kHz, 0.5 s segments, order 24
SMALL = PipelineConfig(bands=12, order=24, high_hz=3800.0, segment_seconds=0.5)


def small_wave(channels=3, seconds=0.5, seed=0):
    return synthetic_array(seconds, channels, seed=seed, sample_rate=8000)


def test_gain_normalize_constant():
    env = EnvelopeMatrix(0, np.full((2000, 2), 5.0))
    np.testing.assert_allclose(gain_normalize(env).values, 1.0)


def test_gain_normalize_random_mean_one():
    env = EnvelopeMatrix(0, np.random.default_rng(0).uniform(0.01, 50, size=(2000, 5)))
    np.testing.assert_allclose(gain_normalize(env).values.mean(axis=0), 1.0, atol=1e-10)


def test_gain_normalize_passes_zero_trace():
    vals = np.ones((10, 2))
    vals[:, 1] = 0.0
    out = gain_normalize(EnvelopeMatrix(0, vals)).values
    np.testing.assert_array_equal(out[:, 1], 0.0)
    np.testing.assert_allclose(out[:, 0], 1.0)


def test_integrate_constant_is_one():
    frames = integrate_envelope(EnvelopeMatrix(0, np.ones((2000, 3))), FrameSpec())
    assert frames.shape == (200, 3)
    np.testing.assert_allclose(frames, 1.0, rtol=1e-12)
    np.testing.assert_allclose(log_compress(frames), 0.0, atol=1e-12)


def test_integrate_two_second_segment_has_200_frames():
    assert integrate_envelope(EnvelopeMatrix(0, np.random.rand(2000, 1))).shape == (200, 1)


def test_integrate_zero_hits_floor():
    frames = integrate_envelope(EnvelopeMatrix(0, np.zeros((2000, 2))))
    np.testing.assert_array_equal(log_compress(frames), np.log(LOG_FLOOR))


def test_integrate_frame_formula():
    vals = np.arange(2000, dtype=float)[:, None]
    frames = integrate_envelope(EnvelopeMatrix(0, vals))
    ham = np.hamming(25)
    assert frames[3, 0] == pytest.approx(np.dot(ham, vals[30:55, 0]) / ham.sum())
    # last frame reads past the end and sees the replicated final value
    tail = np.concatenate([vals[1990:, 0], np.full(15, 1999.0)])
    assert frames[199, 0] == pytest.approx(np.dot(ham, tail) / ham.sum())


def test_integrate_rejects_coarse_envelope():
    with pytest.raises(ValueError):
        integrate_envelope(EnvelopeMatrix(0, np.ones((100, 1))))


def test_frame_spec_validation():
    with pytest.raises(ValueError):
        FrameSpec(10.0, 25.0)


def test_mc_mar_shape(array_2s):
    spec = extract_mc_mar(array_2s)
    assert spec.shape == (5, 200, 40)
    assert spec.frames_per_segment == 200 and spec.valid_frames == (200,)
    assert np.all(np.isfinite(spec.values))


def test_mc_mar_deterministic():
    w = small_wave()
    a, b = extract_mc_mar(w, SMALL), extract_mc_mar(w, SMALL)
    assert a.values.tobytes() == b.values.tobytes()


def test_mc_mar_threads_match_sequential():
    w = small_wave()
    a, b = extract_mc_mar(w, SMALL, threads=1), extract_mc_mar(w, SMALL, threads=4)
    assert a.values.tobytes() == b.values.tobytes()


def test_mc_mar_frames_per_segment():
    w = small_wave(seconds=1.2)
    spec = extract_mc_mar(w, SMALL)
    # 3 segments of 0.5 s, the last padded (0.2 s valid)
    assert spec.shape == (3, 150, 12)
    assert spec.valid_frames == (50, 50, 20)


def test_mc_mar_permutation():
    w = small_wave(channels=3, seed=4)
    perm = [2, 0, 1]
    a = extract_mc_mar(w, SMALL).values
    b = extract_mc_mar(w.select(perm), SMALL).values
    np.testing.assert_allclose(b, a[perm], atol=1e-8)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31), st.floats(-60, 60))
def test_mc_mar_finite_for_any_input(seed, log_scale):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 4000)) * np.exp(log_scale)
    x[:, rng.integers(0, 4000) :] = 0.0  # trailing silence
    spec = extract_mc_mar(MultiChannelWave(x, 8000), SMALL)
    assert np.all(np.isfinite(spec.values))


def test_mc_mar_silence_at_floor():
    spec = extract_mc_mar(MultiChannelWave(np.zeros((2, 4000)), 8000), SMALL)
    np.testing.assert_array_equal(spec.values, np.log(LOG_FLOOR))


def test_mc_mar_order_exceeding_segment_is_config_error():
    with pytest.raises(ConfigError):
        extract_mc_mar(small_wave(), SMALL.replace(order=5000))


def test_bf_mb_grouping(monkeypatch):
    dims = []
    real = features.fit_mar

    def spy(series, order):
        dims.append(series.dim)
        return real(series, order)

    monkeypatch.setattr(features, "fit_mar", spy)
    spec = extract_bf_mb(small_wave(1), SMALL.replace(bands=40, high_hz=3800.0, group_size=4))
    assert dims == [4] * 10
    assert spec.shape == (1, 50, 40)

    dims.clear()
    extract_bf_mb(small_wave(1), SMALL.replace(bands=10, group_size=4))
    assert dims == [4, 4, 2]


def test_bf_mb_group_one_is_scalar_fdlp():
    w = small_wave(1, seed=7)
    a = extract_bf_mb(w, SMALL.replace(group_size=1)).values
    b = extract_mc_mar(w, SMALL).values
    np.testing.assert_array_equal(a, b)


def test_bf_mb_default_shape(array_2s):
    spec = extract_bf_mb(array_2s)
    assert spec.shape == (1, 200, 40)
    assert np.all(np.isfinite(spec.values))


def test_mel_filterbank_geometry():
    fb, centers = mel_filterbank(40, 200.0, 6500.0, 512, 16000)
    assert fb.shape == (40, 257)
    assert np.all(np.diff(centers) > 0)
    assert centers[0] > 200.0 and centers[-1] < 6500.0
    freqs = np.arange(257) * 16000 / 512
    assert not np.any(fb[:, freqs < 200.0]) and not np.any(fb[:, freqs > 6500.0])
    assert np.all(fb <= 1.0) and np.all(fb.max(axis=1) > 0.5)


def test_fbank_defaults_and_frame_count():
    spec = extract_fbank(MultiChannelWave(speechlike(32000, 0)[None], 16000))
    assert spec.shape == (1, 200, 40)


def test_fbank_silence_is_floor():
    spec = extract_fbank(MultiChannelWave(np.zeros((1, 16000)), 16000))
    np.testing.assert_array_equal(spec.values, np.log(LOG_FLOOR))


def test_fbank_tone_peaks_in_nearest_band():
    t = np.arange(32000) / 16000
    spec = extract_fbank(MultiChannelWave(0.5 * np.sin(2 * np.pi * 1000 * t)[None], 16000))
    _, centers = mel_filterbank(40, 200.0, 6500.0, 512, 16000)
    expected = int(np.argmin(np.abs(centers - 1000.0)))
    peaks = np.argmax(spec.values[0, 5:-5], axis=1)
    assert np.all(peaks == expected)


def test_fbank_rejects_multichannel():
    with pytest.raises(ValueError):
        extract_fbank(small_wave(2))


def test_extract_dispatch_fbank_beamforms():
    spec = extract(small_wave(3), SMALL.replace(mode="fbank"))
    assert spec.shape[0] == 1


def test_context_constant():
    windows = assemble_context(np.ones((2, 30, 4)), 21)
    assert windows.shape == (30, 2, 21, 4)
    np.testing.assert_array_equal(windows, 1.0)


def test_context_shape_contract():
    windows = assemble_context(np.zeros((5, 200, 40)), 21)
    assert windows.shape == (200, 5, 21, 40)


def test_context_edge_replication():
    spec = np.random.default_rng(0).standard_normal((3, 50, 6))
    windows = assemble_context(spec, 21)
    for o in range(11):
        np.testing.assert_array_equal(windows[0, :, o], spec[:, 0])
    np.testing.assert_array_equal(windows[0, :, 11], spec[:, 1])
    np.testing.assert_array_equal(windows[49, :, 20], spec[:, 49])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10), st.integers(0, 2**31))
def test_context_center_recovers_spectrogram(frames, half, seed):
    context = 2 * half + 1
    spec = np.random.default_rng(seed).standard_normal((2, frames, 3))
    if context > 2 * frames - 1:
        with pytest.raises(ValueError):
            assemble_context(spec, context)
        return
    windows = assemble_context(spec, context)
    np.testing.assert_array_equal(windows[:, :, half].transpose(1, 0, 2), spec)
    for o in range(-half, half + 1):
        idx = np.clip(np.arange(frames) + o, 0, frames - 1)
        np.testing.assert_array_equal(windows[:, :, half + o].transpose(1, 0, 2), spec[:, idx])


def test_context_rejects_even():
    with pytest.raises(ValueError):
        assemble_context(np.zeros((1, 30, 4)), 20)
