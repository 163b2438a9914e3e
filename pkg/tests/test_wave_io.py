import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy.io import wavfile

from marfeat.wave_io import (
    HEADER_SIZE,
    ArchiveFormatError,
    MultiChannelWave,
    SegmentSpec,
    WaveFormatError,
    read_feature_archive,
    read_wave,
    segment_wave,
    write_feature_archive,
    write_wave,
)


def test_read_header_echo(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(-32768, 32767, size=(32000, 5), dtype=np.int16)
    wavfile.write(tmp_path / "a.wav", 16000, data)
    wave = read_wave(tmp_path / "a.wav")
    assert wave.num_channels == 5
    assert wave.num_samples == 32000
    assert wave.sample_rate == 16000
    assert np.all(np.abs(wave.samples) <= 1.0)


def test_full_scale_negative_is_minus_one(tmp_path):
    wavfile.write(tmp_path / "a.wav", 8000, np.array([-32768, 0, 16384, 32767], dtype=np.int16))
    wave = read_wave(tmp_path / "a.wav")
    np.testing.assert_array_equal(wave.samples[0], [-1.0, 0.0, 0.5, 32767 / 32768])


@pytest.mark.parametrize("fmt", ["int16", "float32"])
def test_write_read_round_trip(tmp_path, fmt):
    rng = np.random.default_rng(1)
    if fmt == "int16":
        samples = rng.integers(-32768, 32768, size=(3, 1000)) / 32768.0
    else:
        samples = rng.uniform(-1, 1, size=(3, 1000)).astype(np.float32)
    wave = MultiChannelWave(samples, 16000, fmt)
    write_wave(tmp_path / "w.wav", wave)
    back = read_wave(tmp_path / "w.wav")
    assert back.sample_format == fmt
    np.testing.assert_array_equal(back.samples, wave.samples)


def test_read_is_deterministic(tmp_path):
    wavfile.write(tmp_path / "a.wav", 16000, np.arange(-500, 500, dtype=np.int16))
    a, b = read_wave(tmp_path / "a.wav"), read_wave(tmp_path / "a.wav")
    np.testing.assert_array_equal(a.samples, b.samples)


def test_truncated_file_rejected(tmp_path):
    wavfile.write(tmp_path / "a.wav", 16000, np.zeros((1000, 2), dtype=np.int16))
    raw = (tmp_path / "a.wav").read_bytes()
    (tmp_path / "b.wav").write_bytes(raw[:-100])
    with pytest.raises(WaveFormatError):
        read_wave(tmp_path / "b.wav")


def test_zero_length_rejected(tmp_path):
    wavfile.write(tmp_path / "a.wav", 16000, np.zeros((0, 2), dtype=np.int16))
    with pytest.raises(WaveFormatError):
        read_wave(tmp_path / "a.wav")


def test_unsupported_codec_rejected(tmp_path):
    wavfile.write(tmp_path / "a.wav", 16000, np.zeros(100, dtype=np.int32))
    with pytest.raises(WaveFormatError):
        read_wave(tmp_path / "a.wav")


def test_garbage_rejected(tmp_path):
    (tmp_path / "a.wav").write_bytes(b"not a wave file at all")
    with pytest.raises(WaveFormatError):
        read_wave(tmp_path / "a.wav")


def _wave(n, channels=2, rate=16000):
    return MultiChannelWave(np.arange(channels * n, dtype=float).reshape(channels, n) / (channels * n), rate)


def test_segment_exact_division():
    segs = segment_wave(_wave(64000), SegmentSpec(2.0))
    assert [s.wave.num_samples for s in segs] == [32000, 32000]
    assert not any(s.padded for s in segs)


def test_segment_zero_pad():
    wave = _wave(40000)
    segs = segment_wave(wave, SegmentSpec(2.0, "zero_pad"))
    assert len(segs) == 2
    assert segs[1].padded and segs[1].num_valid == 8000
    tail = segs[1].wave.samples[:, 8000:]
    assert tail.shape[1] == 24000 and not np.any(tail)


def test_segment_drop():
    segs = segment_wave(_wave(40000), SegmentSpec(2.0, "drop"))
    assert len(segs) == 1
    assert segment_wave(_wave(1000), SegmentSpec(2.0, "drop")) == []


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 5000),
    seconds=st.floats(0.01, 0.2),
    policy=st.sampled_from(["zero_pad", "drop"]),
)
def test_segments_concatenate_to_original(n, seconds, policy):
    wave = _wave(n, channels=2, rate=8000)
    segs = segment_wave(wave, SegmentSpec(seconds, policy))
    joined = np.concatenate([s.wave.samples[:, : s.num_valid] for s in segs] + [np.zeros((2, 0))], axis=1)
    if policy == "zero_pad":
        np.testing.assert_array_equal(joined, wave.samples)
    else:
        np.testing.assert_array_equal(joined, wave.samples[:, : joined.shape[1]])
        assert wave.num_samples - joined.shape[1] < SegmentSpec(seconds).length(8000)


def test_segment_spec_validation():
    with pytest.raises(ValueError):
        SegmentSpec(0.0)
    with pytest.raises(ValueError):
        SegmentSpec(2.0, "wrap")


def test_archive_zero_payload_bytes(tmp_path):
    write_feature_archive(tmp_path / "z.marf", np.zeros((1, 1, 1)), {})
    raw = (tmp_path / "z.marf").read_bytes()
    assert raw[:4] == b"MARF"
    assert raw[HEADER_SIZE : HEADER_SIZE + 4] == b"\x00\x00\x00\x00"


def test_archive_header_layout(tmp_path):
    write_feature_archive(tmp_path / "h.marf", np.ones((5, 200, 40)), {"mode": "mc-mar"})
    raw = (tmp_path / "h.marf").read_bytes()
    magic, version, rank, *dims, dtype, meta_len = struct.unpack_from("<4sII4IIQ", raw)
    assert (magic, version, rank, dims, dtype) == (b"MARF", 1, 3, [5, 200, 40, 0], 1)
    assert len(raw) == HEADER_SIZE + 5 * 200 * 40 * 4 + meta_len
    assert struct.unpack_from("<f", raw, HEADER_SIZE)[0] == 1.0


def test_archive_round_trip_random(tmp_path):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 200, 40)).astype(np.float32)
    meta = {"mode": "mc-mar", "bands": 40, "frame_shift_ms": 10.0, "nested": {"a": [1, 2]}}
    write_feature_archive(tmp_path / "r.marf", x, meta)
    y, meta_back = read_feature_archive(tmp_path / "r.marf")
    assert y.tobytes() == x.tobytes()
    assert meta_back == meta


@settings(max_examples=40, deadline=None)
@given(
    hnp.arrays(
        np.float32,
        hnp.array_shapes(min_dims=3, max_dims=4, min_side=1, max_side=6),
        elements=st.floats(width=32, allow_nan=False, allow_infinity=False),
    )
)
def test_archive_bit_exact(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("arc") / "x.marf"
    write_feature_archive(path, x, {"k": 1})
    y, _ = read_feature_archive(path)
    assert y.shape == x.shape
    assert y.tobytes() == x.tobytes()


def test_archive_bad_magic(tmp_path):
    write_feature_archive(tmp_path / "a.marf", np.zeros((1, 2, 3)))
    raw = bytearray((tmp_path / "a.marf").read_bytes())
    raw[0:1] = b"X"
    (tmp_path / "b.marf").write_bytes(bytes(raw))
    with pytest.raises(ArchiveFormatError, match="magic"):
        read_feature_archive(tmp_path / "b.marf")


def test_archive_bad_version(tmp_path):
    write_feature_archive(tmp_path / "a.marf", np.zeros((1, 2, 3)))
    raw = bytearray((tmp_path / "a.marf").read_bytes())
    struct.pack_into("<I", raw, 4, 99)
    (tmp_path / "b.marf").write_bytes(bytes(raw))
    with pytest.raises(ArchiveFormatError, match="version"):
        read_feature_archive(tmp_path / "b.marf")


def test_archive_length_mismatch(tmp_path):
    write_feature_archive(tmp_path / "a.marf", np.zeros((2, 2, 3)), {"x": 1})
    raw = (tmp_path / "a.marf").read_bytes()
    (tmp_path / "b.marf").write_bytes(raw[:-3])
    with pytest.raises(ArchiveFormatError):
        read_feature_archive(tmp_path / "b.marf")
    (tmp_path / "c.marf").write_bytes(raw[:20])
    with pytest.raises(ArchiveFormatError):
        read_feature_archive(tmp_path / "c.marf")


def test_archive_rejects_bad_rank(tmp_path):
    with pytest.raises(ValueError):
        write_feature_archive(tmp_path / "a.marf", np.zeros((2, 3)))
