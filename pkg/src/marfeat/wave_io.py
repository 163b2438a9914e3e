"""Multi-channel WAV input, fixed-length segmentation and the MARF archive.

MARF layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"MARF"
    4       4     version (u32)
    8       4     rank (u32, 3 or 4)
    12      16    dims (4 x u32, unused trailing dims are 0)
    28      4     dtype code (u32, 1 = float32 LE)
    32      8     metadata length in bytes (u64)
    40      ...   payload, row-major float32 LE, prod(dims) * 4 bytes
    ...     ...   metadata, UTF-8 JSON
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

__all__ = [
    "ArchiveFormatError",
    "MultiChannelWave",
    "Segment",
    "SegmentSpec",
    "WaveFormatError",
    "read_feature_archive",
    "read_wave",
    "segment_wave",
    "write_feature_archive",
    "write_wave",
]

ARCHIVE_MAGIC = b"MARF"
ARCHIVE_VERSION = 1
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sII4IIQ")
HEADER_SIZE = _HEADER.size  # 40

MAX_CHANNELS = 16


class WaveFormatError(ValueError):
    """Raised for unreadable, unsupported or empty audio files."""


class ArchiveFormatError(ValueError):
    """Raised when a MARF archive is malformed."""


@dataclass(frozen=True)
class MultiChannelWave:
    """Synchronized ``C``-channel signal.

    ``samples`` has shape ``(C, L)`` and holds amplitudes in float64.
    ``sample_format`` remembers the PCM encoding the wave came from so it can
    be written back losslessly.
    """

    samples: np.ndarray
    sample_rate: int
    sample_format: str = "int16"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError(f"samples must be (C, L), got shape {samples.shape}")
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError("wave needs at least one channel and one sample")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        if self.sample_format not in ("int16", "float32"):
            raise ValueError(f"unknown sample_format {self.sample_format!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def scaled(self, alpha: float) -> "MultiChannelWave":
        return MultiChannelWave(self.samples * alpha, self.sample_rate, self.sample_format)

    def select(self, channels) -> "MultiChannelWave":
        return MultiChannelWave(
            self.samples[list(channels)], self.sample_rate, self.sample_format
        )


def read_wave(path) -> MultiChannelWave:
    """Read a PCM WAV file (16-bit int or 32-bit float, 1-16 channels).

    16-bit samples are divided by 32768 so that -32768 maps to exactly -1.0.
    """
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, wavfile.WavFileWarning, EOFError, struct.error) as exc:
        raise WaveFormatError(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        fmt = "int16"
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        fmt = "float32"
        samples = data.astype(np.float64)
    else:
        raise WaveFormatError(f"{path}: unsupported sample type {data.dtype}")

    # scipy silently returns fewer frames when the data chunk is cut short
    expected = _declared_data_bytes(path)
    if expected is not None and expected != data.nbytes:
        raise WaveFormatError(
            f"{path}: truncated file, header declares {expected} data bytes, "
            f"found {data.nbytes}"
        )
    if samples.shape[0] == 0:
        raise WaveFormatError(f"{path}: zero-length audio")
    samples = samples.T if samples.ndim == 2 else samples[None, :]
    if samples.shape[0] > MAX_CHANNELS:
        raise WaveFormatError(f"{path}: {samples.shape[0]} channels (max {MAX_CHANNELS})")
    return MultiChannelWave(np.ascontiguousarray(samples), rate, fmt)


def _declared_data_bytes(path: Path):
    raw = path.read_bytes()
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id, size = struct.unpack_from("<4sI", raw, pos)
        if chunk_id == b"data":
            return size
        pos += 8 + size + (size & 1)
    return None


def write_wave(path, wave: MultiChannelWave, sample_format: str | None = None) -> None:
    """Write ``wave`` as PCM WAV in its own (or the given) sample format.

    16-bit output is rounded and clipped to the int16 range.
    """
    fmt = sample_format or wave.sample_format
    data = wave.samples.T
    if fmt == "int16":
        data = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = data.astype(np.float32)
    else:
        raise ValueError(f"unknown sample format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(Path(path), wave.sample_rate, np.ascontiguousarray(data))


@dataclass(frozen=True)
class SegmentSpec:
    segment_seconds: float = 2.0
    remainder_policy: str = "zero_pad"

    def __post_init__(self):
        if not self.segment_seconds > 0:
            raise ValueError("segment_seconds must be positive")
        if self.remainder_policy not in ("zero_pad", "drop"):
            raise ValueError(f"unknown remainder_policy {self.remainder_policy!r}")

    def length(self, sample_rate: int) -> int:
        return int(round(self.segment_seconds * sample_rate))


@dataclass(frozen=True)
class Segment:
    """One fixed-length analysis window cut from a longer wave."""

    wave: MultiChannelWave
    index: int
    start: int
    num_valid: int

    @property
    def padded(self) -> bool:
        return self.num_valid < self.wave.num_samples


def segment_wave(wave: MultiChannelWave, spec: SegmentSpec = SegmentSpec()) -> list[Segment]:
    """Cut ``wave`` into non-overlapping segments of ``spec.segment_seconds``."""
    seg_len = spec.length(wave.sample_rate)
    if seg_len < 1:
        raise ValueError("segment shorter than one sample")
    full, rest = divmod(wave.num_samples, seg_len)
    segments = []
    for i in range(full):
        start = i * seg_len
        chunk = wave.samples[:, start : start + seg_len]
        segments.append(
            Segment(MultiChannelWave(chunk, wave.sample_rate, wave.sample_format), i, start, seg_len)
        )
    if rest and spec.remainder_policy == "zero_pad":
        start = full * seg_len
        chunk = np.zeros((wave.num_channels, seg_len))
        chunk[:, :rest] = wave.samples[:, start:]
        segments.append(
            Segment(MultiChannelWave(chunk, wave.sample_rate, wave.sample_format), full, start, rest)
        )
    return segments


def write_feature_archive(path, tensor, metadata: dict | None = None) -> None:
    tensor = np.asarray(tensor)
    if tensor.ndim not in (3, 4):
        raise ValueError(f"archive tensors are rank 3 or 4, got rank {tensor.ndim}")
    if min(tensor.shape) < 1:
        raise ValueError(f"dims must be positive, got {tensor.shape}")
    if any(d >= 2**32 for d in tensor.shape):
        raise ValueError("dimension too large for u32 header field")
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    dims = list(tensor.shape) + [0] * (4 - tensor.ndim)
    header = _HEADER.pack(
        ARCHIVE_MAGIC, ARCHIVE_VERSION, tensor.ndim, *dims, DTYPE_FLOAT32, len(meta)
    )
    payload = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(meta)


def read_feature_archive(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ArchiveFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, rank, d0, d1, d2, d3, dtype, meta_len = _HEADER.unpack_from(raw, 0)
    if magic != ARCHIVE_MAGIC:
        raise ArchiveFormatError(f"{path}: bad magic {magic!r}")
    if version != ARCHIVE_VERSION:
        raise ArchiveFormatError(f"{path}: unsupported version {version}")
    if rank not in (3, 4):
        raise ArchiveFormatError(f"{path}: bad rank {rank}")
    if dtype != DTYPE_FLOAT32:
        raise ArchiveFormatError(f"{path}: unknown dtype code {dtype}")
    dims = (d0, d1, d2, d3)[:rank]
    if min(dims) < 1 or any((d0, d1, d2, d3)[rank:]):
        raise ArchiveFormatError(f"{path}: bad dims {dims}")
    nbytes = math.prod(dims) * 4
    if len(raw) != HEADER_SIZE + nbytes + meta_len:
        raise ArchiveFormatError(
            f"{path}: dims {dims} need {nbytes} payload bytes + {meta_len} metadata "
            f"bytes, file has {len(raw) - HEADER_SIZE} after the header"
        )
    tensor = np.frombuffer(raw, dtype="<f4", count=math.prod(dims), offset=HEADER_SIZE)
    tensor = tensor.reshape(dims).astype(np.float32)
    try:
        metadata = json.loads(raw[HEADER_SIZE + nbytes :].decode("utf-8")) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveFormatError(f"{path}: bad metadata: {exc}") from exc
    return tensor, metadata
