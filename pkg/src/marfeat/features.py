"""Frame-level features: MC-MAR, BF-MB and log-mel FBANK, plus context windows."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .beamform import beamform
from .config import ConfigError, PipelineConfig
from .dsp import apply_window_bank, build_window_bank, dct_ii, hz_to_mel, mel_to_hz, stack_bands
from .mar_core import EnvelopeMatrix, SingularTransferError, fit_mar, mar_envelope
from .wave_io import MultiChannelWave, SegmentSpec, segment_wave

__all__ = [
    "FeatureExtractionError",
    "FrameSpec",
    "MarSpectrogram",
    "assemble_context",
    "extract",
    "extract_bf_mb",
    "extract_fbank",
    "extract_mc_mar",
    "gain_normalize",
    "integrate_envelope",
    "log_compress",
    "mel_filterbank",
]

LOG_FLOOR = 1e-20


class FeatureExtractionError(RuntimeError):
    """Numerical failure inside the pipeline, tagged with segment and band."""

    def __init__(self, message, segment=None, band=None):
        super().__init__(message)
        self.segment = segment
        self.band = band


@dataclass(frozen=True)
class FrameSpec:
    window_ms: float = 25.0
    shift_ms: float = 10.0

    def __post_init__(self):
        if not 0 < self.shift_ms <= self.window_ms:
            raise ValueError("need 0 < shift_ms <= window_ms")

    def samples(self, rate: float) -> tuple[int, int]:
        """Window and shift lengths at ``rate`` samples per second."""
        return int(round(self.window_ms * rate / 1000.0)), int(round(self.shift_ms * rate / 1000.0))

    def frames_per(self, seconds: float) -> int:
        return int(round(seconds * 1000.0 / self.shift_ms))


@dataclass(frozen=True)
class MarSpectrogram:
    """Log band energies of shape ``(C, T, B)``.

    ``valid_frames`` counts the frames that are not entirely padding, per
    segment; ``frames_per_segment`` is 0 for unsegmented (FBANK) features.
    """

    values: np.ndarray
    frame_spec: FrameSpec
    frames_per_segment: int
    valid_frames: tuple

    @property
    def shape(self):
        return self.values.shape

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]


def log_compress(energies) -> np.ndarray:
    return np.log(np.maximum(energies, LOG_FLOOR))


def gain_normalize(env: EnvelopeMatrix) -> EnvelopeMatrix:
    """Divide each channel's envelope by its mean over the segment.

    Channels with no positive value are passed through unchanged.
    """
    mean = env.values.mean(axis=0)
    scale = np.where(mean > 0, mean, 1.0)
    return EnvelopeMatrix(env.band_index, env.values / scale, env.segment_seconds)


def integrate_envelope(
    env: EnvelopeMatrix, spec: FrameSpec = FrameSpec(), num_frames: int | None = None
) -> np.ndarray:
    """Hamming-weighted frame averages of an envelope, shape ``(T, C)``.

    Frame ``t`` averages ``env[t * shift : t * shift + window]``, where the
    envelope is extended by repeating its last point so that exactly
    ``segment / shift`` frames come out.
    """
    rate = env.num_points / env.segment_seconds
    win, shift = spec.samples(rate)
    if win < 2 or shift < 1:
        raise ValueError(
            f"envelope rate {rate:g}/s cannot resolve a {spec.window_ms} ms window "
            f"with {spec.shift_ms} ms shift"
        )
    if num_frames is None:
        num_frames = spec.frames_per(env.segment_seconds)
    ham = np.hamming(win)
    ham /= ham.sum()
    need = (num_frames - 1) * shift + win
    vals = env.values
    if need > len(vals):
        vals = np.concatenate([vals, np.repeat(vals[-1:], need - len(vals), axis=0)])
    idx = np.arange(num_frames)[:, None] * shift + np.arange(win)[None, :]
    return np.einsum("tmc,m->tc", vals[idx], ham)


def _segment_bank(cfg: PipelineConfig, seg_len: int, sample_rate: int):
    if cfg.order >= seg_len:
        raise ConfigError(f"order {cfg.order} must be below the segment length {seg_len}")
    try:
        return build_window_bank(cfg.bands, cfg.low_hz, cfg.high_hz, seg_len, sample_rate)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _band_frames(series, cfg, frame_spec, num_points, frames, seg_index):
    """Fit one (possibly grouped) vector series and return log frames ``(T, dim)``."""
    model = fit_mar(series, cfg.order)
    try:
        env = mar_envelope(model, num_points, cfg.segment_seconds, band=series.band_index)
    except SingularTransferError as exc:
        raise FeatureExtractionError(
            f"segment {seg_index}, band {series.band_index}: {exc}",
            segment=seg_index,
            band=series.band_index,
        ) from exc
    if cfg.gain_normalize:
        env = gain_normalize(env)
    return log_compress(integrate_envelope(env, frame_spec, frames))


def _mar_features(wave: MultiChannelWave, cfg: PipelineConfig, grouped: bool, threads: int):
    frame_spec = FrameSpec(cfg.frame_ms, cfg.shift_ms)
    segments = segment_wave(wave, SegmentSpec(cfg.segment_seconds, "zero_pad"))
    seg_len = SegmentSpec(cfg.segment_seconds).length(wave.sample_rate)
    bank = _segment_bank(cfg, seg_len, wave.sample_rate)
    num_points = int(round(cfg.env_rate * cfg.segment_seconds))
    frames = frame_spec.frames_per(cfg.segment_seconds)
    if num_points < 1 or frames < 1:
        raise ConfigError("segment too short for the envelope rate or frame shift")

    out_ch = 1 if grouped else wave.num_channels
    values = np.empty((out_ch, frames * len(segments), cfg.bands))
    valid = []
    for seg in segments:
        series = apply_window_bank(dct_ii(seg.wave.samples, axis=1), bank)
        if grouped:
            g = cfg.group_size
            units = [
                stack_bands(series[i : i + g], band_index=i) for i in range(0, cfg.bands, g)
            ]
        else:
            units = series
        results = _map(
            lambda s: _band_frames(s, cfg, frame_spec, num_points, frames, seg.index),
            units,
            threads,
        )
        t0 = seg.index * frames
        for unit, res in zip(units, results):
            if grouped:
                b = unit.band_index
                values[0, t0 : t0 + frames, b : b + res.shape[1]] = res
            else:
                values[:, t0 : t0 + frames, unit.band_index] = res.T
        valid.append(min(frames, math.ceil(seg.num_valid / wave.sample_rate * 1000.0 / cfg.shift_ms)))
    return MarSpectrogram(values, frame_spec, frames, tuple(valid))


def extract_mc_mar(
    wave: MultiChannelWave, config: PipelineConfig = PipelineConfig(), threads: int = 1
) -> MarSpectrogram:
    """Multi-channel MAR spectrogram ``(C, T, B)``.

    Per 2-s segment: DCT of every channel, Gaussian sub-band windows, one
    ``C``-dimensional MAR fit per band, envelope, optional gain
    normalization, Hamming integration and log.
    """
    return _mar_features(wave, config, grouped=False, threads=threads)


def extract_bf_mb(
    wave: MultiChannelWave, config: PipelineConfig = PipelineConfig(), threads: int = 1
) -> MarSpectrogram:
    """Multi-band MAR on a single (beamformed) channel, ``(1, T, B)``.

    Consecutive bands are grouped ``group_size`` at a time into one vector
    process; the last group is smaller when the band count is not a
    multiple of the group size.
    """
    mono = beamform(wave, config.max_delay_ms)
    return _mar_features(mono, config, grouped=True, threads=threads)


def mel_filterbank(num_bands: int, low_hz: float, high_hz: float, nfft: int, sample_rate: int):
    """Triangular filters on ``nfft // 2 + 1`` rfft bins, and their center frequencies."""
    if not 0 < low_hz < high_hz <= sample_rate / 2:
        raise ValueError("need 0 < low_hz < high_hz <= Nyquist")
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), num_bands + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling)), edges[1:-1]


def extract_fbank(
    wave: MultiChannelWave, config: PipelineConfig = PipelineConfig()
) -> MarSpectrogram:
    """Log mel filterbank energies ``(1, T, B)`` from a mono wave.

    25 ms Hamming frames every 10 ms; ``T = ceil(L / shift)`` with the
    signal zero-padded at the end.
    """
    if wave.num_channels != 1:
        raise ValueError("FBANK expects a single-channel wave")
    spec = FrameSpec(config.frame_ms, config.shift_ms)
    win, shift = spec.samples(wave.sample_rate)
    nfft = 1 << max(1, (win - 1).bit_length())
    try:
        fb, _ = mel_filterbank(config.bands, config.low_hz, config.high_hz, nfft, wave.sample_rate)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    x = wave.samples[0]
    num_frames = -(-len(x) // shift)
    padded = np.zeros((num_frames - 1) * shift + win)
    padded[: len(x)] = x
    idx = np.arange(num_frames)[:, None] * shift + np.arange(win)[None, :]
    frames = padded[idx] * np.hamming(win)
    power = np.abs(scipy.fft.rfft(frames, n=nfft, axis=1)) ** 2
    values = log_compress(power @ fb.T)[None]
    return MarSpectrogram(values, spec, 0, (num_frames,))


def extract(wave: MultiChannelWave, config: PipelineConfig, threads: int = 1) -> MarSpectrogram:
    """Dispatch on ``config.mode``; FBANK beamforms multi-channel input first."""
    if config.mode == "mc-mar":
        return extract_mc_mar(wave, config, threads)
    if config.mode == "bf-mb":
        return extract_bf_mb(wave, config, threads)
    return extract_fbank(beamform(wave, config.max_delay_ms), config)


def assemble_context(spec, context: int = 21) -> np.ndarray:
    """Context windows around every frame, shape ``(T, C, context, B)``.

    Window ``t`` at offset ``o`` holds frame ``clamp(t + o, 0, T - 1)``.
    """
    values = spec.values if isinstance(spec, MarSpectrogram) else np.asarray(spec)
    if values.ndim != 3:
        raise ValueError("expected a (C, T, B) spectrogram")
    num_frames = values.shape[1]
    if context < 1 or context % 2 == 0:
        raise ValueError("context must be a positive odd number")
    if context > 2 * num_frames - 1:
        raise ValueError(f"context {context} too large for {num_frames} frames")
    half = context // 2
    idx = np.clip(np.arange(num_frames)[:, None] + np.arange(-half, half + 1)[None, :], 0, num_frames - 1)
    # values[:, idx] is (C, T, context, B)
    return np.ascontiguousarray(values[:, idx].transpose(1, 0, 2, 3))
