"""Delay-and-sum beamforming with GCC-PHAT integer delay estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .wave_io import MultiChannelWave

__all__ = ["DelayEstimate", "delay_and_sum", "estimate_tdoa", "beamform"]


@dataclass(frozen=True)
class DelayEstimate:
    """Integer sample delays against channel 0 and the GCC-PHAT peak heights.

    Channel ``c`` is aligned to the reference by reading ``x_c[n + delays[c]]``.
    """

    delays: np.ndarray
    confidence: np.ndarray
    max_delay: int


def estimate_tdoa(wave: MultiChannelWave, max_delay_ms: float = 10.0) -> DelayEstimate:
    if not max_delay_ms > 0:
        raise ValueError("max_delay_ms must be positive")
    x = wave.samples
    n = wave.num_samples
    max_delay = min(int(round(max_delay_ms * wave.sample_rate / 1000.0)), n - 1)
    nfft = scipy.fft.next_fast_len(2 * n, real=True)
    spec = scipy.fft.rfft(x, n=nfft, axis=1)
    delays = np.zeros(wave.num_channels, dtype=np.int64)
    conf = np.zeros(wave.num_channels)
    if not np.any(x[0]):
        return DelayEstimate(delays, conf, max_delay)
    conf[0] = 1.0
    lags = np.concatenate([np.arange(0, max_delay + 1), np.arange(-max_delay, 0)])
    for c in range(1, wave.num_channels):
        if not np.any(x[c]):
            continue
        # cc[d] = sum_n x_c[n + d] x_0[n]
        cross = spec[c] * spec[0].conj()
        mag = np.abs(cross)
        cross = np.divide(cross, mag, out=np.zeros_like(cross), where=mag > 1e-12 * mag.max())
        cc = scipy.fft.irfft(cross, n=nfft)
        window = np.concatenate([cc[: max_delay + 1], cc[nfft - max_delay :]])
        best = int(np.argmax(window))
        delays[c] = lags[best]
        conf[c] = window[best]
    return DelayEstimate(delays, conf, max_delay)


def delay_and_sum(
    wave: MultiChannelWave, delays: DelayEstimate | np.ndarray, weights=None
) -> MultiChannelWave:
    """``out[n] = sum_c w_c x_c[n + delay_c]`` with zeros outside each channel.

    Weights default to ``1/C``. The output keeps the input length.
    """
    d = np.asarray(getattr(delays, "delays", delays), dtype=np.int64)
    num_ch, n = wave.num_channels, wave.num_samples
    if d.shape != (num_ch,):
        raise ValueError(f"need {num_ch} delays, got shape {d.shape}")
    if np.any(np.abs(d) >= n):
        raise ValueError("delay magnitude must be smaller than the signal length")
    w = np.full(num_ch, 1.0 / num_ch) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (num_ch,):
        raise ValueError(f"need {num_ch} weights, got shape {w.shape}")
    out = np.zeros(n)
    for c in range(num_ch):
        shift = d[c]
        if shift >= 0:
            out[: n - shift] += w[c] * wave.samples[c, shift:]
        else:
            out[-shift:] += w[c] * wave.samples[c, : n + shift]
    return MultiChannelWave(out[None, :], wave.sample_rate, wave.sample_format)


def beamform(wave: MultiChannelWave, max_delay_ms: float = 10.0) -> MultiChannelWave:
    if wave.num_channels == 1:
        return wave
    return delay_and_sum(wave, estimate_tdoa(wave, max_delay_ms))
