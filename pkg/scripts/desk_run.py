"""Time the three extraction modes on a synthetic multi-channel recording."""

import argparse
import time

import numpy as np
import scipy.signal

from marfeat.config import PipelineConfig
from marfeat.features import extract
from marfeat.wave_io import MultiChannelWave, write_wave


def synthetic_recording(seconds, channels, fs=16000, seed=0):
    rng = np.random.default_rng(seed)
    n = int(seconds * fs)
    src = rng.standard_normal(n)
    for f0 in (500.0, 1500.0, 2500.0):
        b, a = scipy.signal.iirpeak(f0, 8.0, fs)
        src = src + scipy.signal.lfilter(b, a, rng.standard_normal(n))
    src *= 1.0 + 0.8 * np.sin(2 * np.pi * 4.0 * np.arange(n) / fs)
    chans = []
    for c in range(channels):
        rir = rng.standard_normal(400) * np.exp(-np.arange(400) / 80.0)
        rir[0] = 1.0
        chans.append(np.roll(scipy.signal.fftconvolve(src, rir)[:n], 3 * c)
                     + 0.01 * rng.standard_normal(n))
    x = np.stack(chans)
    return MultiChannelWave(0.1 * x / np.max(np.abs(x)), fs)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seconds", type=float, default=10.0)
    ap.add_argument("--channels", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--save-wav", help="also write the synthetic input here")
    args = ap.parse_args()

    wave = synthetic_recording(args.seconds, args.channels)
    if args.save_wav:
        write_wave(args.save_wav, wave)
    for mode in ("mc-mar", "bf-mb", "fbank"):
        t0 = time.perf_counter()
        spec = extract(wave, PipelineConfig(mode=mode), threads=args.threads)
        dt = time.perf_counter() - t0
        dims = "x".join(map(str, spec.shape))
        print(f"{mode:7s} {dt:7.2f} s  dims {dims}  finite {bool(np.all(np.isfinite(spec.values)))}")


if __name__ == "__main__":
    main()
