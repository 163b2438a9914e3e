"""Sweep segment length and model order for the AM-tone envelope check.

Prints the Pearson correlation between the fitted envelope and the squared
Hilbert envelope of the same band-passed signal.
"""

import argparse

import numpy as np
import scipy.fft
import scipy.signal

from marfeat.dsp import apply_window_bank, build_window_bank, dct_ii
from marfeat.mar_core import fit_mar, mar_envelope


def am_tone(seconds, fs, carrier=1000.0, mod=50.0, depth=0.8):
    t = np.arange(int(round(seconds * fs))) / fs
    return (1.0 + depth * np.cos(2 * np.pi * mod * t)) * np.cos(2 * np.pi * carrier * t)


def fidelity(seconds, order, fs=16000, env_rate=1000):
    x = am_tone(seconds, fs)
    length = len(x)
    bank = build_window_bank(40, 200.0, 6500.0, length, fs)
    band = int(np.argmin(np.abs(bank.center_hz - 1000.0)))
    series = apply_window_bank(dct_ii(x)[None], bank)[band]
    num_points = int(env_rate * seconds)
    env = mar_envelope(fit_mar(series, order), num_points, seconds).values[:, 0]
    banded = scipy.fft.idct(series.series[:, 0] / np.sqrt(length), norm="ortho")
    ref = np.abs(scipy.signal.hilbert(banded)) ** 2
    ref = ref[: num_points * (length // num_points)].reshape(num_points, -1).mean(axis=1)
    return float(np.corrcoef(env, ref)[0, 1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seconds", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--orders", type=int, nargs="+", default=[40, 107, 200])
    args = ap.parse_args()
    print("seconds  " + "  ".join(f"N={n:<5d}" for n in args.orders))
    for sec in args.seconds:
        row = [fidelity(sec, n) for n in args.orders]
        print(f"{sec:7.2f}  " + "  ".join(f"{r:7.4f}" for r in row))


if __name__ == "__main__":
    main()
