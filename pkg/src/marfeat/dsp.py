"""DCT-II and the mel-spaced Gaussian sub-band windows over the DCT axis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

__all__ = [
    "SubbandVectorSeries",
    "SubbandWindowBank",
    "apply_window_bank",
    "build_window_bank",
    "dct_ii",
    "hz_to_mel",
    "mel_to_hz",
]

# half-amplitude point of a unit Gaussian sits at sigma * sqrt(2 ln 2)
_HALF_WIDTH = np.sqrt(2.0 * np.log(2.0))
TRUNCATE_SIGMAS = 3.0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def dct_ii(x, axis: int = -1) -> np.ndarray:
    """DCT-II with gains ``a[0] = 1`` and ``a[k] = sqrt(2)`` for ``k > 0``.

    ``y[k] = a[k] * sum_n x[n] cos((2n + 1) pi k / 2K)``, computed along
    ``axis``. This equals the orthonormal DCT-II scaled by ``sqrt(K)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] < 1:
        raise ValueError("DCT needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("DCT input contains non-finite values")
    return scipy.fft.dct(x, type=2, norm="ortho", axis=axis) * np.sqrt(x.shape[axis])


@dataclass(frozen=True)
class SubbandWindowBank:
    """Gaussian windows over DCT indices, centers uniform on the mel scale.

    DCT index ``k`` of a ``K``-point segment sits at ``k * fs / (2K)`` Hz.
    Each window is stored only over its support ``[starts[i], stops[i])``;
    :meth:`window` expands one to full length.
    """

    num_bands: int
    low_hz: float
    high_hz: float
    length: int
    sample_rate: int
    centers: np.ndarray  # int DCT indices
    sigmas: np.ndarray  # DCT-index units
    starts: np.ndarray
    stops: np.ndarray
    pieces: tuple  # window values on [start, stop)

    @property
    def center_hz(self) -> np.ndarray:
        return self.centers * self.sample_rate / (2.0 * self.length)

    def window(self, i: int) -> np.ndarray:
        w = np.zeros(self.length)
        w[self.starts[i] : self.stops[i]] = self.pieces[i]
        return w

    @property
    def windows(self) -> np.ndarray:
        return np.stack([self.window(i) for i in range(self.num_bands)])


def build_window_bank(
    num_bands: int = 40,
    low_hz: float = 200.0,
    high_hz: float = 6500.0,
    length: int = 32000,
    sample_rate: int = 16000,
) -> SubbandWindowBank:
    """Build ``num_bands`` overlapping Gaussian windows for a ``length``-point DCT.

    Band centers are placed at the midpoints of ``num_bands`` equal mel
    intervals spanning ``[low_hz, high_hz]``. A window's full width at half
    maximum equals the mean distance to its neighbouring centers, so adjacent
    windows cross near amplitude 0.5. Windows are zero beyond 3 sigma.
    """
    if num_bands < 1:
        raise ValueError("num_bands must be >= 1")
    if not 0 < low_hz < high_hz <= sample_rate / 2:
        raise ValueError(
            f"need 0 < low_hz < high_hz <= {sample_rate / 2}, got {low_hz}, {high_hz}"
        )
    if length < num_bands:
        raise ValueError("DCT length must be at least num_bands")

    hz_per_index = sample_rate / (2.0 * length)
    mel_lo, mel_hi = hz_to_mel(low_hz), hz_to_mel(high_hz)
    step = (mel_hi - mel_lo) / num_bands
    center_mel = mel_lo + step * (np.arange(num_bands) + 0.5)
    exact = mel_to_hz(center_mel) / hz_per_index
    centers = np.rint(exact).astype(np.int64)
    if num_bands > 1 and np.any(np.diff(centers) <= 0):
        raise ValueError("bands are denser than the DCT index resolution")

    if num_bands == 1:
        fwhm = np.array([(high_hz - low_hz) / hz_per_index])
    else:
        edges = mel_to_hz(mel_lo + step * np.arange(-1, num_bands + 1) + step / 2) / hz_per_index
        # neighbour distances, including virtual centers one step beyond each end
        gaps = np.diff(edges)
        fwhm = 0.5 * (gaps[:-1] + gaps[1:])
    sigmas = fwhm / (2.0 * _HALF_WIDTH)

    starts, stops, pieces = [], [], []
    for c, s in zip(centers, sigmas):
        reach = int(np.floor(TRUNCATE_SIGMAS * s))
        lo, hi = max(0, c - reach), min(length, c + reach + 1)
        k = np.arange(lo, hi)
        pieces.append(np.exp(-0.5 * ((k - c) / s) ** 2))
        starts.append(lo)
        stops.append(hi)

    return SubbandWindowBank(
        num_bands=num_bands,
        low_hz=float(low_hz),
        high_hz=float(high_hz),
        length=int(length),
        sample_rate=int(sample_rate),
        centers=centers,
        sigmas=sigmas,
        starts=np.asarray(starts),
        stops=np.asarray(stops),
        pieces=tuple(pieces),
    )


@dataclass(frozen=True)
class SubbandVectorSeries:
    """Length-``K`` series of ``C``-dimensional vectors, one per DCT index.

    Only the nonzero stretch ``[offset, offset + len(values))`` is stored;
    the series is zero elsewhere. ``values`` has shape ``(S, C)``.
    """

    band_index: int
    length: int
    offset: int
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def series(self) -> np.ndarray:
        full = np.zeros((self.length, self.dim))
        full[self.offset : self.offset + len(self.values)] = self.values
        return full

    def scaled(self, alpha: float) -> "SubbandVectorSeries":
        return SubbandVectorSeries(self.band_index, self.length, self.offset, self.values * alpha)

    def permuted(self, perm) -> "SubbandVectorSeries":
        return SubbandVectorSeries(
            self.band_index, self.length, self.offset, self.values[:, list(perm)]
        )

    @classmethod
    def from_array(cls, series, band_index: int = 0) -> "SubbandVectorSeries":
        series = np.asarray(series, dtype=np.float64)
        if series.ndim == 1:
            series = series[:, None]
        return cls(band_index, series.shape[0], 0, series)


def apply_window_bank(dcts, bank: SubbandWindowBank) -> list[SubbandVectorSeries]:
    """Window each channel's DCT with every band; stack channels per band.

    ``dcts`` is ``(C, K)``. Component ``c`` of series ``i`` at index ``k``
    is ``w_i[k] * dcts[c, k]``.
    """
    dcts = np.asarray(dcts, dtype=np.float64)
    if dcts.ndim == 1:
        dcts = dcts[None, :]
    if dcts.shape[1] != bank.length:
        raise ValueError(
            f"DCT length {dcts.shape[1]} does not match window bank length {bank.length}"
        )
    out = []
    for i in range(bank.num_bands):
        lo, hi = bank.starts[i], bank.stops[i]
        vals = (dcts[:, lo:hi] * bank.pieces[i]).T
        out.append(SubbandVectorSeries(i, bank.length, int(lo), np.ascontiguousarray(vals)))
    return out


def stack_bands(series: list[SubbandVectorSeries], band_index: int = 0) -> SubbandVectorSeries:
    """Stack single-channel band series into one vector series (one component per band)."""
    if not series:
        raise ValueError("nothing to stack")
    length = series[0].length
    lo = min(s.offset for s in series)
    hi = max(s.offset + len(s.values) for s in series)
    vals = np.zeros((hi - lo, sum(s.dim for s in series)))
    col = 0
    for s in series:
        if s.length != length:
            raise ValueError("series lengths differ")
        vals[s.offset - lo : s.offset - lo + len(s.values), col : col + s.dim] = s.values
        col += s.dim
    return SubbandVectorSeries(band_index, length, lo, vals)
