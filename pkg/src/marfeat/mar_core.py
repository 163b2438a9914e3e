"""Multivariate autoregressive (MAR) modeling of sub-band DCT vector series.

The model is ``y[k] = -sum_{l=1..N} D_l y[k-l] + eps[k]`` with ``C x C``
coefficient matrices acting on column vectors, prediction polynomial
``H(z) = I + sum_l D_l z^-l`` and error covariance ``Sigma``. The power
spectrum of ``y`` along the DCT axis, ``H^-1 Sigma H^-H``, is the temporal
envelope of the sub-band signal, one diagonal entry per channel.

Autocorrelation matrices follow ``R(q) = E[y[k] y[k-q]^T]`` with
``R(-q) = R(q)^T``; sequences are stored as arrays of shape ``(N+1, C, C)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg

from .dsp import SubbandVectorSeries

__all__ = [
    "EnvelopeMatrix",
    "MarModel",
    "SingularSystemError",
    "SingularTransferError",
    "error_covariance",
    "estimate_autocorr",
    "eval_prediction_polynomial",
    "fit_mar",
    "mar_envelope",
    "solve_normal_equations",
]

DEFAULT_ORDER = 107
DEFAULT_LOADING = 1e-6
MAX_TRANSFER_COND = 1e12


class SingularSystemError(np.linalg.LinAlgError):
    """The block-Toeplitz normal equations could not be solved."""


class SingularTransferError(np.linalg.LinAlgError):
    """``H(theta)`` is numerically singular at some envelope angle."""

    def __init__(self, message, band=None, angle=None):
        super().__init__(message)
        self.band = band
        self.angle = angle


def estimate_autocorr(series: SubbandVectorSeries, max_lag: int) -> np.ndarray:
    """Biased autocorrelation ``R(q) = 1/K sum_{k>=q} y[k] y[k-q]^T``, ``q = 0..max_lag``.

    Only the stored support of ``series`` is touched; the divisor is the full
    length ``K``.
    """
    if max_lag < 0:
        raise ValueError("max_lag must be nonnegative")
    length = series.length
    if length <= max_lag:
        raise ValueError(f"series length {length} must exceed max_lag {max_lag}")
    y = series.values
    n, dim = y.shape
    out = np.zeros((max_lag + 1, dim, dim))
    if n == 0:
        return out
    nfft = scipy.fft.next_fast_len(n + max_lag + 1, real=True)
    spec = scipy.fft.rfft(y, n=nfft, axis=0)
    cross = spec[:, :, None] * spec[:, None, :].conj()
    r = scipy.fft.irfft(cross, n=nfft, axis=0)[: max_lag + 1]
    out[: min(n, max_lag + 1)] = r[: min(n, max_lag + 1)] / length
    out[0] = 0.5 * (out[0] + out[0].T)
    return out


def _block_toeplitz(acorr: np.ndarray, order: int) -> np.ndarray:
    """Matrix with block ``(i, j)`` equal to ``R(j - i)``, ``i, j = 0..order-1``."""
    dim = acorr.shape[1]
    big = np.empty((order * dim, order * dim))
    for i in range(order):
        for j in range(order):
            q = j - i
            big[i * dim : (i + 1) * dim, j * dim : (j + 1) * dim] = (
                acorr[q] if q >= 0 else acorr[-q].T
            )
    return big


def _loaded(acorr: np.ndarray, loading: float) -> np.ndarray:
    if not loading:
        return acorr
    dim = acorr.shape[1]
    out = acorr.copy()
    out[0] = out[0] + loading * np.trace(acorr[0]) / dim * np.eye(dim)
    return out


def _solve_dense(acorr: np.ndarray, order: int) -> np.ndarray:
    dim = acorr.shape[1]
    big = _block_toeplitz(acorr, order)
    # right-hand side blocks -R(-i) = -R(i)^T
    rhs = -np.concatenate([acorr[i].T for i in range(1, order + 1)], axis=0)
    try:
        with np.errstate(all="raise"):
            x = scipy.linalg.solve(big, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, FloatingPointError, scipy.linalg.LinAlgWarning) as exc:
        raise SingularSystemError(f"dense normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("dense normal equations produced non-finite coefficients")
    # the stacked unknowns are D_l^T
    return np.ascontiguousarray(x.reshape(order, dim, dim).transpose(0, 2, 1))


def _solve_right(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``b @ inv(a)`` for symmetric positive definite ``a``."""
    try:
        cho = scipy.linalg.cho_factor(a)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"prediction error covariance not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(cho, b.T).T


def _solve_levinson(acorr: np.ndarray, order: int) -> np.ndarray:
    """Whittle / Wiggins-Robinson recursion on forward and backward predictors.

    Forward error ``f_p[k] = y[k] + sum_l A_l y[k-l]``; backward error
    ``b_p[k] = y[k-p] + sum_l B_l y[k-p+l]``.
    """
    dim = acorr.shape[1]
    fwd = np.zeros((order, dim, dim))
    bwd = np.zeros((order, dim, dim))
    pf = acorr[0].copy()
    pb = acorr[0].copy()
    for p in range(1, order + 1):
        # cross term E[f_{p-1}[k] y[k-p]^T]
        delta = acorr[p] + (fwd[: p - 1] @ acorr[p - 1 : 0 : -1]).sum(axis=0)
        kf = -_solve_right(pb, delta)
        kb = -_solve_right(pf, delta.T)
        new_fwd = fwd[: p - 1] + kf @ bwd[p - 2 :: -1] if p > 1 else fwd[:0]
        new_bwd = bwd[: p - 1] + kb @ fwd[p - 2 :: -1] if p > 1 else bwd[:0]
        fwd[: p - 1] = new_fwd
        bwd[: p - 1] = new_bwd
        fwd[p - 1] = kf
        bwd[p - 1] = kb
        pf = pf + kf @ delta.T
        pb = pb + kb @ delta
        pf = 0.5 * (pf + pf.T)
        pb = 0.5 * (pb + pb.T)
    if not np.all(np.isfinite(fwd)):
        raise SingularSystemError("Levinson recursion produced non-finite coefficients")
    return fwd


def solve_normal_equations(
    acorr: np.ndarray, order: int, method: str = "levinson", loading: float = 0.0
) -> np.ndarray:
    """Solve the block-Toeplitz normal equations for ``D_1..D_order``.

    Parameters
    ----------
    acorr : ndarray, shape (M+1, C, C)
        ``R(0)..R(M)`` with ``M >= order``.
    order : int
    method : {'levinson', 'dense'}
        Block Levinson recursion, ``O(order^2 C^3)``, or a direct solve of
        the full ``(order C) x (order C)`` system.
    loading : float
        Adds ``loading * trace(R(0)) / C`` to the diagonal of ``R(0)``.

    Returns
    -------
    ndarray, shape (order, C, C)
        ``D_l`` in the column-vector convention of the model, i.e. the
        transposes of the unknowns stacked in the block system.
    """
    acorr = np.asarray(acorr, dtype=np.float64)
    if acorr.ndim != 3 or acorr.shape[1] != acorr.shape[2]:
        raise ValueError(f"autocorrelation must be (M+1, C, C), got {acorr.shape}")
    if order < 0:
        raise ValueError("order must be nonnegative")
    if acorr.shape[0] <= order:
        raise ValueError(f"need lags up to {order}, have {acorr.shape[0] - 1}")
    dim = acorr.shape[1]
    if order == 0:
        return np.zeros((0, dim, dim))
    acorr = _loaded(acorr[: order + 1], loading)
    if method == "levinson":
        return _solve_levinson(acorr, order)
    if method == "dense":
        return _solve_dense(acorr, order)
    raise ValueError(f"unknown method {method!r}")


def error_covariance(acorr: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """``Sigma = R(0) + sum_l R(l) D_l^T``, symmetrized.

    With ``D_l`` stored in column-vector form this is the block-system
    expression ``R(0) + sum_l R(l) X_l`` for the stacked unknowns ``X_l``.
    """
    acorr = np.asarray(acorr, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    order = len(coeffs)
    if coeffs.ndim != 3 or (order and coeffs.shape[1:] != acorr.shape[1:]):
        raise ValueError(
            f"coefficients {coeffs.shape} inconsistent with autocorrelation {acorr.shape}"
        )
    if acorr.shape[0] <= order:
        raise ValueError("autocorrelation has too few lags for the model order")
    sigma = acorr[0].copy()
    for l in range(1, order + 1):
        sigma += acorr[l] @ coeffs[l - 1].T
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True)
class MarModel:
    """Fitted ``C``-dimensional MAR model of order ``N``."""

    coeffs: np.ndarray  # (N, C, C)
    error_cov: np.ndarray  # (C, C)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        cov = np.asarray(self.error_cov, dtype=np.float64)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("error covariance must be square")
        if coeffs.ndim != 3 or (len(coeffs) and coeffs.shape[1:] != cov.shape):
            raise ValueError("coefficients must be (N, C, C) matching the covariance")
        cov = 0.5 * (cov + cov.T)
        tol = 1e-9 * max(np.trace(cov), 0.0)
        if cov.size and np.linalg.eigvalsh(cov)[0] < -tol:
            raise ValueError("error covariance is not positive semidefinite")
        object.__setattr__(self, "coeffs", coeffs.reshape(len(coeffs), *cov.shape))
        object.__setattr__(self, "error_cov", cov)

    @property
    def dim(self) -> int:
        return self.error_cov.shape[0]

    @property
    def order(self) -> int:
        return len(self.coeffs)


def fit_mar(
    series: SubbandVectorSeries,
    order: int = DEFAULT_ORDER,
    method: str = "levinson",
    loading: float = DEFAULT_LOADING,
) -> MarModel:
    """Autocorrelation-method MAR fit: autocorrelation, normal equations, error covariance.

    ``R(0)`` is diagonally loaded by ``loading * trace(R(0)) / C`` before the
    solve and in the error covariance. A series with no energy yields zero
    coefficients and a zero covariance.
    """
    acorr = estimate_autocorr(series, order)
    dim = series.dim
    if np.trace(acorr[0]) <= 0.0:
        return MarModel(np.zeros((order, dim, dim)), np.zeros((dim, dim)))
    acorr = _loaded(acorr, loading)
    coeffs = solve_normal_equations(acorr, order, method=method)
    return MarModel(coeffs, error_covariance(acorr, coeffs))


def eval_prediction_polynomial(model: MarModel, angles) -> np.ndarray:
    """``H(theta) = I + sum_l D_l exp(-j theta l)`` by Horner's rule.

    Returns complex array of shape ``(len(angles), C, C)``.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    z_inv = np.exp(-1j * angles)[:, None, None]
    dim = model.dim
    acc = np.zeros((len(angles), dim, dim), dtype=np.complex128)
    # H = I + z^-1 (D_1 + z^-1 (D_2 + ... + z^-1 D_N))
    for d in model.coeffs[::-1]:
        acc = z_inv * (d + acc)
    acc += np.eye(dim)
    return acc


@dataclass(frozen=True)
class EnvelopeMatrix:
    """Nonnegative per-channel temporal envelope of one band, shape ``(E, C)``.

    Point ``m`` sits at time ``(m + 0.5) / E * segment_seconds``.
    """

    band_index: int
    values: np.ndarray
    segment_seconds: float = 2.0

    @property
    def num_points(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.num_points) + 0.5) / self.num_points * self.segment_seconds


def envelope_angles(num_points: int) -> np.ndarray:
    return np.pi * (np.arange(num_points) + 0.5) / num_points


def _covariance_factor(cov: np.ndarray) -> np.ndarray:
    """``L`` with ``L L^T = cov`` for a PSD (possibly singular) matrix."""
    evals, evecs = np.linalg.eigh(cov)
    tol = 1e-9 * max(np.trace(cov), 0.0)
    if evals[0] < -tol:
        raise ValueError("error covariance is not positive semidefinite")
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def mar_envelope(
    model: MarModel, num_points: int = 2000, segment_seconds: float = 2.0, band: int = 0
) -> EnvelopeMatrix:
    """``diag(H^-1 Sigma H^-H)`` on ``theta_m = pi (m + 0.5) / E``, ``m = 0..E-1``.

    ``Sigma`` is factored once as ``L L^T``; each angle then costs one
    ``C x C`` solve ``H X = L`` and the envelope is the row-wise squared norm
    of ``X``, which is nonnegative by construction.
    """
    if num_points < 1:
        raise ValueError("num_points must be >= 1")
    angles = envelope_angles(num_points)
    h = eval_prediction_polynomial(model, angles)
    factor = _covariance_factor(model.error_cov)
    if model.order:
        # ||H|| <= 1 + sum ||D_l||, so this ratio bounds cond(H) from above and
        # also catches a vanishing scalar H, whose plain condition number is 1
        scale = 1.0 + np.linalg.norm(model.coeffs, ord=2, axis=(1, 2)).sum()
        smallest = np.linalg.svd(h, compute_uv=False)[:, -1]
        with np.errstate(divide="ignore"):
            cond = scale / smallest
        bad = ~(cond <= MAX_TRANSFER_COND)
        if np.any(bad):
            m = int(np.argmax(bad))
            raise SingularTransferError(
                f"band {band}: prediction polynomial singular at angle index {m} "
                f"(theta={angles[m]:.6g}, cond={cond[m]:.3g})",
                band=band,
                angle=m,
            )
        x = np.linalg.solve(h, np.broadcast_to(factor.astype(np.complex128), h.shape))
    else:
        x = np.broadcast_to(factor.astype(np.complex128), h.shape)
    values = np.sum(x.real**2 + x.imag**2, axis=2)
    return EnvelopeMatrix(band, values, float(segment_seconds))
