"""Non-partial covariance estimators and the Toeplitz/reflection-coefficient maps.

Sign convention shared by every routine here: the order-m prediction-error
filter ``a`` (with ``a[0] = 1``) is stepped up as

    a_k^(m) = a_k^(m-1) + mu_m * conj(a_{m-k}^(m-1)),

and the forward error is ``f_t = sum_k a_k x_{t-k}``. A real AR(1) segment
with lag-one correlation ``rho`` therefore has ``mu_1 = -rho``.

Samples are stored row-wise: a batch is an ``(N, d)`` array, and a stack of
batches is ``(..., N, d)``. Every routine works on stacks.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError, StabilityError
from .numerics import hermitize

__all__ = [
    "ToeplitzModel",
    "as_batch",
    "scm",
    "burg_multisegment",
    "burg_batch",
    "levinson_predictor",
    "reverse_levinson",
    "trench_inverse",
    "toeplitz_inverse_batch",
    "toeplitz_covariance_batch",
]

MU_CLAMP = 1.0 - 1e-10


@dataclass(frozen=True)
class ToeplitzModel:
    """Residual power ``sigma2`` and the d-1 reflection coefficients ``mu``."""

    sigma2: float
    mu: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu))
        object.__setattr__(self, "mu", mu)
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ConfigurationError(f"sigma2 must be positive, got {self.sigma2}")
        if np.any(~np.isfinite(mu)) or np.any(np.abs(mu) >= 1.0):
            raise StabilityError("reflection coefficients must satisfy |mu| < 1")

    @property
    def dim(self):
        return self.mu.shape[0] + 1


def as_batch(samples):
    """Validate a sample batch and return it as an ``(N, d)`` array."""
    X = np.asarray(samples)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ConfigurationError(f"expected an (N, d) batch, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigurationError("batch contains non-finite entries")
    if not np.iscomplexobj(X):
        X = X.astype(float)
    return X


def scm(samples):
    """Sample covariance ``(1/N) sum_n x_n x_n^H`` (data assumed centered).

    Works on an ``(N, d)`` batch or an ``(..., N, d)`` stack.
    """
    X = np.asarray(samples)
    n = X.shape[-2]
    S = np.swapaxes(X, -1, -2) @ np.conj(X) / n
    return hermitize(S)


def burg_batch(X):
    """Multisegment Burg recursion over an ``(..., N, d)`` stack.

    Each row is one length-d segment; the lattice statistics are pooled over
    all segments of a batch. Returns ``(sigma2, mu, power)`` with shapes
    ``(...)``, ``(..., d-1)``, ``(...)``; ``power`` is the initial mean
    power (zero flags a degenerate batch).
    """
    X = np.asarray(X)
    d = X.shape[-1]
    lead = X.shape[:-2]
    power = np.mean(np.abs(X) ** 2, axis=(-1, -2))
    mu = np.zeros(lead + (max(d - 1, 0),), dtype=complex)
    sigma2 = power.copy()
    f = X[..., :, 1:].astype(complex)
    b = X[..., :, :-1].astype(complex)
    for m in range(d - 1):
        num = -2.0 * np.sum(f * np.conj(b), axis=(-1, -2))
        den = np.sum(np.abs(f) ** 2 + np.abs(b) ** 2, axis=(-1, -2))
        safe = den > 0
        k = np.where(safe, num / np.where(safe, den, 1.0), 0.0)
        mag = np.abs(k)
        k = np.where(mag > MU_CLAMP, k / np.maximum(mag, 1e-300) * MU_CLAMP, k)
        mu[..., m] = k
        sigma2 = sigma2 * (1.0 - np.abs(k) ** 2)
        kk = k[..., None, None]
        f, b = f[..., :, 1:] + kk * b[..., :, 1:], b[..., :, :-1] + np.conj(kk) * f[..., :, :-1]
    return sigma2, mu, power


def burg_multisegment(samples):
    """Order-(d-1) multisegment Burg estimate of a Toeplitz model.

    Parameters
    ----------
    samples : (N, d) array_like
        Each row is one length-d segment of a stationary series.

    Returns
    -------
    ToeplitzModel

    Raises
    ------
    DegenerateInputError
        If the batch has zero power.
    """
    X = as_batch(samples)
    sigma2, mu, power = burg_batch(X)
    if not power > 0:
        raise DegenerateInputError("zero-power batch")
    return ToeplitzModel(float(sigma2), mu)


def _check_mu(mu):
    if np.any(~np.isfinite(mu)) or np.any(np.abs(mu) >= 1.0):
        raise StabilityError("reflection coefficients must satisfy |mu| < 1")


def levinson_predictor(mu):
    """Step reflection coefficients up to the order-(d-1) error filter.

    ``mu`` has shape ``(..., d-1)``; returns ``a`` of shape ``(..., d)``
    with ``a[..., 0] = 1``.
    """
    mu = np.asarray(mu, dtype=complex)
    n = mu.shape[-1]
    a = np.zeros(mu.shape[:-1] + (n + 1,), dtype=complex)
    a[..., 0] = 1.0
    for m in range(1, n + 1):
        k = mu[..., m - 1][..., None]
        prev = a[..., : m + 1].copy()
        a[..., : m + 1] = prev + k * np.conj(prev[..., ::-1])
    return a


def _lower_toeplitz(col):
    d = col.shape[-1]
    i, j = np.indices((d, d))
    lag = i - j
    T = col[..., np.clip(lag, 0, None)]
    return np.where(lag >= 0, T, 0)


def toeplitz_inverse_batch(sigma2, mu):
    """Gohberg-Semencul inverse for stacks of ``(sigma2, mu)``.

    ``R^{-1} = (A A^H - B B^H) / sigma2`` with ``A`` lower-triangular
    Toeplitz on the error filter ``a`` and ``B`` lower-triangular Toeplitz on
    ``(0, conj(a_{d-1}), ..., conj(a_1))``.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    a = levinson_predictor(mu)
    col_b = np.zeros_like(a)
    col_b[..., 1:] = np.conj(a[..., :0:-1])
    A = _lower_toeplitz(a)
    B = _lower_toeplitz(col_b)
    A_h = np.conj(np.swapaxes(A, -1, -2))
    B_h = np.conj(np.swapaxes(B, -1, -2))
    R_inv = (A @ A_h - B @ B_h) / sigma2[..., None, None]
    return hermitize(R_inv)


def trench_inverse(model):
    """Inverse covariance of a :class:`ToeplitzModel`.

    Raises
    ------
    StabilityError
        If any ``|mu_m| >= 1``.
    """
    _check_mu(model.mu)
    return toeplitz_inverse_batch(model.sigma2, model.mu)


def toeplitz_covariance_batch(sigma2, mu):
    """Forward Toeplitz covariance for stacks of ``(sigma2, mu)``.

    The autocovariance ``r`` is rebuilt by inverting the Levinson
    recursion, starting from ``r_0 = sigma2 / prod(1 - |mu|^2)``;
    ``R[i, j] = r[i - j]`` with ``r[-k] = conj(r[k])``.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    mu = np.asarray(mu, dtype=complex)
    n = mu.shape[-1]
    d = n + 1
    lead = mu.shape[:-1]
    r = np.zeros(lead + (d,), dtype=complex)
    r[..., 0] = sigma2 / np.prod(1.0 - np.abs(mu) ** 2, axis=-1)
    err = np.real(r[..., 0]).copy()
    a = np.zeros(lead + (d,), dtype=complex)
    a[..., 0] = 1.0
    for m in range(1, d):
        k = mu[..., m - 1]
        # sum_{j=1}^{m-1} a_j r_{m-j}
        acc = np.sum(a[..., 1:m] * r[..., m - 1:0:-1], axis=-1)
        r[..., m] = -k * err - acc
        prev = a[..., : m + 1].copy()
        a[..., : m + 1] = prev + k[..., None] * np.conj(prev[..., ::-1])
        err = err * (1.0 - np.abs(k) ** 2)
    i, j = np.indices((d, d))
    lag = i - j
    lower = r[..., np.abs(lag)]
    R = np.where(lag >= 0, lower, np.conj(lower))
    return hermitize(R)


def reverse_levinson(model):
    """Forward Toeplitz covariance matrix described by a :class:`ToeplitzModel`."""
    _check_mu(model.mu)
    return toeplitz_covariance_batch(model.sigma2, model.mu)
