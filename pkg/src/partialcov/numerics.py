"""Dense Hermitian linear algebra and incomplete-gamma helpers.

Matrix functions accept stacks of shape ``(..., d, d)``; the batched
Monte-Carlo code relies on that. Single-matrix callers get exceptions on
failure, while the ``*_batch`` variants return a success mask instead so a
single bad trial does not abort a whole stack.
"""

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError, SingularMatrixError

__all__ = [
    "field_constant",
    "hermitize",
    "quad_form",
    "pd_inverse",
    "pd_inverse_batch",
    "pd_sqrt",
    "pd_invsqrt",
    "pd_sqrt_pair_batch",
    "hermitian_exp",
    "log_det",
    "reg_lower_gamma",
    "inv_reg_lower_gamma",
    "scale_bias",
]


def field_constant(x):
    """Return c_K: 2 for complex data, 1 for real data."""
    return 2 if np.iscomplexobj(x) else 1


def _ct(M):
    return np.conj(np.swapaxes(M, -1, -2))


def hermitize(M):
    """Symmetrize ``(M + M^H) / 2`` to absorb round-off."""
    M = np.asarray(M)
    return 0.5 * (M + _ct(M))


def _check_square(M):
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ConfigurationError(f"expected square matrix, got shape {M.shape}")


def quad_form(x, M_inv):
    """Quadratic form ``x^H M_inv x`` along the last axis.

    Parameters
    ----------
    x : (..., d) array_like
        Vector or stack of vectors (e.g. a ``(N, d)`` batch).
    M_inv : (..., d, d) array_like
        Hermitian positive definite matrix, broadcast against ``x``'s
        leading axes. For a ``(B, N, d)`` sample stack pass ``(B, 1, d, d)``
        or use a ``(B, d, d)`` stack with ``x`` of shape ``(B, N, d)``.

    Returns
    -------
    tau : (...) ndarray of float
        Non-negative real values.
    """
    x = np.asarray(x)
    M_inv = np.asarray(M_inv)
    _check_square(M_inv)
    if x.shape[-1] != M_inv.shape[-1]:
        raise ConfigurationError(
            f"dimension mismatch: vector has {x.shape[-1]} entries, "
            f"matrix is {M_inv.shape[-1]}x{M_inv.shape[-1]}")
    if x.ndim >= 2 and M_inv.ndim >= 3 and x.ndim == M_inv.ndim:
        # (B, N, d) samples against (B, d, d) matrices
        y = x @ np.swapaxes(M_inv, -1, -2)
    else:
        y = np.einsum("...ij,...j->...i", M_inv, x)
    tau = np.real(np.sum(np.conj(x) * y, axis=-1))
    return np.maximum(tau, 0.0)


def _cholesky_batch(M):
    """Cholesky of a stack; failed entries get an identity factor."""
    M = hermitize(M)
    try:
        L = np.linalg.cholesky(M)
        ok = np.all(np.isfinite(L), axis=(-1, -2))
    except np.linalg.LinAlgError:
        flat = M.reshape((-1,) + M.shape[-2:])
        L = np.empty_like(flat)
        ok = np.ones(flat.shape[0], dtype=bool)
        eye = np.eye(M.shape[-1], dtype=M.dtype)
        for i, m in enumerate(flat):
            try:
                L[i] = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                L[i] = eye
                ok[i] = False
        L = L.reshape(M.shape)
        ok = ok.reshape(M.shape[:-2])
    if not np.all(ok):
        L = np.where(np.asarray(ok)[..., None, None], L,
                     np.eye(M.shape[-1], dtype=L.dtype))
    return L, np.asarray(ok)


def pd_inverse_batch(M):
    """Inverse of a stack of PD matrices via Cholesky.

    Returns ``(inv, ok)``; entries where the factorization failed hold the
    identity and ``ok`` is False.
    """
    M = np.asarray(M)
    _check_square(M)
    L, ok = _cholesky_batch(M)
    L_inv = np.linalg.inv(L)
    inv = _ct(L_inv) @ L_inv
    return hermitize(inv), ok


def pd_inverse(M):
    """Inverse of a Hermitian positive definite matrix (Cholesky based)."""
    inv, ok = pd_inverse_batch(M)
    if not np.all(ok):
        raise SingularMatrixError("matrix is not positive definite")
    return inv


def _eigh_pd(M):
    M = hermitize(np.asarray(M))
    _check_square(M)
    w, V = np.linalg.eigh(M)
    return w, V


def _apply_spectral(w, V, f_w):
    return hermitize((V * f_w[..., None, :]) @ _ct(V))


def pd_sqrt(M):
    """Unique Hermitian PD square root, via eigendecomposition."""
    w, V = _eigh_pd(M)
    if not np.all(w > 0):
        raise SingularMatrixError("matrix is not positive definite")
    return _apply_spectral(w, V, np.sqrt(w))


def pd_invsqrt(M):
    """Inverse of :func:`pd_sqrt`."""
    w, V = _eigh_pd(M)
    if not np.all(w > 0):
        raise SingularMatrixError("matrix is not positive definite")
    return _apply_spectral(w, V, 1.0 / np.sqrt(w))


def pd_sqrt_pair_batch(M):
    """Square root and inverse square root of a PD stack from one eigh.

    Returns ``(sqrt, invsqrt, ok)``; non-PD entries are replaced by the
    identity.
    """
    w, V = _eigh_pd(M)
    ok = np.all(w > 0, axis=-1)
    w = np.where(ok[..., None], w, 1.0)
    V = np.where(ok[..., None, None], V, np.eye(w.shape[-1], dtype=V.dtype))
    sw = np.sqrt(w)
    return _apply_spectral(w, V, sw), _apply_spectral(w, V, 1.0 / sw), ok


def hermitian_exp(H):
    """Matrix exponential of a Hermitian (not necessarily PD) matrix.

    The result is always positive definite.
    """
    H = np.asarray(H)
    _check_square(H)
    if not np.all(np.isfinite(H)):
        raise ConfigurationError("non-finite entries in matrix exponential input")
    asym = np.linalg.norm(H - _ct(H), axis=(-1, -2))
    scale = np.maximum(np.linalg.norm(H, axis=(-1, -2)), 1.0)
    if np.any(asym > 1e-12 * scale):
        raise ConfigurationError("matrix exponential input is not Hermitian")
    w, V = np.linalg.eigh(hermitize(H))
    return _apply_spectral(w, V, np.exp(w))


def log_det(M):
    """log|M| for a PD matrix (or stack)."""
    sign, logdet = np.linalg.slogdet(hermitize(M))
    if np.any(np.real(sign) <= 0):
        raise SingularMatrixError("matrix is not positive definite")
    return logdet


def reg_lower_gamma(a, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0) or np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError(f"reg_lower_gamma needs a > 0 and x >= 0 (a={a}, x={x})")
    out = special.gammainc(a, x)
    return float(out) if out.ndim == 0 else out


def inv_reg_lower_gamma(a, q):
    """Inverse in ``x`` of :func:`reg_lower_gamma` for a fixed shape ``a``.

    scipy's estimate is polished with Newton steps (safeguarded by a
    bracket) until ``|P(a, x) - q| <= 1e-12``.
    """
    a = float(a)
    q = float(q)
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if not 0.0 < q < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {q}")
    x = float(special.gammaincinv(a, q))
    lo, hi = 0.0, np.inf
    for _ in range(50):
        err = special.gammainc(a, x) - q
        if abs(err) <= 1e-12:
            break
        if err > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        # density of Gamma(a, 1) at x
        dens = np.exp((a - 1.0) * np.log(x) - x - special.gammaln(a)) if x > 0 else 0.0
        step = x - err / dens if dens > 0 else np.nan
        if not (lo < step < hi) or not np.isfinite(step):
            step = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * max(x, 1.0)
        x = step
    return x


def scale_bias(d, c_k, p_eff):
    """Shrinkage factor of a trimmed gaussian quadratic-form mean.

    With ``a = c_k * d / 2`` this is ``P(a + 1, P^{-1}(a, p_eff))``: the
    fraction of ``E[tau]`` carried by the ``p_eff`` smallest values of
    ``tau ~ Gamma(a)``. Multiply a partial-gaussian scale estimate by
    ``p_eff / scale_bias(...)`` to unbias it.
    """
    if not 0.0 < p_eff <= 1.0:
        raise DomainError(f"p_eff must lie in (0, 1], got {p_eff}")
    if d < 1 or c_k not in (1, 2):
        raise DomainError(f"invalid dimension/field (d={d}, c_k={c_k})")
    if p_eff == 1.0:
        return 1.0
    a = c_k * d / 2.0
    return reg_lower_gamma(a + 1.0, inv_reg_lower_gamma(a, p_eff))
