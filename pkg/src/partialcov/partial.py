"""Partial estimators: likelihood-ordered sample selection around base estimators.

Every estimator keeps the ``ceil(p N)`` samples with the smallest ordering
key (the most likely ones under the current model), re-estimates on them and
repeats. The iterative variants are written as batched engines over
``(B, N, d)`` stacks so the Monte-Carlo harness can run thousands of
independent problems per call; the public functions run a stack of one and
wrap the outcome in an :class:`EstimateReport`.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    BudgetError,
    ConfigurationError,
    DegenerateInputError,
    SingularMatrixError,
)
from .estimators import (
    ToeplitzModel,
    as_batch,
    burg_batch,
    scm,
    toeplitz_inverse_batch,
)
from .numerics import (
    field_constant,
    hermitize,
    log_det,
    pd_inverse,
    pd_inverse_batch,
    pd_sqrt_pair_batch,
    quad_form,
    scale_bias,
)

__all__ = [
    "PartialConfig",
    "EstimateReport",
    "WeightFunction",
    "GAUSSIAN",
    "CG",
    "tyler_weight",
    "huber_weight",
    "n_selected",
    "select_partial",
    "partial_wrap",
    "partial_scm",
    "partial_burg",
    "p_tyler",
    "p_bt",
    "pm_est",
    "pm_of",
    "pm_exp_cov",
    "pcg_cov",
    "cg_cov",
    "exact_partial_oracle",
    "gaussian_loglik",
    "elliptical_loglik",
    "m_loglik",
]

ORDERING_MODES = ("set", "order")


def n_selected(n, p):
    """Number of retained samples, ``ceil(p * n)``, clamped to [1, n].

    Products within 1e-9 of an integer are rounded first so that e.g.
    ``p = 0.7, n = 10`` keeps 7 samples despite float representation.
    """
    if not 0.0 < p <= 1.0:
        raise ConfigurationError(f"partial order p must lie in (0, 1], got {p}")
    x = p * n
    r = round(x)
    k = r if abs(x - r) < 1e-9 else math.ceil(x)
    return int(min(max(k, 1), n))


@dataclass(frozen=True)
class PartialConfig:
    """Partial order ``p``, iteration cap ``k_max`` and fixed-point tolerance."""

    p: float = 0.75
    k_max: int = 100
    epsilon: float = 1e-10
    ordering_mode: str = "set"

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError(f"p must lie in (0, 1], got {self.p}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ConfigurationError(f"k_max must be a positive integer, got {self.k_max}")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.ordering_mode not in ORDERING_MODES:
            raise ConfigurationError(
                f"ordering_mode must be one of {ORDERING_MODES}, got {self.ordering_mode!r}")

    def n_selected(self, n):
        return n_selected(n, self.p)

    def p_eff(self, n):
        return self.n_selected(n) / n

    def require(self, n, minimum, what):
        k = self.n_selected(n)
        if k < minimum:
            raise ConfigurationError(
                f"{what} needs ceil(pN) >= {minimum}, got ceil({self.p}*{n}) = {k}")
        return k


@dataclass
class EstimateReport:
    """Outcome of a (partial) estimator run.

    ``matrix`` holds the covariance, its inverse or its inverse square root
    depending on ``kind``; use :meth:`covariance` / :meth:`inverse` for a
    uniform view. ``selected`` lists (sorted, 0-based) the ``ceil(pN)``
    samples with the smallest ordering key under the returned matrix.
    """

    matrix: np.ndarray
    kind: str
    selected: np.ndarray
    iterations: int
    converged: bool
    partial_loglik: float
    model: Optional[ToeplitzModel] = None
    bias_factor: Optional[float] = None
    history: list = field(default_factory=list, repr=False)

    def covariance(self):
        if self.kind == "covariance":
            return self.matrix
        if self.kind == "inverse":
            return pd_inverse(self.matrix)
        return pd_inverse(hermitize(self.matrix @ self.matrix))

    def inverse(self):
        if self.kind == "covariance":
            return pd_inverse(self.matrix)
        if self.kind == "inverse":
            return self.matrix
        return hermitize(self.matrix @ self.matrix)


@dataclass(frozen=True)
class WeightFunction:
    """Per-sample loss ``g`` (ordering/likelihood) and its weight ``g_prime``."""

    g_prime: Callable
    g: Optional[Callable] = None
    name: str = "custom"

    def check_nonnegative(self, t):
        w = self.g_prime(np.asarray(t, dtype=float))
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigurationError(f"weight {self.name!r} must be finite and >= 0")


GAUSSIAN = WeightFunction(g_prime=lambda t: np.ones_like(t), g=lambda t: t, name="gaussian")

CG = WeightFunction(g_prime=lambda t: 1.0 - 0.5 / t,
                    g=lambda t: t - 0.5 * np.log(t), name="cg")


def tyler_weight(d):
    return WeightFunction(g_prime=lambda t: d / t, g=lambda t: d * np.log(t),
                          name=f"tyler{d}")


def huber_weight(threshold):
    """Huber-type weight ``min(1, T / t)`` with its loss."""
    T = float(threshold)

    def g(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= T, t, T * (1.0 + np.log(np.maximum(t, 1e-300) / T)))

    return WeightFunction(g_prime=lambda t: np.minimum(1.0, T / t), g=g,
                          name=f"huber{T:g}")


# ---------------------------------------------------------------------------
# likelihoods (additive constants dropped, normalized by N)
# ---------------------------------------------------------------------------

def gaussian_loglik(sigma, X_sel, n_total, sigma_inv=None):
    """``-(c/2N) sum_sel (log|Sigma| + x^H Sigma^-1 x)``."""
    X_sel = np.asarray(X_sel)
    inv = pd_inverse(sigma) if sigma_inv is None else sigma_inv
    tau = quad_form(X_sel, inv)
    c = field_constant(X_sel)
    return float(-0.5 * c / n_total * np.sum(log_det(sigma) + tau))


def elliptical_loglik(shape_inv, X_sel, n_total=None):
    """``-c (d-1) / (2K) sum_sel log tau`` with the shape scaled to unit determinant."""
    X_sel = np.asarray(X_sel)
    k, d = X_sel.shape
    c = field_constant(X_sel)
    # unit-determinant shape: R_n^-1 = R^-1 |R|^(1/d) = R^-1 / |R^-1|^(1/d)
    tau = quad_form(X_sel, shape_inv) * np.exp(-log_det(shape_inv) / d)
    return float(-c * (d - 1) / (2.0 * k) * np.sum(np.log(tau)))


def m_loglik(weight, sigma, X_sel, n_total):
    """``-(c/2N) sum_sel (log|Sigma| + g(tau))``; reduces to the gaussian one for g(t)=t."""
    if weight.g is None:
        return float("nan")
    X_sel = np.asarray(X_sel)
    tau = quad_form(X_sel, pd_inverse(sigma))
    c = field_constant(X_sel)
    return float(-0.5 * c / n_total * np.sum(log_det(sigma) + weight.g(tau)))


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------

def select_partial(keys, p):
    """Indices of the ``ceil(pN)`` smallest keys, sorted by index.

    Ties go to the smaller original index.
    """
    keys = np.asarray(keys, dtype=float)
    k = n_selected(keys.shape[-1], p)
    order = np.argsort(keys, axis=-1, kind="stable")
    return np.sort(order[..., :k], axis=-1)


def _argsort(keys):
    return np.argsort(keys, axis=-1, kind="stable")


def _same_selection(order0, order1, k, mode):
    if mode == "order":
        return np.all(order0 == order1, axis=-1)
    return np.all(np.sort(order0[..., :k], axis=-1) == np.sort(order1[..., :k], axis=-1),
                  axis=-1)


def _gather(X, idx):
    """Rows ``idx`` (B, K) of the stack ``X`` (B, N, d)."""
    return np.take_along_axis(X, idx[..., None], axis=-2)


def _trace_sq(M):
    """tr(M^2) for a stack (real part)."""
    return np.real(np.sum(M * np.swapaxes(M, -1, -2), axis=(-1, -2)))


@dataclass
class BatchResult:
    """Raw outcome of a batched engine; ``failed`` marks aborted problems."""

    matrix: np.ndarray
    kind: str
    iterations: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    fail_iter: np.ndarray
    history: list = field(default_factory=list)
    sigma2: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None

    def inverse(self):
        if self.kind == "inverse":
            return self.matrix
        if self.kind == "inverse_sqrt":
            return hermitize(self.matrix @ self.matrix)
        inv, _ = pd_inverse_batch(self.matrix)
        return inv


def _stack(X):
    X = np.asarray(X)
    if X.ndim != 3:
        raise ConfigurationError(f"expected a (B, N, d) stack, got shape {X.shape}")
    return X


def _init_flags(b):
    return (np.zeros(b, dtype=int), np.zeros(b, dtype=bool),
            np.zeros(b, dtype=bool), np.zeros(b, dtype=int))


# ---------------------------------------------------------------------------
# batched engines
# ---------------------------------------------------------------------------

def pscm_batch(X, cfg, record=False):
    """Partial SCM engine; stops when the selection repeats."""
    X = _stack(X)
    b, n, d = X.shape
    k = cfg.n_selected(n)
    eye = np.eye(d, dtype=X.dtype)
    sigma = np.broadcast_to(eye, (b, d, d)).copy()
    inv = sigma.copy()
    iters, conv, failed, fail_iter = _init_flags(b)
    history = []
    order0 = _argsort(quad_form(X, inv))
    active = np.arange(b)
    for it in range(1, cfg.k_max + 1):
        Xa = X[active]
        sel0 = np.sort(order0[active, :k], axis=-1)
        s_new = scm(_gather(Xa, sel0))
        inv_new, ok = pd_inverse_batch(s_new)
        bad = active[~ok]
        failed[bad] = True
        fail_iter[bad] = it
        good = active[ok]
        sigma[good] = s_new[ok]
        inv[good] = inv_new[ok]
        iters[good] = it
        if record:
            history.append(sigma.copy())
        order1 = _argsort(quad_form(X[good], inv[good]))
        same = _same_selection(order0[good], order1, k, cfg.ordering_mode)
        conv[good[same]] = True
        order0[good] = order1
        active = good[~same]
        if active.size == 0:
            break
    return BatchResult(sigma, "covariance", iters, conv, failed, fail_iter, history)


def pburg_batch(X, cfg, record=False):
    """Partial multisegment Burg engine; returns inverse covariances."""
    X = _stack(X)
    b, n, d = X.shape
    k = cfg.n_selected(n)
    sigma2 = np.ones(b)
    mu = np.zeros((b, d - 1), dtype=complex)
    inv = toeplitz_inverse_batch(sigma2, mu)
    iters, conv, failed, fail_iter = _init_flags(b)
    history = []
    order0 = _argsort(quad_form(X, inv))
    active = np.arange(b)
    for it in range(1, cfg.k_max + 1):
        Xa = X[active]
        sel0 = np.sort(order0[active, :k], axis=-1)
        s2, nu, power = burg_batch(_gather(Xa, sel0))
        ok = power > 0
        bad = active[~ok]
        failed[bad] = True
        fail_iter[bad] = it
        good = active[ok]
        s2, nu, sel0 = s2[ok], nu[ok], sel0[ok]
        inv_g = toeplitz_inverse_batch(s2, nu)
        tau = quad_form(X[good], inv_g)
        # maximum-likelihood rescale of the residual power on the fitted subset
        ratio = np.mean(np.take_along_axis(tau, sel0, axis=-1), axis=-1) / d
        sigma2[good] = s2 * ratio
        mu[good] = nu
        inv[good] = inv_g / ratio[:, None, None]
        iters[good] = it
        if record:
            history.append(inv.copy())
        order1 = _argsort(tau)
        same = _same_selection(order0[good], order1, k, cfg.ordering_mode)
        conv[good[same]] = True
        order0[good] = order1
        active = good[~same]
        if active.size == 0:
            break
    return BatchResult(inv, "inverse", iters, conv, failed, fail_iter, history,
                       sigma2=sigma2, mu=mu)


def ptyler_batch(X, cfg, record=False, return_updated=False):
    """Partial Tyler fixed point; stops on ``tr((R_prev^-1 R - I)^2) <= eps``."""
    X = _stack(X)
    b, n, d = X.shape
    k = cfg.n_selected(n)
    eye = np.eye(d, dtype=X.dtype)
    r_inv = np.broadcast_to(eye, (b, d, d)).copy()
    r_upd = r_inv.copy()
    iters, conv, failed, fail_iter = _init_flags(b)
    history = []
    active = np.arange(b)
    for it in range(1, cfg.k_max + 1):
        Xa = X[active]
        tau = quad_form(Xa, r_inv[active])
        sel = np.sort(_argsort(tau)[:, :k], axis=-1)
        ts = np.take_along_axis(tau, sel, axis=-1)
        ok = np.all(ts > 0, axis=-1)
        Xs = _gather(Xa, sel) / np.sqrt(np.where(ok[:, None], ts, 1.0))[..., None]
        S = scm(Xs)
        R = S / np.real(np.trace(S, axis1=-2, axis2=-1))[:, None, None]
        R_inv, ok_inv = pd_inverse_batch(R)
        ok &= ok_inv
        bad = active[~ok]
        failed[bad] = True
        fail_iter[bad] = it
        good = active[ok]
        R, R_inv = R[ok], R_inv[ok]
        iters[good] = it
        r_upd[good] = R_inv
        if record:
            history.append(R.copy())
        crit = _trace_sq(r_inv[good] @ R - eye)
        done = crit <= cfg.epsilon
        conv[good[done]] = True
        keep = good[~done]
        r_inv[keep] = R_inv[~done]
        active = keep
        if active.size == 0:
            break
    out = r_upd if return_updated else r_inv
    return BatchResult(out, "inverse", iters, conv, failed, fail_iter, history)


def pbt_batch(X, cfg, record=False, return_updated=False):
    """Partial Burg-Tyler engine (unit residual power); returns inverse shapes."""
    X = _stack(X)
    b, n, d = X.shape
    k = cfg.n_selected(n)
    mu = np.zeros((b, d - 1), dtype=complex)
    nu_last = mu.copy()
    weights = d - np.arange(1, d)
    iters, conv, failed, fail_iter = _init_flags(b)
    history = []
    active = np.arange(b)
    for it in range(1, cfg.k_max + 1):
        Xa = X[active]
        r_inv = toeplitz_inverse_batch(np.ones(active.size), mu[active])
        tau = quad_form(Xa, r_inv)
        sel = np.sort(_argsort(tau)[:, :k], axis=-1)
        ts = np.take_along_axis(tau, sel, axis=-1)
        ok = np.all(ts > 0, axis=-1)
        Y = _gather(Xa, sel) / np.sqrt(np.where(ok[:, None], ts, 1.0))[..., None]
        _, nu, _ = burg_batch(Y)
        bad = active[~ok]
        failed[bad] = True
        fail_iter[bad] = it
        good = active[ok]
        nu, m_prev = nu[ok], mu[good]
        iters[good] = it
        nu_last[good] = nu
        if record:
            history.append(nu.copy())
        z = np.abs((nu - m_prev) / (1.0 - np.conj(m_prev) * nu))
        crit = np.sum(weights * np.arctanh(np.minimum(z, 1.0 - 1e-16)) ** 2, axis=-1)
        done = crit <= cfg.epsilon
        conv[good[done]] = True
        keep = good[~done]
        mu[keep] = nu[~done]
        active = keep
        if active.size == 0:
            break
    final_mu = nu_last if return_updated else mu
    inv = toeplitz_inverse_batch(np.ones(b), final_mu)
    return BatchResult(inv, "inverse", iters, conv, failed, fail_iter, history,
                       sigma2=np.ones(b), mu=final_mu)


def pm_est_batch(X, weight, cfg, record=False):
    """Partial M-estimator engine with weighted dyads ``g'(tau) x x^H``."""
    X = _stack(X)
    b, n, d = X.shape
    k = cfg.n_selected(n)
    eye = np.eye(d, dtype=X.dtype)
    s_inv = np.broadcast_to(eye, (b, d, d)).copy()
    iters, conv, failed, fail_iter = _init_flags(b)
    history = []
    active = np.arange(b)
    for it in range(1, cfg.k_max + 1):
        Xa = X[active]
        tau = quad_form(Xa, s_inv[active])
        sel = np.sort(_argsort(tau)[:, :k], axis=-1)
        ts = np.take_along_axis(tau, sel, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = weight.g_prime(ts)
        ok = np.all(np.isfinite(w) & (w >= 0), axis=-1)
        w = np.where(ok[:, None], w, 1.0)
        S = scm(_gather(Xa, sel) * np.sqrt(w)[..., None])
        S_inv, ok_inv = pd_inverse_batch(S)
        ok &= ok_inv
        bad = active[~ok]
        failed[bad] = True
        fail_iter[bad] = it
        good = active[ok]
        S, S_inv = S[ok], S_inv[ok]
        iters[good] = it
        if record:
            history.append(S.copy())
        crit = _trace_sq(s_inv[good] @ S - eye)
        done = crit <= cfg.epsilon
        conv[good[done]] = True
        keep = good[~done]
        s_inv[keep] = S_inv[~done]
        active = keep
        if active.size == 0:
            break
    return BatchResult(s_inv, "inverse", iters, conv, failed, fail_iter, history)


def pm_exp_batch(X, weight, cfg, init_scm=False, normalization=1.0, record=False):
    """Geodesic partial M-estimator engine; returns ``Sigma^{-1/2}``.

    Update: ``Sigma <- Sigma^{1/2} exp(Sigma^{-1/2} S Sigma^{-1/2} - I) Sigma^{1/2}``
    with ``S = normalization / K * sum_sel g'(tau) x x^H`` and samples
    ordered by ascending ``g(tau)``.
    """
    X = _stack(X)
    b, n, d = X.shape
    k = cfg.n_selected(n)
    eye = np.eye(d, dtype=X.dtype)
    iters, conv, failed, fail_iter = _init_flags(b)
    if init_scm:
        sh, smh, ok0 = pd_sqrt_pair_batch(scm(X))
        failed[~ok0] = True
        active = np.flatnonzero(ok0)
    else:
        sh = np.broadcast_to(eye, (b, d, d)).copy()
        smh = sh.copy()
        active = np.arange(b)
    history = []
    for it in range(1, cfg.k_max + 1):
        if active.size == 0:
            break
        Xa = X[active]
        smh_a = smh[active]
        tau = quad_form(Xa, smh_a @ smh_a)
        with np.errstate(divide="ignore", invalid="ignore"):
            keys = weight.g(tau)
        sel = np.sort(_argsort(keys)[:, :k], axis=-1)
        ts = np.take_along_axis(tau, sel, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = weight.g_prime(ts)
        ok = np.all(np.isfinite(w), axis=-1) & np.all(np.isfinite(keys), axis=-1)
        w = np.where(ok[:, None], w, 0.0)
        Xs = _gather(Xa, sel)
        S = normalization / k * (np.swapaxes(Xs, -1, -2) @ (np.conj(Xs) * w[..., None]))
        H = hermitize(smh_a @ hermitize(S) @ smh_a) - eye
        ev, V = np.linalg.eigh(H)
        ok &= np.all(np.isfinite(ev), axis=-1)
        ev = np.where(ok[:, None], ev, 0.0)
        E = hermitize((V * np.exp(ev)[:, None, :]) @ np.conj(np.swapaxes(V, -1, -2)))
        sh_a = sh[active]
        sigma_new = hermitize(sh_a @ E @ sh_a)
        bad = active[~ok]
        failed[bad] = True
        fail_iter[bad] = it
        good = active[ok]
        sigma_new, ev = sigma_new[ok], ev[ok]
        iters[good] = it
        if record:
            history.append(sigma_new.copy())
        # Sigma^{-1/2} Sigma_new Sigma^{-1/2} = exp(H), so the criterion is spectral
        crit = np.sum(np.expm1(ev) ** 2, axis=-1)
        done = crit <= cfg.epsilon
        conv[good[done]] = True
        keep = good[~done]
        sh_new, smh_new, ok2 = pd_sqrt_pair_batch(sigma_new[~done])
        failed[keep[~ok2]] = True
        fail_iter[keep[~ok2]] = it
        sh[keep] = sh_new
        smh[keep] = smh_new
        active = keep[ok2]
    return BatchResult(smh, "inverse_sqrt", iters, conv, failed, fail_iter, history)


def pcg_batch(X, cfg, record=False):
    """Partial circular-gaussian geodesic estimator (``g(t) = t - log(t)/2``)."""
    d = np.asarray(X).shape[-1]
    return pm_exp_batch(X, CG, cfg, init_scm=True,
                        normalization=1.0 / (1.0 - 1.0 / (2.0 * d)), record=record)


# ---------------------------------------------------------------------------
# single-batch API
# ---------------------------------------------------------------------------

def _raise_failure(res, what, degenerate=False):
    if res.failed[0]:
        cls = DegenerateInputError if degenerate else SingularMatrixError
        raise cls(f"{what}: estimate on the selected subset is singular or degenerate",
                  iteration=int(res.fail_iter[0]))


def partial_wrap(base, key, samples, cfg, theta0=None, loglik=None):
    """Generic partial estimation loop.

    Parameters
    ----------
    base : callable
        ``base(X_subset) -> theta``; any estimator defined on sub-batches.
    key : callable
        ``key(X, theta) -> (N,) keys``; ascending key means descending
        likelihood.
    samples : (N, d) array_like
    cfg : PartialConfig
    theta0 : optional
        Starting model. Defaults to the identity matrix.
    loglik : callable, optional
        ``loglik(theta, X_selected, N)`` evaluated on the final selection.

    The loop orders the keys under the current model, fits ``base`` on the
    ``ceil(pN)`` best samples and stops once the selection (set or full
    ordering, per ``cfg.ordering_mode``) repeats, or after ``cfg.k_max``
    fits.
    """
    X = as_batch(samples)
    n, d = X.shape
    k = cfg.n_selected(n)
    theta = np.eye(d, dtype=X.dtype) if theta0 is None else theta0
    order0 = _argsort(np.asarray(key(X, theta), dtype=float))
    converged = False
    history = []
    it = 0
    for it in range(1, cfg.k_max + 1):
        sel = np.sort(order0[:k])
        try:
            theta = base(X[sel])
            keys = np.asarray(key(X, theta), dtype=float)
        except (SingularMatrixError, np.linalg.LinAlgError) as exc:
            raise SingularMatrixError(f"base estimator failed: {exc}", iteration=it) from exc
        history.append(theta)
        order1 = _argsort(keys)
        if _same_selection(order0, order1, k, cfg.ordering_mode):
            converged = True
            break
        order0 = order1
    selected = np.sort(order1[:k])
    ll = float("nan") if loglik is None else loglik(theta, X[selected], n)
    matrix = theta if isinstance(theta, np.ndarray) else np.asarray(theta)
    return EstimateReport(matrix=matrix, kind="covariance", selected=selected,
                          iterations=it, converged=converged, partial_loglik=ll,
                          history=history)


def partial_scm(samples, cfg, bias_correct=False, record=False):
    """Partial sample covariance.

    ``report.matrix`` is the covariance of the selected samples; with
    ``bias_correct`` it is multiplied by ``p_eff / scale_bias(d, c, p_eff)``
    to undo the shrinkage caused by dropping the largest samples (valid for
    clean gaussian data only).
    """
    X = as_batch(samples)
    n, d = X.shape
    cfg.require(n, d, "partial SCM")
    res = pscm_batch(X[None], cfg, record=record)
    _raise_failure(res, "partial SCM")
    sigma = res.matrix[0]
    inv = pd_inverse(sigma)
    selected = select_partial(quad_form(X, inv), cfg.p)
    ll = gaussian_loglik(sigma, X[selected], n, sigma_inv=inv)
    factor = None
    if bias_correct:
        p_eff = cfg.p_eff(n)
        factor = p_eff / scale_bias(d, field_constant(X), p_eff)
        sigma = sigma * factor
    return EstimateReport(sigma, "covariance", selected, int(res.iterations[0]),
                          bool(res.converged[0]), ll, bias_factor=factor,
                          history=[h[0] for h in res.history])


def partial_burg(samples, cfg, bias_correct=False, record=False):
    """Partial multisegment Burg estimate; ``report.matrix`` is the inverse covariance.

    ``report.model`` carries ``(sigma2, mu)`` where ``sigma2`` is the Burg
    residual power rescaled to the maximum-likelihood scale of the fitted
    subset. ``bias_correct`` applies the gaussian trimming factor evaluated
    in 2d real dimensions.
    """
    X = as_batch(samples)
    n, d = X.shape
    if d < 2:
        raise ConfigurationError("partial Burg needs d >= 2")
    cfg.require(n, 2, "partial Burg")
    res = pburg_batch(X[None], cfg, record=record)
    _raise_failure(res, "partial Burg", degenerate=True)
    inv = res.matrix[0]
    model = ToeplitzModel(float(res.sigma2[0]), res.mu[0])
    selected = select_partial(quad_form(X, inv), cfg.p)
    ll = gaussian_loglik(pd_inverse(inv), X[selected], n, sigma_inv=inv)
    factor = None
    if bias_correct:
        p_eff = cfg.p_eff(n)
        factor = p_eff / scale_bias(2 * d, 1, p_eff)
        inv = inv / factor
        model = ToeplitzModel(model.sigma2 * factor, model.mu)
    return EstimateReport(inv, "inverse", selected, int(res.iterations[0]),
                          bool(res.converged[0]), ll, model=model, bias_factor=factor,
                          history=[h[0] for h in res.history])


def p_tyler(samples, cfg, return_updated=False, record=False):
    """Partial Tyler shape estimator; ``report.matrix`` is ``R^{-1}``.

    By default the inverse used in the final ordering pass is returned (the
    update that passed the stopping test is discarded), so a converged
    report is an exact selection fixed point. ``return_updated`` returns the
    inverse of that last update instead.
    """
    X = as_batch(samples)
    n, d = X.shape
    cfg.require(n, d, "partial Tyler")
    if np.any(np.all(X == 0, axis=-1)):
        raise DegenerateInputError("partial Tyler needs non-zero samples")
    res = ptyler_batch(X[None], cfg, record=record, return_updated=return_updated)
    _raise_failure(res, "partial Tyler")
    inv = res.matrix[0]
    selected = select_partial(quad_form(X, inv), cfg.p)
    ll = elliptical_loglik(inv, X[selected])
    return EstimateReport(inv, "inverse", selected, int(res.iterations[0]),
                          bool(res.converged[0]), ll,
                          history=[h[0] for h in res.history])


def p_bt(samples, cfg, return_updated=False, record=False):
    """Partial Burg-Tyler Toeplitz shape estimator; ``report.matrix`` is ``R^{-1}``.

    The inverse is assembled from unit residual power and the reflection
    coefficients in force when the loop stops; ``return_updated`` uses the
    coefficients of the final Burg pass instead.
    """
    X = as_batch(samples)
    n, d = X.shape
    if d < 2:
        raise ConfigurationError("partial Burg-Tyler needs d >= 2")
    cfg.require(n, 2, "partial Burg-Tyler")
    if np.any(np.all(X == 0, axis=-1)):
        raise DegenerateInputError("partial Burg-Tyler needs non-zero samples")
    res = pbt_batch(X[None], cfg, record=record, return_updated=return_updated)
    _raise_failure(res, "partial Burg-Tyler")
    inv = res.matrix[0]
    selected = select_partial(quad_form(X, inv), cfg.p)
    ll = elliptical_loglik(inv, X[selected])
    return EstimateReport(inv, "inverse", selected, int(res.iterations[0]),
                          bool(res.converged[0]), ll,
                          model=ToeplitzModel(1.0, res.mu[0]),
                          history=[h[0] for h in res.history])


def pm_est(weight, samples, cfg, record=False):
    """Partial M-estimator of the covariance; ``report.matrix`` is ``Sigma^{-1}``.

    Samples are ordered by ascending ``tau``, which matches ascending
    ``g(tau)`` because ``g' >= 0`` is required.
    """
    X = as_batch(samples)
    n, d = X.shape
    cfg.require(n, d, "partial M-estimator")
    weight.check_nonnegative(np.logspace(-6, 6, 61))
    res = pm_est_batch(X[None], weight, cfg, record=record)
    _raise_failure(res, "partial M-estimator")
    inv = res.matrix[0]
    selected = select_partial(quad_form(X, inv), cfg.p)
    ll = m_loglik(weight, pd_inverse(inv), X[selected], n)
    return EstimateReport(inv, "inverse", selected, int(res.iterations[0]),
                          bool(res.converged[0]), ll,
                          history=[h[0] for h in res.history])


def pm_of(weight, base, samples, cfg, record=False):
    """Partial M-estimation through an arbitrary covariance estimator.

    ``base`` receives the selected samples scaled by ``sqrt(g'(tau))`` and
    returns a covariance matrix. With ``base = scm`` this coincides with
    :func:`pm_est`. ``report.matrix`` is ``Sigma^{-1}``.
    """
    X = as_batch(samples)
    n, d = X.shape
    k = cfg.n_selected(n)
    weight.check_nonnegative(np.logspace(-6, 6, 61))
    eye = np.eye(d, dtype=X.dtype)
    s_inv = eye
    converged = False
    history = []
    it = 0
    for it in range(1, cfg.k_max + 1):
        tau = quad_form(X, s_inv)
        sel = np.sort(_argsort(tau)[:k])
        w = weight.g_prime(tau[sel])
        try:
            sigma = hermitize(np.asarray(base(X[sel] * np.sqrt(w)[:, None])))
            sigma_inv = pd_inverse(sigma)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"base estimator failed: {exc}", iteration=it) from exc
        if record:
            history.append(sigma)
        if _trace_sq(s_inv @ sigma - eye) <= cfg.epsilon:
            converged = True
            break
        s_inv = sigma_inv
    selected = select_partial(quad_form(X, s_inv), cfg.p)
    ll = m_loglik(weight, pd_inverse(s_inv), X[selected], n)
    return EstimateReport(s_inv, "inverse", selected, it, converged, ll, history=history)


def pm_exp_cov(weight, samples, cfg, record=False):
    """Geodesic partial M-estimator; ``report.matrix`` is ``Sigma^{-1/2}``.

    Tolerates weights ``g'`` that change sign: every iterate is positive
    definite because the update goes through a matrix exponential.
    """
    if weight.g is None:
        raise ConfigurationError("geodesic M-estimation needs the loss g for ordering")
    X = as_batch(samples)
    n, d = X.shape
    cfg.require(n, d, "geodesic partial M-estimator")
    res = pm_exp_batch(X[None], weight, cfg, record=record)
    _raise_failure(res, "geodesic partial M-estimator")
    return _exp_report(X, res, weight, cfg)


def _exp_report(X, res, weight, cfg):
    n = X.shape[0]
    smh = res.matrix[0]
    inv = hermitize(smh @ smh)
    with np.errstate(divide="ignore"):
        keys = weight.g(quad_form(X, inv))
    selected = select_partial(keys, cfg.p)
    ll = m_loglik(weight, pd_inverse(inv), X[selected], n)
    return EstimateReport(smh, "inverse_sqrt", selected, int(res.iterations[0]),
                          bool(res.converged[0]), ll,
                          history=[h[0] for h in res.history])


def pcg_cov(samples, cfg, record=False):
    """Partial circular-gaussian covariance (geodesic, ``g(t) = t - log(t)/2``).

    Starts from the full-batch SCM. ``report.matrix`` is ``Sigma^{-1/2}``.
    """
    X = as_batch(samples)
    n, d = X.shape
    cfg.require(n, d, "pcg_cov")
    if np.any(np.all(X == 0, axis=-1)):
        raise DegenerateInputError("pcg_cov needs non-zero samples")
    res = pcg_batch(X[None], cfg, record=record)
    _raise_failure(res, "pcg_cov")
    return _exp_report(X, res, CG, cfg)


def cg_cov(samples, cfg, record=False):
    """Non-partial counterpart of :func:`pcg_cov` (all samples kept)."""
    full = PartialConfig(p=1.0, k_max=cfg.k_max, epsilon=cfg.epsilon,
                         ordering_mode=cfg.ordering_mode)
    return pcg_cov(samples, full, record=record)


# ---------------------------------------------------------------------------
# exhaustive reference
# ---------------------------------------------------------------------------

def exact_partial_oracle(base, loglik, samples, p, budget=10**6):
    """Exact maximizer of the partial likelihood by subset enumeration.

    Fits ``base`` on every ``ceil(pN)``-subset and keeps the subset whose
    fitted model scores highest under ``loglik(theta, X_subset, N)``. Ties
    go to the lexicographically smallest subset; subsets where ``base``
    fails are skipped.

    Returns
    -------
    (indices, theta, value)

    Raises
    ------
    BudgetError
        If there are more than ``budget`` subsets.
    """
    X = as_batch(samples)
    n = X.shape[0]
    k = n_selected(n, p)
    count = math.comb(n, k)
    if count > budget:
        raise BudgetError(f"C({n}, {k}) = {count} subsets exceeds the budget of {budget}")
    best = (None, None, -np.inf)
    for subset in itertools.combinations(range(n), k):
        idx = np.array(subset)
        try:
            theta = base(X[idx])
            value = loglik(theta, X[idx], n)
        except (SingularMatrixError, np.linalg.LinAlgError):
            continue
        if value > best[2]:
            best = (idx, theta, float(value))
    if best[0] is None:
        raise SingularMatrixError("base estimator failed on every subset")
    return best
