"""Adaptive detection statistics and Monte-Carlo threshold calibration.

All statistics broadcast over leading axes: ``inv`` may be a ``(B, d, d)``
stack matched with ``(B, d)`` test vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigurationError, DomainError

__all__ = [
    "DETECTOR_KINDS",
    "DetectorSpec",
    "CalibrationResult",
    "mf_stat",
    "nmf_stat",
    "glr_cg_stat",
    "statistic",
    "empirical_quantile",
    "exceedance_rate",
    "calibrate_threshold",
]

DETECTOR_KINDS = ("mf", "nmf", "glr_cg")


@dataclass(frozen=True)
class DetectorSpec:
    """Detector kind, unit-norm steering vector and (once calibrated) threshold."""

    kind: str
    steering: np.ndarray
    threshold: float = None

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise ConfigurationError(f"detector must be one of {DETECTOR_KINDS}, got {self.kind!r}")
        s = np.asarray(self.steering, dtype=complex)
        object.__setattr__(self, "steering", s)
        if s.ndim != 1 or abs(np.linalg.norm(s) - 1.0) > 1e-12:
            raise ConfigurationError("steering vector must be a unit-norm 1-D vector")

    def with_threshold(self, threshold):
        return DetectorSpec(self.kind, self.steering, float(threshold))

    def __call__(self, inv, x):
        return statistic(self.kind, self.steering, inv, x)


def _forms(s, inv, x):
    inv = np.asarray(inv)
    x = np.asarray(x)
    s = np.asarray(s)
    if inv.shape[-1] != s.shape[-1] or x.shape[-1] != s.shape[-1]:
        raise ConfigurationError("dimension mismatch between steering, matrix and data")
    w = np.einsum("...ij,...j->...i", inv, x)
    cross = np.einsum("i,...i->...", np.conj(s), w)
    ss = np.real(np.einsum("i,...ij,j->...", np.conj(s), inv, s))
    xx = np.real(np.sum(np.conj(x) * w, axis=-1))
    return np.abs(cross) ** 2, ss, xx


def mf_stat(s, inv, x):
    """Adaptive matched filter ``|s^H M x|^2 / (s^H M s)`` with ``M`` the inverse covariance."""
    cross2, ss, _ = _forms(s, inv, x)
    return cross2 / ss


def nmf_stat(s, inv, x):
    """Normalized matched filter ``|s^H M x|^2 / ((s^H M s)(x^H M x))``, in [0, 1]."""
    cross2, ss, xx = _forms(s, inv, x)
    if np.any(xx <= 0):
        raise DomainError("normalized matched filter is undefined for a zero test vector")
    return np.clip(cross2 / (ss * xx), 0.0, 1.0)


def glr_cg_stat(s, inv, x):
    """Likelihood-ratio stand-in under the loss ``g(t) = t - log(t)/2`` (experimental).

    With ``tau0 = x^H M x`` and ``tau1 = tau0 - |s^H M x|^2 / (s^H M s)`` it
    returns ``g(tau0) - g(tau1)``, or ``+inf`` when ``tau1 <= 0``.
    """
    cross2, ss, tau0 = _forms(s, inv, x)
    if np.any(tau0 <= 0):
        raise DomainError("GLR_cg is undefined for a zero test vector")
    tau1 = tau0 - cross2 / ss
    # residual below round-off of tau0 means x lies on the signal line
    degenerate = tau1 <= 1e-14 * tau0
    safe = np.where(degenerate, 1.0, tau1)
    val = (tau0 - safe) - 0.5 * np.log(tau0 / safe)
    return np.where(degenerate, np.inf, np.maximum(val, 0.0))


_STATS = {"mf": mf_stat, "nmf": nmf_stat, "glr_cg": glr_cg_stat}


def statistic(kind, s, inv, x):
    return _STATS[kind](s, inv, x)


def empirical_quantile(values, q):
    """Type-7 (linear interpolation) empirical quantile."""
    return float(np.quantile(np.asarray(values, dtype=float), q, method="linear"))


def exceedance_rate(values, threshold):
    return float(np.mean(np.asarray(values) > threshold))


@dataclass
class CalibrationResult:
    """Calibrated threshold with its uncertainty.

    ``threshold_ci`` is a distribution-free 95% interval from binomial order
    statistics; ``achieved_pfa_ci`` is the normal-approximation 95% interval
    of the exceedance rate measured on the held-out half, at a threshold
    learned on the other half.
    """

    threshold: float
    pfa_target: float
    trials: int
    achieved_pfa_ci: tuple
    threshold_ci: tuple
    failures: int = 0
    seed: int = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "pfa_target": self.pfa_target,
            "trials": self.trials,
            "achieved_pfa_ci": list(self.achieved_pfa_ci),
            "threshold_ci": list(self.threshold_ci),
            "failures": self.failures,
            "seed": self.seed,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(threshold=data["threshold"], pfa_target=data["pfa_target"],
                   trials=data["trials"], achieved_pfa_ci=tuple(data["achieved_pfa_ci"]),
                   threshold_ci=tuple(data["threshold_ci"]), failures=data.get("failures", 0),
                   seed=data.get("seed"), metadata=data.get("metadata", {}))


def summarize_null(stats, pfa, failures=0, seed=None, metadata=None):
    """Threshold and confidence intervals from noise-only statistics."""
    stats = np.asarray(stats, dtype=float)
    n = stats.size
    q = 1.0 - pfa
    threshold = empirical_quantile(stats, q)
    srt = np.sort(stats)
    half = 1.96 * np.sqrt(n * q * (1.0 - q))
    lo = int(np.clip(np.floor(n * q - half) - 1, 0, n - 1))
    hi = int(np.clip(np.ceil(n * q + half), 0, n - 1))
    fit, held = stats[0::2], stats[1::2]
    rate = exceedance_rate(held, empirical_quantile(fit, q))
    se = np.sqrt(max(rate * (1.0 - rate), 1e-300) / held.size)
    return CalibrationResult(threshold, pfa, n, (rate - 1.96 * se, rate + 1.96 * se),
                             (float(srt[lo]), float(srt[hi])), failures, seed,
                             dict(metadata or {}))


def calibrate_threshold(spec, estimator, scenario, pfa, trials, seed, workers=1):
    """Learn the ``1 - pfa`` quantile of a detector on clean simulated data.

    Each trial draws a fresh noise-only secondary batch from ``scenario``,
    estimates the covariance with ``estimator`` (a name or a batched
    callable), draws an independent noise-only test vector and evaluates the
    statistic. Trials run in fixed-size blocks with their own random
    substreams, so the result does not depend on ``workers``.

    Raises
    ------
    ConfigurationError
        If ``trials * pfa < 100``.
    CalibrationError
        If the estimator fails on more than 1% of the trials.
    """
    from .simulation import null_statistics

    if not 0.0 < pfa < 1.0:
        raise ConfigurationError(f"pfa must lie in (0, 1), got {pfa}")
    if trials * pfa < 100:
        raise ConfigurationError(
            f"trials * pfa = {trials * pfa:g} < 100; the quantile estimate would be unreliable")
    stats, failures = null_statistics(spec, estimator, scenario, trials, seed, workers=workers)
    if failures > 0.01 * trials:
        raise CalibrationError(
            f"estimator failed on {failures} of {trials} calibration trials (> 1%)")
    return summarize_null(stats, pfa, failures, seed)
