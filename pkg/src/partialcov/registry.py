"""Name-based access to the estimators, for the CLI and the Monte-Carlo harness.

Names: ``scm pscm burg pburg tyler ptyler bt pbt cg_cov pcg_cov`` and
``pm_est:<weight>`` with ``<weight>`` one of ``gaussian``, ``tyler`` or
``huber<T>`` (e.g. ``pm_est:huber8``). ``known`` is the oracle estimator that
returns the true inverse covariance.
"""

import re
from dataclasses import replace

import numpy as np

from .errors import ConfigurationError
from .estimators import burg_batch, burg_multisegment, scm, toeplitz_inverse_batch, trench_inverse
from .numerics import pd_inverse_batch
from .partial import (
    EstimateReport,
    GAUSSIAN,
    gaussian_loglik,
    huber_weight,
    p_bt,
    p_tyler,
    partial_burg,
    partial_scm,
    pbt_batch,
    pburg_batch,
    pcg_batch,
    pcg_cov,
    pm_est,
    pm_est_batch,
    pscm_batch,
    ptyler_batch,
    tyler_weight,
)

ESTIMATOR_NAMES = ("scm", "pscm", "burg", "pburg", "tyler", "ptyler", "bt", "pbt",
                   "cg_cov", "pcg_cov")

# estimators that ignore the partial order and always use every sample
_FULL = {"scm": "pscm", "tyler": "ptyler", "bt": "pbt", "cg_cov": "pcg_cov"}

_PM = re.compile(r"^pm_est:(gaussian|tyler|huber(\d+(\.\d*)?))$")


def parse_weight(spec, d):
    m = _PM.match(spec)
    if not m:
        raise ConfigurationError(f"unknown estimator {spec!r}")
    if m.group(1) == "gaussian":
        return GAUSSIAN
    if m.group(1) == "tyler":
        return tyler_weight(d)
    return huber_weight(float(m.group(2)))


def check_name(name):
    if name in ESTIMATOR_NAMES or name == "known" or _PM.match(name):
        return name
    raise ConfigurationError(
        f"unknown estimator {name!r}; expected one of {', '.join(ESTIMATOR_NAMES)}, "
        "pm_est:<gaussian|tyler|huberT>")


def is_partial(name):
    return name.startswith("p") and name not in ("known",)


def _resolve(name, cfg):
    if name in _FULL:
        return _FULL[name], replace(cfg, p=1.0)
    return name, cfg


def estimate(name, samples, cfg, **options):
    """Run a named estimator on one ``(N, d)`` batch and return its report."""
    check_name(name)
    X = np.asarray(samples)
    if name == "burg":
        model = burg_multisegment(X)
        inv = trench_inverse(model)
        n = X.shape[0]
        return EstimateReport(inv, "inverse", np.arange(n), 1, True,
                              gaussian_loglik(np.linalg.inv(inv), X, n, sigma_inv=inv),
                              model=model)
    if name == "known":
        raise ConfigurationError("the 'known' estimator is only available in simulations")
    base, cfg = _resolve(name, cfg)
    bias = options.get("bias_correct", False)
    if base == "pscm":
        return partial_scm(X, cfg, bias_correct=bias)
    if base == "pburg":
        return partial_burg(X, cfg, bias_correct=bias)
    if base == "ptyler":
        return p_tyler(X, cfg)
    if base == "pbt":
        return p_bt(X, cfg)
    if base == "pcg_cov":
        return pcg_cov(X, cfg)
    return pm_est(parse_weight(base, X.shape[-1]), X, cfg)


def batch_estimator(name, cfg, true_inverse=None):
    """Return ``f(X) -> (inverse, ok)`` for ``(B, N, d)`` stacks.

    The returned inverse matrices may carry an arbitrary positive scale for
    shape estimators; every detector used with them is calibrated on the
    same estimator.
    """
    check_name(name)
    if name == "known":
        if true_inverse is None:
            raise ConfigurationError("the 'known' estimator needs the true covariance")

        def known(X):
            b = X.shape[0]
            return np.broadcast_to(true_inverse, (b,) + true_inverse.shape), np.ones(b, bool)

        return known
    if name == "burg":

        def burg(X):
            s2, mu, power = burg_batch(X)
            ok = power > 0
            return toeplitz_inverse_batch(np.where(ok, s2, 1.0), mu), ok

        return burg
    if name == "scm":

        def full_scm(X):
            return pd_inverse_batch(scm(X))

        return full_scm
    base, cfg = _resolve(name, cfg)
    engines = {"pscm": pscm_batch, "pburg": pburg_batch, "ptyler": ptyler_batch,
               "pbt": pbt_batch, "pcg_cov": pcg_batch}
    if base in engines:
        engine = engines[base]

        def run(X):
            res = engine(X, cfg)
            return res.inverse(), ~res.failed

        return run

    def run_pm(X):
        res = pm_est_batch(X, parse_weight(base, X.shape[-1]), cfg)
        return res.inverse(), ~res.failed

    return run_pm

