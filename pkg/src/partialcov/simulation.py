"""Scenario generation and Monte-Carlo detection-probability sweeps.

Randomness is organised in fixed-size trial blocks. Every block draws from
its own substream keyed by ``(seed, purpose, curve, block)``, so results do
not depend on the number of workers or on scheduling. Within a Pd run the
draws do not depend on the outlier count either: curves for different
outlier counts share their noise (common random numbers), which makes the
loss between them much less noisy than independent runs would.
"""

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .detection import statistic
from .errors import ConfigurationError, PartialCovError
from .estimators import ToeplitzModel, reverse_levinson
from .partial import PartialConfig

__all__ = [
    "Scenario",
    "DetectionCurve",
    "SimulationError",
    "ramp_steering",
    "gen_noise",
    "gen_target",
    "null_statistics",
    "run_scenario",
    "wilson_interval",
]

CALIBRATION_STREAM = 1
DETECTION_STREAM = 2
GENERATOR_STREAM = 3

DEFAULT_GRID = tuple(float(v) for v in range(-5, 26, 2))


class SimulationError(PartialCovError):
    """Too many estimator failures; ``partial`` holds the curve computed so far."""

    exit_code = 1

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def ramp_steering(d, freq=0.2):
    """Unit-norm constant-modulus steering vector with a linear phase ramp."""
    return np.exp(2j * np.pi * freq * np.arange(d)) / np.sqrt(d)


def _as_mu(noise_mu):
    if noise_mu is None:
        return None
    vals = []
    for v in noise_mu:
        vals.append(complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v))
    return np.array(vals, dtype=complex)


@dataclass(frozen=True)
class Scenario:
    """Desk-scale version of the single-channel outlier experiment.

    ``noise_mu`` selects the noise model: ``None`` for white noise, else the
    d-1 reflection coefficients of a unit-residual-power Toeplitz model
    (complex values may be given as ``[re, im]`` pairs). ``outlier_sinr_db``
    fixes the outlier power; by default outliers follow the swept SiNR.
    ``data_scale`` multiplies every generated sample.
    """

    d: int = 8
    n: int = 22
    steering: tuple = None
    sinr_grid: tuple = DEFAULT_GRID
    n_outliers: int = 0
    p: float = 0.75
    pfa: float = 1e-2
    trials: int = 20000
    seed: int = 0
    noise_mu: tuple = None
    outlier_sinr_db: float = None
    k_max: int = 100
    epsilon: float = 1e-8
    data_scale: float = 1.0
    block_size: int = 1000

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ConfigurationError("d and n must be positive")
        if not 0 <= self.n_outliers <= self.n:
            raise ConfigurationError(f"n_outliers must lie in [0, {self.n}]")
        if not np.all(np.isfinite(self.sinr_grid)):
            raise ConfigurationError("sinr_grid must be finite")
        if self.trials < 1 or self.block_size < 1:
            raise ConfigurationError("trials and block_size must be positive")
        if not 0.0 < self.pfa < 1.0:
            raise ConfigurationError("pfa must lie in (0, 1)")
        if not self.data_scale > 0:
            raise ConfigurationError("data_scale must be positive")
        if self.noise_mu is not None:
            mu = _as_mu(self.noise_mu)
            if mu.shape != (self.d - 1,):
                raise ConfigurationError(f"noise_mu needs {self.d - 1} reflection coefficients")
            ToeplitzModel(1.0, mu)
        PartialConfig(self.p, self.k_max, self.epsilon)

    def steering_vector(self):
        if self.steering is None:
            return ramp_steering(self.d)
        s = _as_mu(self.steering)
        if s.shape != (self.d,):
            raise ConfigurationError(f"steering needs {self.d} entries")
        return s / np.linalg.norm(s)

    def partial_config(self):
        return PartialConfig(p=self.p, k_max=self.k_max, epsilon=self.epsilon)

    def noise_model(self):
        return _as_mu(self.noise_mu)

    def true_covariance(self):
        mu = self.noise_model()
        R = np.eye(self.d, dtype=complex) if mu is None else reverse_levinson(ToeplitzModel(1.0, mu))
        return R * self.data_scale ** 2

    def calibration_key(self):
        """Fields a threshold depends on (the outlier setup and grid excluded)."""
        keys = ("d", "n", "steering", "p", "noise_mu", "k_max", "epsilon", "data_scale",
                "block_size")
        return {k: _jsonable(getattr(self, k)) for k in keys}

    def to_dict(self):
        return {k: _jsonable(v) for k, v in asdict(self).items()}


def _jsonable(v):
    if isinstance(v, (tuple, list, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    return v


def config_hash(obj):
    """Stable SHA-256 of a JSON-serialisable object."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _block_rng(seed, stream, curve, block):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, curve, block)))


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def gen_noise(d, n, model, rng, size=()):
    """Circular complex gaussian noise, shape ``size + (n, d)``.

    ``model`` is ``None`` (white, identity covariance) or an array of d-1
    reflection coefficients; the Toeplitz case colours white draws with the
    Cholesky factor of the unit-residual-power covariance.
    """
    Z = _cn(rng, tuple(size) + (n, d))
    if model is None or (isinstance(model, str) and model == "white"):
        return Z
    mu = np.asarray(model, dtype=complex)
    L = np.linalg.cholesky(reverse_levinson(ToeplitzModel(1.0, mu)))
    return Z @ L.T


def gen_target(s, sinr_db, rng, size=()):
    """Target ``alpha * s`` with ``alpha ~ CN(0, 10**(sinr_db / 10))``."""
    s = np.asarray(s)
    alpha = _cn(rng, tuple(size)) * np.sqrt(10.0 ** (sinr_db / 10.0))
    return alpha[..., None] * s


def _resolve_estimator(estimator, scenario):
    if callable(estimator):
        return estimator
    from .registry import batch_estimator

    true_inv = None
    if estimator == "known":
        true_inv = np.linalg.inv(scenario.true_covariance())
    return batch_estimator(estimator, scenario.partial_config(), true_inverse=true_inv)


def _block_sizes(trials, block):
    return [min(block, trials - start) for start in range(0, trials, block)]


def _null_block(args):
    spec, estimator, scenario, seed, block, size = args
    est = _resolve_estimator(estimator, scenario)
    rng = _block_rng(seed, CALIBRATION_STREAM, 0, block)
    c = scenario.data_scale
    X = c * gen_noise(scenario.d, scenario.n, scenario.noise_model(), rng, (size,))
    x = c * gen_noise(scenario.d, 1, scenario.noise_model(), rng, (size,))[:, 0]
    inv, ok = est(X)
    stats = statistic(spec.kind, spec.steering, inv[ok], x[ok])
    return stats, int(np.sum(~ok))


def _map(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def null_statistics(spec, estimator, scenario, trials, seed, workers=1):
    """Noise-only statistics for ``trials`` calibration trials.

    Returns ``(stats, failures)``; failed trials are dropped from ``stats``.
    """
    sizes = _block_sizes(trials, scenario.block_size)
    jobs = [(spec, estimator, scenario, seed, b, size) for b, size in enumerate(sizes)]
    out = _map(_null_block, jobs, workers)
    stats = np.concatenate([o[0] for o in out])
    return stats, sum(o[1] for o in out)


def wilson_interval(successes, trials, z=1.96):
    """Wilson score interval for a binomial proportion."""
    successes = np.asarray(successes, dtype=float)
    trials = np.asarray(trials, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = successes / trials
        denom = 1.0 + z ** 2 / trials
        centre = (p + z ** 2 / (2 * trials)) / denom
        half = z * np.sqrt(p * (1 - p) / trials + z ** 2 / (4 * trials ** 2)) / denom
    return np.clip(centre - half, 0, 1), np.clip(centre + half, 0, 1)


@dataclass
class DetectionCurve:
    """Per-SiNR detection probabilities for one (estimator, detector, outlier count)."""

    sinr_db: np.ndarray
    detections: np.ndarray
    trials: np.ndarray
    failures: np.ndarray
    n_outliers: int
    metadata: dict = field(default_factory=dict)

    @property
    def pd(self):
        return self.detections / np.maximum(self.trials, 1)

    @property
    def ci(self):
        return wilson_interval(self.detections, self.trials)

    def rows(self):
        lo, hi = self.ci
        return [
            (float(s), int(self.n_outliers), float(p), float(a), float(b), int(t))
            for s, p, a, b, t in zip(self.sinr_db, self.pd, lo, hi, self.trials)
        ]


def _pd_block(args):
    scenario, estimator, spec, curve, block, size = args
    est = _resolve_estimator(estimator, scenario)
    rng = _block_rng(scenario.seed, DETECTION_STREAM, curve, block)
    d, n, m = scenario.d, scenario.n, scenario.n_outliers
    model = scenario.noise_model()
    s = spec.steering
    c = scenario.data_scale
    noise = gen_noise(d, n, model, rng, (size,))
    z_out = _cn(rng, (size, n))
    x_noise = gen_noise(d, 1, model, rng, (size,))[:, 0]
    z_tgt = _cn(rng, (size,))
    grid = np.asarray(scenario.sinr_grid, dtype=float)
    det = np.zeros(grid.size, dtype=np.int64)
    valid = np.zeros(grid.size, dtype=np.int64)
    fail = np.zeros(grid.size, dtype=np.int64)

    def contaminated(sinr):
        X = noise.copy()
        if m:
            amp = np.sqrt(10.0 ** (sinr / 10.0))
            X[:, :m] += amp * z_out[:, :m, None] * s
        return c * X

    shared = None
    if m == 0 or scenario.outlier_sinr_db is not None:
        shared = est(contaminated(scenario.outlier_sinr_db or 0.0))
    for i, sinr in enumerate(grid):
        inv, ok = shared if shared is not None else est(contaminated(sinr))
        x = c * (x_noise + np.sqrt(10.0 ** (sinr / 10.0)) * z_tgt[:, None] * s)
        stat = statistic(spec.kind, s, inv[ok], x[ok])
        det[i] = int(np.sum(stat > spec.threshold))
        valid[i] = int(np.sum(ok))
        fail[i] = int(np.sum(~ok))
    return det, valid, fail


def run_scenario(scenario, estimator, detector, curve_index=0, workers=1):
    """Detection probability against SiNR for one outlier count.

    Per trial: N - n_outliers noise samples and n_outliers noise-plus-target
    samples (targets at the swept SiNR unless ``outlier_sinr_db`` is set)
    form the secondary batch; the covariance estimated from it feeds the
    detector, applied to a noise-plus-target test vector.

    Raises
    ------
    ConfigurationError
        If the detector has no threshold.
    SimulationError
        If more than 5% of the trials fail at some grid point; the partial
        curve is attached.
    """
    if detector.threshold is None:
        raise ConfigurationError("detector threshold must be calibrated before a Pd run")
    sizes = _block_sizes(scenario.trials, scenario.block_size)
    jobs = [(scenario, estimator, detector, curve_index, b, size)
            for b, size in enumerate(sizes)]
    out = _map(_pd_block, jobs, workers)
    det = sum(o[0] for o in out)
    valid = sum(o[1] for o in out)
    fail = sum(o[2] for o in out)
    meta = {
        "estimator": estimator if isinstance(estimator, str) else getattr(estimator, "__name__", "custom"),
        "detector": detector.kind,
        "threshold": detector.threshold,
        "seed": scenario.seed,
        "scenario_hash": config_hash(scenario.to_dict()),
    }
    curve = DetectionCurve(np.asarray(scenario.sinr_grid, dtype=float), det, valid, fail,
                           scenario.n_outliers, meta)
    total = valid + fail
    if np.any(fail > 0.05 * total):
        raise SimulationError(
            f"estimator failed on more than 5% of trials at some SiNR "
            f"(worst: {int(fail.max())} of {int(total.max())})", partial=curve)
    return curve
