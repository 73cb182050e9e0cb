"""Command-line interface.

Subcommands: ``estimate``, ``calibrate``, ``simulate``, ``bias`` and
``generate``. Exit codes: 0 ok (non-convergence only warns), 1 internal,
2 input/parse (also singular data), 3 configuration, 4 combinatorial budget.
"""

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import replace

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .detection import CalibrationResult, DetectorSpec, calibrate_threshold
from .errors import ConfigurationError, PartialCovError
from .estimators import scm
from .io import format_float, read_samples, write_matrix, write_samples
from .numerics import pd_inverse, scale_bias
from .partial import (
    PartialConfig,
    elliptical_loglik,
    exact_partial_oracle,
    gaussian_loglik,
    p_bt,
    p_tyler,
    partial_burg,
)
from .registry import check_name, estimate
from .simulation import (
    GENERATOR_STREAM,
    Scenario,
    SimulationError,
    _block_rng,
    config_hash,
    gen_noise,
    gen_target,
    run_scenario,
)

CSV_COLUMNS = ("sinr_db", "n_outliers", "pd", "ci_lo", "ci_hi", "trials")


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _partial_config(cfg):
    return PartialConfig(p=cfg["p"], k_max=cfg["k_max"], epsilon=cfg["epsilon"],
                         ordering_mode=cfg["ordering_mode"])


def _scenario(cfg, n_outliers=0, trials=None):
    return Scenario(
        d=cfg["d"], n=cfg["n"],
        steering=None if cfg["steering"] is None else tuple(map(_tuple, cfg["steering"])),
        sinr_grid=tuple(float(v) for v in cfg["sinr_grid"]),
        n_outliers=n_outliers, p=cfg["p"], pfa=cfg["pfa"],
        trials=trials or cfg["trials"], seed=cfg["seed"],
        noise_mu=None if cfg["noise_mu"] is None else tuple(map(_tuple, cfg["noise_mu"])),
        outlier_sinr_db=cfg["outlier_sinr_db"], k_max=cfg["k_max"], epsilon=cfg["epsilon"],
        data_scale=cfg["data_scale"], block_size=cfg["block_size"])


def _tuple(v):
    return tuple(v) if isinstance(v, list) else v


def _json_dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg):
    os.makedirs(cfg["out"], exist_ok=True)
    return cfg["out"]


# keys that do not influence results are left out of the run hash
_UNHASHED = ("workers", "out", "force")


def run_hash(cfg):
    return config_hash({k: v for k, v in cfg.items() if k not in _UNHASHED})


def _stamp(cfg):
    return f"seed={cfg['seed']} config_hash={run_hash(cfg)}"


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

_FULL_FIT = PartialConfig(p=1.0, k_max=500, epsilon=1e-14)


def _oracle_setup(name):
    """``(base, loglik)`` for the exhaustive reference, matching each estimator's objective."""
    def inverse_gaussian(inv, Xs, n):
        return gaussian_loglik(pd_inverse(inv), Xs, n, sigma_inv=inv)

    def shape(inv, Xs, n):
        return elliptical_loglik(inv, Xs, n)

    if name == "pscm":
        return scm, gaussian_loglik
    if name == "pburg":
        return (lambda X: partial_burg(X, _FULL_FIT).matrix), inverse_gaussian
    if name == "ptyler":
        return (lambda X: p_tyler(X, _FULL_FIT).matrix), shape
    if name == "pbt":
        return (lambda X: p_bt(X, _FULL_FIT).matrix), shape
    raise ConfigurationError(f"--oracle is available for pscm, pburg, ptyler and pbt, not {name!r}")


def cmd_estimate(cfg):
    if "input" not in cfg:
        raise ConfigurationError("estimate needs an input sample file (--input)")
    name = check_name(cfg["estimator"])
    pcfg = _partial_config(cfg)
    X = read_samples(cfg["input"], cfg["field"])
    report = estimate(name, X, pcfg, bias_correct=cfg["bias_correct"])
    if not report.converged:
        _warn(f"{name} did not converge within k_max={pcfg.k_max} iterations; "
              "reporting the last iterate")
    out = _out_dir(cfg)
    stamp = _stamp(cfg)
    write_matrix(os.path.join(out, "covariance.csv"), report.covariance(), [stamp])
    write_matrix(os.path.join(out, "inverse.csv"), report.inverse(), [stamp])
    meta = {
        "estimator": name,
        "p": pcfg.p,
        "n": int(X.shape[0]),
        "d": int(X.shape[1]),
        "selected": [int(i) for i in report.selected],
        "iterations": report.iterations,
        "converged": report.converged,
        "partial_loglik": report.partial_loglik,
        "bias_factor": report.bias_factor,
        "seed": cfg["seed"],
        "config_hash": run_hash(cfg),
    }
    if report.model is not None:
        meta["model"] = {"sigma2": report.model.sigma2,
                         "mu": [[float(m.real), float(m.imag)] for m in report.model.mu]}
    if cfg["oracle"]:
        base, loglik = _oracle_setup(name)
        idx, _, value = exact_partial_oracle(base, loglik, X, pcfg.p, budget=cfg["oracle_budget"])
        meta["oracle"] = {
            "selected": [int(i) for i in idx],
            "partial_loglik": value,
            "gap": value - report.partial_loglik,
        }
    _json_dump(os.path.join(out, "report.json"), meta)
    print(json.dumps({k: meta[k] for k in ("estimator", "iterations", "converged",
                                          "partial_loglik")}))
    return 0


# ---------------------------------------------------------------------------
# calibrate / simulate
# ---------------------------------------------------------------------------

def calibration_hash(cfg, scenario):
    return config_hash({
        "estimator": cfg["estimator"],
        "detector": cfg["detector"],
        "pfa": cfg["pfa"],
        "scenario": scenario.calibration_key(),
    })


def cmd_calibrate(cfg):
    name = check_name(cfg["estimator"])
    trials = cfg["calibration_trials"]
    if trials * cfg["pfa"] < 100:
        raise ConfigurationError(
            f"calibration_trials * pfa = {trials * cfg['pfa']:g} < 100; raise the trial count")
    scenario = _scenario(cfg)
    spec = DetectorSpec(cfg["detector"], scenario.steering_vector())
    if spec.kind == "glr_cg":
        _warn("glr_cg is an experimental stand-in statistic")
    result = calibrate_threshold(spec, name, scenario, cfg["pfa"], trials, cfg["seed"],
                                 workers=cfg["workers"])
    result.metadata = {
        "estimator": name,
        "detector": spec.kind,
        "experimental": spec.kind == "glr_cg",
        "scenario": scenario.calibration_key(),
        "scenario_hash": calibration_hash(cfg, scenario),
        "config_hash": run_hash(cfg),
    }
    out = _out_dir(cfg)
    path = os.path.join(out, "threshold.json")
    _json_dump(path, result.to_dict())
    print(json.dumps({"threshold": result.threshold, "file": path}))
    return 0


def _write_curves(path, curves, cfg):
    with open(path, "w") as fh:
        fh.write(f"# {_stamp(cfg)} estimator={cfg['estimator']} detector={cfg['detector']}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for curve in curves:
            for s, m, pd, lo, hi, t in curve.rows():
                fh.write(",".join([format_float(s), str(m), format_float(pd), format_float(lo),
                                   format_float(hi), str(t)]) + "\n")


def cmd_simulate(cfg):
    name = check_name(cfg["estimator"])
    if "threshold_file" not in cfg:
        # fall back to the file calibrate leaves in the same output directory
        default = os.path.join(cfg["out"], "threshold.json")
        if not os.path.exists(default):
            raise ConfigurationError(
                "simulate needs a calibrated threshold file (--threshold-file)")
        cfg = {**cfg, "threshold_file": default}
    try:
        with open(cfg["threshold_file"]) as fh:
            cal = CalibrationResult.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigurationError(f"cannot read threshold file: {exc}") from None
    base = _scenario(cfg)
    expected = calibration_hash(cfg, base)
    if cal.metadata.get("scenario_hash") != expected:
        if not cfg["force"]:
            raise ConfigurationError(
                "threshold file was calibrated for a different estimator/detector/scenario "
                "(hash mismatch); recalibrate or pass --force")
        _warn("using a threshold calibrated for a different configuration (--force)")
    if any(m > cfg["n"] for m in cfg["outliers"]):
        raise ConfigurationError("outlier counts cannot exceed n")
    spec = DetectorSpec(cfg["detector"], base.steering_vector(), cal.threshold)
    out = _out_dir(cfg)
    start = time.perf_counter()
    curves = []
    status = 0
    for m in cfg["outliers"]:
        try:
            curves.append(run_scenario(replace(base, n_outliers=m), name, spec,
                                       workers=cfg["workers"]))
        except SimulationError as exc:
            _warn(f"{exc}; partial results kept")
            if exc.partial is not None:
                curves.append(exc.partial)
            status = exc.exit_code
            break
    _write_curves(os.path.join(out, "curves.csv"), curves, cfg)
    manifest = {
        "parameters": cfg,
        "seed": cfg["seed"],
        "config_hash": run_hash(cfg),
        "threshold": cal.threshold,
        "threshold_file": cfg["threshold_file"],
        "versions": {"partialcov": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "wall_time_s": time.perf_counter() - start,
        "complete": status == 0,
    }
    _json_dump(os.path.join(out, "manifest.json"), manifest)
    return status


# ---------------------------------------------------------------------------
# bias / generate
# ---------------------------------------------------------------------------

def cmd_bias(cfg):
    print("d,c_k,p_eff,b,correction")
    for d in cfg["bias_d"]:
        for c in cfg["bias_c_k"]:
            for p in cfg["bias_p"]:
                b = scale_bias(d, c, p)
                print(f"{d},{c},{p:g},{b:.10f},{p / b:.10f}")
    return 0


def cmd_generate(cfg):
    """Write a simulated secondary batch (optionally with outliers) as a sample CSV."""
    scenario = _scenario(cfg)
    rng = _block_rng(cfg["seed"], GENERATOR_STREAM, 0, 0)
    n = cfg["n_samples"]
    X = gen_noise(scenario.d, n, scenario.noise_model(), rng)
    m = cfg["outliers"][0] if cfg["outliers"] else 0
    if m > n:
        raise ConfigurationError("outlier count cannot exceed n_samples")
    if m:
        sinr = cfg["outlier_sinr_db"] if cfg["outlier_sinr_db"] is not None else 20.0
        X[:m] += gen_target(scenario.steering_vector(), sinr, rng, (m,))
    X = X * scenario.data_scale
    out = _out_dir(cfg)
    path = os.path.join(out, "samples.csv")
    write_samples(path, X, [_stamp(cfg)])
    print(json.dumps({"file": path, "n": n, "d": scenario.d, "outliers": m}))
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "bias": cmd_bias,
    "generate": cmd_generate,
}


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="partialcov", description="Partial (outlier-rejecting) covariance estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--estimator")
    common.add_argument("-p", "--p", type=float, dest="p", help="partial order")
    common.add_argument("--k-max", type=int, dest="k_max")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--ordering-mode", choices=("set", "order"), dest="ordering_mode")
    common.add_argument("--d", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--detector", choices=("mf", "nmf", "glr_cg"))
    common.add_argument("--pfa", type=float)
    common.add_argument("--outliers", type=_int_list, help="comma-separated outlier counts")
    common.add_argument("--sinr-grid", type=_float_list, dest="sinr_grid")
    common.add_argument("--outlier-sinr-db", type=float, dest="outlier_sinr_db")

    p = sub.add_parser("estimate", parents=[common], help="estimate a covariance from samples")
    p.add_argument("--input")
    p.add_argument("--field", choices=("complex", "real"))
    p.add_argument("--oracle", action="store_true", default=None,
                   help="also run the exhaustive subset search and report the gap")
    p.add_argument("--bias-correct", action="store_true", default=None, dest="bias_correct")

    p = sub.add_parser("calibrate", parents=[common], help="learn a detection threshold")
    p.add_argument("--trials", type=int, dest="calibration_trials")

    p = sub.add_parser("simulate", parents=[common], help="detection-probability sweep")
    p.add_argument("--trials", type=int)
    p.add_argument("--threshold-file", dest="threshold_file")
    p.add_argument("--force", action="store_true", default=None)

    p = sub.add_parser("bias", parents=[common], help="print the scale-bias table")
    p.add_argument("--bias-d", type=_int_list, dest="bias_d")
    p.add_argument("--bias-c-k", type=_int_list, dest="bias_c_k")
    p.add_argument("--bias-p", type=_float_list, dest="bias_p")

    p = sub.add_parser("generate", parents=[common], help="write simulated samples")
    p.add_argument("--n-samples", type=int, dest="n_samples")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except PartialCovError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
