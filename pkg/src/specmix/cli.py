"""Batch front-end: simulate panels, fit models, predict curves, compute
confidence regions, and run the benchmark / coverage harnesses.

Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 I/O error.
"""

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import wavelet
from .errors import (
    ConfigError,
    PanelFormatError,
    SingularCovariance,
    SizeTooSmall,
    SpecmixError,
    UnstableModel,
    ZeroPowerBin,
    NonPSDCovariance,
    NonPSDScenario,
)
from .inference import (
    METHOD_BOOTSTRAP,
    METHOD_KNOWN_V,
    METHOD_PLUGIN,
    bootstrap_region,
    confidence_region,
)
from .mixed_model import (
    FitConfig,
    ModelFit,
    CorrelationMatrix,
    RandomEffectsCovariance,
    fit_iterative_gls,
    predict_random_effects,
    predict_replicate_spectra,
)
from .panels import (
    CoefficientPanel,
    TimeSeriesPanel,
    read_matrix_binary,
    read_matrix_csv,
    write_matrix_binary,
    write_matrix_csv,
)
from .shrinkage import SIGMA_E2, SelectedSet, ThresholdConfig
from .simulation import (
    ArmaSpec,
    BENCHMARK_METHODS,
    METHOD_LABELS,
    ScenarioConfig,
    run_benchmark,
    run_coverage,
    scenario_truth,
    generate_panel,
)
from .spectral import log_periodogram

_EXIT_CONFIG = 2
_EXIT_NUMERIC = 3
_EXIT_IO = 4

_NUMERIC_ERRORS = (
    UnstableModel,
    ZeroPowerBin,
    SingularCovariance,
    NonPSDCovariance,
    NonPSDScenario,
    ArithmeticError,
    np.linalg.LinAlgError,
)


def config_hash(obj):
    """SHA-256 over the canonical JSON encoding of a config mapping."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("SPECMIX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"SPECMIX_THREADS={env!r} is not an integer") from exc
    return 1


def _scenario_from_args(args):
    kind = {"block": "block", "contour": "contour", "identity": "identity"}[
        args.scenario
    ]
    return ScenarioConfig(
        S=args.S,
        T=args.T,
        C=args.C,
        J_max=args.J,
        g_s_kind=kind,
        vanishing_moments=args.wavelet_moments,
        seed=args.seed,
    )


def _scenario_echo(cfg):
    mean = cfg.mean_model
    mean_echo = (
        {"phi": list(mean.phi), "theta": list(mean.theta), "sigma_w2": mean.sigma_w2}
        if isinstance(mean, ArmaSpec)
        else [float(x) for x in np.asarray(mean)]
    )
    return {
        "S": cfg.S,
        "T": cfg.T,
        "mean_model": mean_echo,
        "C": cfg.C,
        "J_max": cfg.J_max,
        "g_s_kind": cfg.g_s_kind,
        "vanishing_moments": cfg.vanishing_moments,
        "seed": cfg.seed,
    }


def _write_json(path, payload):
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)


def _warn_hash(expected, found, what):
    if expected and found and expected != found:
        print(
            f"warning: {what} config hash {found[:12]} does not match "
            f"expected {expected[:12]}",
            file=sys.stderr,
        )


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    cfg = _scenario_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    panel, truth = generate_panel(cfg)
    echo = _scenario_echo(cfg)
    digest = config_hash(echo)

    time_labels = list(range(1, panel.n_time + 1))
    csv_path = os.path.join(args.out, "panel.csv")
    bin_path = os.path.join(args.out, "panel.bin")
    write_matrix_csv(csv_path, panel.data, time_labels)
    write_matrix_binary(bin_path, panel.data)
    truth_payload = {
        "h": [float(x) for x in truth.h],
        "h_f": [float(x) for x in truth.h_f],
        "K_h": [int(k) for k in truth.K_h],
        "sigma_u2": [float(x) for x in truth.sigma_u2],
        "K_u": [int(k) for k in truth.K_u],
        "G_S": [float(x) for x in truth.G_S.ravel()],
        "config": echo,
        "config_hash": digest,
    }
    _write_json(os.path.join(args.out, "truth.json"), truth_payload)
    _write_json(
        os.path.join(args.out, "manifest.json"),
        {
            "config": echo,
            "config_hash": digest,
            "seed": cfg.seed,
            "files": ["panel.csv", "panel.bin", "truth.json"],
        },
    )
    print(f"wrote panel ({panel.n_replicates}x{panel.n_time}) to {args.out}")
    return 0


def _load_panel_matrix(path):
    if path.endswith(".bin"):
        return read_matrix_binary(path)
    matrix, _ = read_matrix_csv(path)
    return matrix


def _load_manifest_hash(panel_path):
    manifest = os.path.join(os.path.dirname(panel_path) or ".", "manifest.json")
    if os.path.exists(manifest):
        try:
            return _read_json(manifest).get("config_hash")
        except (OSError, json.JSONDecodeError):
            return None
    return None


def _fit_config(args):
    thresholds = ThresholdConfig(
        sigma_e2=args.sigma_e2,
        k_h=getattr(args, "k_h", None),
        fdr_q=None if getattr(args, "k_h", None) else args.fdr_q,
    )
    return FitConfig(
        thresholds=thresholds,
        delta=args.delta,
        max_iter=args.max_iter,
        tol=args.tol,
        weights_mode=args.weights_mode,
        weight_ridge=args.weight_ridge,
    )


def fit_to_json_dict(fit, config_echo=None, seed=None):
    return {
        "h_hat": [float(x) for x in fit.h_hat],
        "K_h": [int(k) for k in fit.K_h.indices],
        "sigma_u2": [float(x) for x in fit.re_cov.sigma_u2],
        "K_u": [int(k) for k in fit.re_cov.K_u.indices],
        "G_S": [float(x) for x in fit.re_cov.G_S.entries.ravel()],
        "G_S_psd": bool(fit.re_cov.G_S.psd_certified),
        "weights_mode": fit.weights_mode,
        "iterations": fit.iterations,
        "converged": bool(fit.converged),
        "delta": fit.delta,
        "sigma_e2": fit.sigma_e2,
        "noise_scale": fit.noise_scale,
        "config": config_echo or {},
        "seed": seed,
    }


def fit_from_json_dict(payload):
    T = len(payload["h_hat"])
    S = int(round(math.sqrt(len(payload["G_S"]))))
    G = np.asarray(payload["G_S"], dtype=np.float64).reshape(S, S)
    min_eig = float(np.linalg.eigvalsh(G).min())
    re_cov = RandomEffectsCovariance(
        sigma_u2=np.asarray(payload["sigma_u2"], dtype=np.float64),
        K_u=SelectedSet(np.asarray(payload["K_u"], dtype=np.int64), math.nan),
        G_S=CorrelationMatrix(G, bool(payload.get("G_S_psd", True)), min_eig),
    )
    from .mixed_model import uniform_weights

    return ModelFit(
        h_hat=np.asarray(payload["h_hat"], dtype=np.float64),
        K_h=SelectedSet(np.asarray(payload["K_h"], dtype=np.int64), math.nan),
        re_cov=re_cov,
        weights=uniform_weights(S, T),
        weights_mode=payload["weights_mode"],
        iterations=int(payload["iterations"]),
        converged=bool(payload["converged"]),
        delta=float(payload["delta"]),
        sigma_e2=float(payload["sigma_e2"]),
        noise_scale=float(payload.get("noise_scale", 1.0)),
    )


def _panel_to_coeffs(matrix, moments):
    basis = wavelet.WaveletBasisSpec(vanishing_moments=moments)
    panel = TimeSeriesPanel(matrix)
    Y = wavelet.dwt(log_periodogram(panel).values, basis)
    return CoefficientPanel(Y), basis


def cmd_fit(args):
    matrix = _load_panel_matrix(args.panel)
    _warn_hash(args.expect_hash, _load_manifest_hash(args.panel), "panel")
    coeffs, basis = _panel_to_coeffs(matrix, args.wavelet_moments)
    cfg = _fit_config(args)
    fit = fit_iterative_gls(coeffs.coeffs, cfg)
    echo = {
        "sigma_e2": args.sigma_e2,
        "fdr_q": args.fdr_q,
        "k_h": args.k_h,
        "delta": args.delta,
        "max_iter": args.max_iter,
        "tol": args.tol,
        "weights_mode": args.weights_mode,
        "weight_ridge": args.weight_ridge,
        "wavelet_moments": args.wavelet_moments,
    }
    payload = fit_to_json_dict(fit, echo, seed=None)
    payload["config_hash"] = config_hash(echo)
    _write_json(args.out, payload)
    if args.emit_plot_data:
        curve = wavelet.idwt(fit.h_hat, basis)
        T = curve.size
        freqs = np.arange(T) / (2.0 * T)
        write_matrix_csv(
            args.emit_plot_data, np.vstack([freqs, curve]), list(range(T))
        )
    print(
        f"fit: selected {fit.K_h.size} mean coefficients, "
        f"{fit.re_cov.K_u.size} variance components, "
        f"iterations={fit.iterations} converged={fit.converged}"
    )
    return 0


def cmd_predict(args):
    matrix = _load_panel_matrix(args.panel)
    coeffs, basis = _panel_to_coeffs(matrix, args.wavelet_moments)
    fit = fit_from_json_dict(_read_json(args.model))
    if fit.h_hat.size != coeffs.n_coeff:
        raise ConfigError(
            f"model T={fit.h_hat.size} does not match panel T={coeffs.n_coeff}"
        )
    U = predict_random_effects(coeffs.coeffs, fit)
    curves = predict_replicate_spectra(fit, U, basis, exponentiate=args.exponentiate)
    T = curves.shape[1]
    freqs = [f"{l / (2.0 * T)}" for l in range(T)]
    write_matrix_csv(args.out, curves, freqs)
    print(f"wrote {curves.shape[0]} predicted curves to {args.out}")
    return 0


def cmd_confidence(args):
    matrix = _load_panel_matrix(args.panel)
    coeffs, _ = _panel_to_coeffs(matrix, args.wavelet_moments)
    method = {
        "known-v": METHOD_KNOWN_V,
        "plugin": METHOD_PLUGIN,
        "bootstrap": METHOD_BOOTSTRAP,
    }[args.method]
    fit_cfg = _fit_config(args)
    if method == METHOD_BOOTSTRAP:
        fit = fit_iterative_gls(coeffs.coeffs, fit_cfg)
        region = bootstrap_region(
            fit, args.bootstrap_B, args.alpha, args.seed,
            thresholds=fit_cfg.thresholds,
        )
    elif method == METHOD_KNOWN_V:
        raise ConfigError(
            "known-V regions need simulation truth; use the coverage harness"
        )
    else:
        region = confidence_region(
            coeffs.coeffs, args.alpha, method, args.seed, fit_cfg=fit_cfg
        )
    if args.domain == "frequency":
        region = region.to_frequency(
            wavelet.WaveletBasisSpec(vanishing_moments=args.wavelet_moments)
        )
    _write_json(args.out, region.to_json_dict())
    if args.emit_plot_data:
        T = region.center.size
        freqs = np.arange(T) / (2.0 * T)
        radius_row = np.full(T, region.radius)
        write_matrix_csv(
            args.emit_plot_data,
            np.vstack([freqs, region.center, radius_row]),
            list(range(T)),
        )
    print(f"{args.method} region: radius={region.radius:.6g} level={region.level}")
    return 0


def _preset_scenarios():
    presets = {}
    for kind in ("block", "contour"):
        for S in (32, 64, 128):
            for T in (512, 1024):
                presets[f"table1-{kind}-S{S}-T{T}"] = ("benchmark", kind, S, T, None)
        for S in (64, 128):
            for T in (512, 1024):
                for alpha in (0.05, 0.1):
                    a = f"{alpha}".replace("0.", "")
                    for method in ("known", "plugin", "bootstrap"):
                        presets[f"table2-{kind}-S{S}-T{T}-a{a}-{method}"] = (
                            "coverage",
                            kind,
                            S,
                            T,
                            (alpha, method),
                        )
    return presets


PRESETS = _preset_scenarios()


def _benchmark_rows(result):
    rows = []
    for method in result.methods:
        for metric in ("ase_h", "ase_g_t", "ase_g_s"):
            st = result.stat(method, metric)
            rows.append(
                {
                    "method": METHOD_LABELS.get(method, method),
                    "metric": metric,
                    "mean": st.mean,
                    "se": st.se,
                    "M": result.M,
                }
            )
    return rows


def cmd_benchmark(args):
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        what, kind, S, T, _ = PRESETS[args.preset]
        if what != "benchmark":
            raise ConfigError(f"preset {args.preset!r} is a coverage preset")
        cfg = ScenarioConfig(S=S, T=T, g_s_kind=kind, seed=args.seed)
    else:
        cfg = _scenario_from_args(args)
    methods = tuple(args.methods.split(",")) if args.methods else BENCHMARK_METHODS
    result = run_benchmark(cfg, methods=methods, M=args.M, threads=_threads(args))
    rows = _benchmark_rows(result)
    header = ["method", "metric", "mean", "se", "M"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(
                [row["method"], row["metric"], repr(row["mean"]), repr(row["se"]),
                 str(row["M"])]
            )
        )
    csv_text = "\n".join(lines) + "\n"
    with open(args.out, "w", encoding="ascii", newline="\n") as fh:
        fh.write(csv_text)
    echo = _scenario_echo(cfg)
    payload = {
        "config": echo,
        "config_hash": config_hash(echo),
        "M": result.M,
        "methods": list(result.methods),
        "rows": rows,
        "runtime_s": result.runtime_s,
    }
    if args.per_rep:
        payload["per_rep"] = {
            f"{m}:{metric}": [float(x) for x in result.stat(m, metric).values]
            for m in result.methods
            for metric in ("ase_h", "ase_g_t", "ase_g_s")
        }
    _write_json(args.out + ".json", payload)
    for row in rows:
        if row["metric"] == "ase_h":
            print(f"{row['method']:18s} ASE(h^f) = {row['mean']:.4f} ({row['se']:.4f})")
    return 0


def cmd_coverage(args):
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        what, kind, S, T, extra = PRESETS[args.preset]
        if what != "coverage":
            raise ConfigError(f"preset {args.preset!r} is a benchmark preset")
        alpha, method_key = extra
        method = {
            "known": METHOD_KNOWN_V,
            "plugin": METHOD_PLUGIN,
            "bootstrap": METHOD_BOOTSTRAP,
        }[method_key]
        cfg = ScenarioConfig(S=S, T=T, g_s_kind=kind, seed=args.seed)
    else:
        cfg = _scenario_from_args(args)
        alpha = args.alpha
        method = {
            "known-v": METHOD_KNOWN_V,
            "plugin": METHOD_PLUGIN,
            "bootstrap": METHOD_BOOTSTRAP,
        }[args.method]
    result = run_coverage(
        cfg, method, alpha, args.M, B=args.bootstrap_B, threads=_threads(args)
    )
    echo = _scenario_echo(cfg)
    payload = {
        "config": echo,
        "config_hash": config_hash(echo),
        "alpha": result.alpha,
        "method": result.method,
        "M": result.M,
        "coverage": result.coverage,
        "binomial_se": result.se,
    }
    _write_json(args.out, payload)
    print(
        f"coverage[{result.method}, alpha={result.alpha}] = "
        f"{result.coverage:.3f} +/- {result.se:.3f} (M={result.M})"
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common_fit_options(p):
    p.add_argument("--sigma-e2", dest="sigma_e2", type=float, default=SIGMA_E2)
    p.add_argument("--fdr-q", dest="fdr_q", type=float, default=0.001)
    p.add_argument("--k-h", dest="k_h", type=int, default=None,
                   help="non-adaptive selection with known sparsity")
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--weights-mode", dest="weights_mode",
                   choices=("ols", "gls"), default="gls")
    p.add_argument("--weight-ridge", dest="weight_ridge", type=float, default=0.0)
    p.add_argument("--wavelet-moments", dest="wavelet_moments", type=int, default=6)


def _add_scenario_options(p):
    p.add_argument("--scenario", choices=("block", "contour", "identity"),
                   default="block")
    p.add_argument("--S", type=int, default=32)
    p.add_argument("--T", type=int, default=512)
    p.add_argument("--C", type=float, default=0.5)
    p.add_argument("--J", type=int, default=4)
    p.add_argument("--wavelet-moments", dest="wavelet_moments", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="specmix",
        description="Mixed-effects spectral estimation for replicated time series",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="worker pool cap (or SPECMIX_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a replicated panel")
    _add_scenario_options(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the mixed model to a panel")
    p.add_argument("--panel", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--expect-hash", dest="expect_hash", default=None)
    p.add_argument("--emit-plot-data", dest="emit_plot_data", default=None)
    _add_common_fit_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict replicate-specific curves")
    p.add_argument("--panel", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exponentiate", action="store_true")
    p.add_argument("--wavelet-moments", dest="wavelet_moments", type=int, default=6)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("confidence", help="confidence region for the mean curve")
    p.add_argument("--panel", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=("plugin", "bootstrap", "known-v"),
                   default="plugin")
    p.add_argument("--domain", choices=("coefficient", "frequency"),
                   default="coefficient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bootstrap-B", dest="bootstrap_B", type=int, default=1000)
    p.add_argument("--emit-plot-data", dest="emit_plot_data", default=None)
    _add_common_fit_options(p)
    p.set_defaults(func=cmd_confidence)

    p = sub.add_parser("benchmark", help="Monte-Carlo estimation benchmark")
    _add_scenario_options(p)
    p.add_argument("--preset", default=None)
    p.add_argument("--methods", default=None,
                   help="comma list: ols,nonadaptive,adaptive-0.1,adaptive-0.001,oracle")
    p.add_argument("--M", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--per-rep", dest="per_rep", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("coverage", help="confidence-region coverage harness")
    _add_scenario_options(p)
    p.add_argument("--preset", default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--method", choices=("known-v", "plugin", "bootstrap"),
                   default="known-v")
    p.add_argument("--M", type=int, default=200)
    p.add_argument("--bootstrap-B", dest="bootstrap_B", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_coverage)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except SizeTooSmall as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC
    except (OSError, PanelFormatError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return _EXIT_IO
    except SpecmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
