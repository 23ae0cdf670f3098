"""Ground-truth generation, scenario builders, and the Monte-Carlo harness.

Panels are synthesized through discrete Cramer representations: replicate
transfer functions exp((h^f + U_s^f)/2) modulate conjugate-symmetric complex
Gaussian amplitudes, so the log-periodogram noise is exactly log(chi2_2/2)
plus the bias correction at interior bins.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import wavelet
from .errors import ConfigError, NonPSDScenario, SizeTooSmall
from .inference import (
    METHOD_BOOTSTRAP,
    METHOD_KNOWN_V,
    METHOD_PLUGIN,
    bootstrap_region,
    normal_quantile,
    risk_estimator,
    risk_variance,
    split_sample,
)
from .mixed_model import (
    CovarianceFamily,
    FitConfig,
    fit_iterative_gls,
    fit_with_known_weights,
    uniform_weights,
)
from .panels import CoefficientPanel, TimeSeriesPanel
from .shrinkage import SIGMA_E2, ThresholdConfig, fdr_select
from .spectral import arma_log_spectrum, arma_transfer, log_periodogram

BENCHMARK_METHODS = ("ols", "nonadaptive", "adaptive-0.1", "adaptive-0.001", "oracle")
METHOD_LABELS = {
    "ols": "OLS",
    "nonadaptive": "Non-adaptive",
    "adaptive-0.1": "Adapt. (q=0.1)",
    "adaptive-0.001": "Adapt. (q=0.001)",
    "oracle": "Oracle (q=0.001)",
}


@dataclass(frozen=True)
class ArmaSpec:
    """Benchmark mean model; the default is the hard-to-estimate ARMA(2,2)."""

    phi: tuple = (-0.2, -0.9)
    theta: tuple = (0.0, 1.0)
    sigma_w2: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    S: int = 32
    T: int = 512
    mean_model: object = ArmaSpec()
    C: float = 0.5
    J_max: int = 4
    g_s_kind: str = "block"
    g_s_explicit: np.ndarray | None = None
    vanishing_moments: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.S < 1:
            raise ConfigError("S must be >= 1")
        if self.T < 2 or self.T & (self.T - 1):
            raise ConfigError("T must be a dyadic integer >= 2")
        if self.C < 0:
            raise ConfigError("C must be nonnegative")
        if not 0 <= self.J_max <= int(math.log2(self.T)):
            raise ConfigError("J_max must lie in 0..log2(T)")
        if self.g_s_kind not in ("identity", "block", "contour", "explicit"):
            raise ConfigError(f"unknown correlation kind {self.g_s_kind!r}")
        if self.g_s_kind == "explicit" and self.g_s_explicit is None:
            raise ConfigError("explicit correlation kind needs g_s_explicit")

    @property
    def basis(self):
        return wavelet.WaveletBasisSpec(vanishing_moments=self.vanishing_moments)


@dataclass(frozen=True)
class GroundTruth:
    """Deterministic scenario truth plus the per-draw random effects."""

    h: np.ndarray
    h_f: np.ndarray
    K_h: np.ndarray
    sigma_u2: np.ndarray
    K_u: np.ndarray
    G_S: np.ndarray
    U: np.ndarray | None = None

    @property
    def k_h(self):
        return int(self.K_h.size)


def truth_variance_components(C, J_max, K_h, T):
    """Scale-decaying variance components restricted to K_u = coarse K_h."""
    if C < 0:
        raise ConfigError("C must be nonnegative")
    mask_h = np.zeros(T, dtype=bool)
    mask_h[np.asarray(K_h, dtype=np.int64) - 1] = True
    scales = wavelet.scales_of_indices(T)
    in_u = mask_h & (scales < J_max)
    sigma = np.zeros(T)
    sigma[in_u] = C * np.power(2.0, -(scales[in_u].astype(np.float64)) - 2.0)
    if in_u[0]:
        sigma[0] = C
    return sigma


def block_diag_correlation(S):
    """Single block of rho = 0.9 on the first S/2 replicates."""
    if S < 2 or S % 2:
        raise ConfigError("block-diagonal correlation needs even S >= 2")
    G = np.eye(S)
    half = S // 2
    G[:half, :half] = 0.9
    np.fill_diagonal(G, 1.0)
    return G


def contour_correlation(S):
    """Layers of 8x8 blocks with correlation {1 - (block index)^2 / S}_+."""
    if S < 16 or S & (S - 1):
        raise SizeTooSmall("contour correlation needs dyadic S >= 16")
    nb = S // 8
    G = np.eye(S)

    def blk(i, j):
        return slice(8 * (i - 1), 8 * i), slice(8 * (j - 1), 8 * j)

    for j in range(2, nb + 1):
        v = max(0.0, 1.0 - j * j / S)
        for i in range(1, j):
            G[blk(i, j)] = v
            G[blk(j, i)] = v
        rows, cols = blk(j, j)
        block = np.full((8, 8), v)
        np.fill_diagonal(block, 1.0)
        G[rows, cols] = block
    G[blk(1, 1)] = G[blk(2, 2)]
    return G


def scenario_correlation(cfg):
    if cfg.g_s_kind == "identity":
        return np.eye(cfg.S)
    if cfg.g_s_kind == "block":
        return block_diag_correlation(cfg.S)
    if cfg.g_s_kind == "contour":
        return contour_correlation(cfg.S)
    G = np.asarray(cfg.g_s_explicit, dtype=np.float64)
    if G.shape != (cfg.S, cfg.S):
        raise ConfigError("explicit correlation matrix has wrong shape")
    return G


def scenario_truth(cfg):
    """Deterministic part of the scenario: mean curve, sparsity, variances."""
    basis = cfg.basis
    if isinstance(cfg.mean_model, ArmaSpec):
        h_f_raw = arma_log_spectrum(
            cfg.mean_model.phi, cfg.mean_model.theta, cfg.mean_model.sigma_w2, cfg.T
        )
    else:
        h_f_raw = np.asarray(cfg.mean_model, dtype=np.float64)
        if h_f_raw.shape != (cfg.T,):
            raise ConfigError("explicit mean curve must have length T")
    h_raw = wavelet.dwt(h_f_raw, basis)
    h, K_h = wavelet.sparsify(h_raw, 1.0 / cfg.T)
    h_f = wavelet.idwt(h, basis)
    sigma_u2 = truth_variance_components(cfg.C, cfg.J_max, K_h, cfg.T)
    K_u = np.flatnonzero(sigma_u2 > 0.0) + 1
    G = scenario_correlation(cfg)
    return GroundTruth(h=h, h_f=h_f, K_h=K_h, sigma_u2=sigma_u2, K_u=K_u, G_S=G)


def _nyquist_amplitude(cfg, truth, u_f_last):
    """Transfer gain at omega = 1/2: analytic for ARMA means, else extended."""
    if isinstance(cfg.mean_model, ArmaSpec):
        gain = arma_transfer(
            cfg.mean_model.phi,
            cfg.mean_model.theta,
            cfg.mean_model.sigma_w2,
            np.asarray([0.5]),
        )[0]
        mean_amp = math.sqrt(gain)
    else:
        mean_amp = math.exp(truth.h_f[-1] / 2.0)
    return mean_amp * np.exp(u_f_last / 2.0)


def generate_panel(cfg, seed=None, truth=None):
    """Algorithm-style synthesis of one replicated panel plus its truth record.

    Deterministic in (cfg, seed); identical seeds give bit-identical panels.
    """
    if truth is None:
        truth = scenario_truth(cfg)
    seed = cfg.seed if seed is None else seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    rng = np.random.default_rng(seed)
    S, T = cfg.S, cfg.T
    basis = cfg.basis

    U = np.zeros((S, T))
    mask_u = np.zeros(T, dtype=bool)
    mask_u[truth.K_u - 1] = True
    if mask_u.any():
        try:
            L = np.linalg.cholesky(truth.G_S + 1e-12 * np.eye(S))
        except np.linalg.LinAlgError as exc:
            raise NonPSDScenario("scenario correlation is not PSD") from exc
        Z = rng.standard_normal((S, int(mask_u.sum())))
        U[:, mask_u] = (L @ Z) * np.sqrt(truth.sigma_u2[mask_u])[None, :]

    U_f = wavelet.idwt(U, basis) if mask_u.any() else np.zeros((S, T))
    log_amp = truth.h_f[None, :] + U_f
    A = np.exp(0.5 * log_amp)
    A_nyq = _nyquist_amplitude(cfg, truth, U_f[:, -1])

    # conjugate-symmetric complex Gaussian amplitudes with E|xi|^2 = 1
    xi0 = rng.standard_normal(S)
    xiT = rng.standard_normal(S)
    re = rng.standard_normal((S, T - 1)) / math.sqrt(2.0)
    im = rng.standard_normal((S, T - 1)) / math.sqrt(2.0)

    Z = np.zeros((S, 2 * T), dtype=np.complex128)
    Z[:, 0] = A[:, 0] * xi0
    Z[:, 1:T] = A[:, 1:] * (re + 1j * im)
    Z[:, T] = A_nyq * xiT
    Z[:, T + 1 :] = np.conj(Z[:, 1:T][:, ::-1])

    X = math.sqrt(2.0 * T) * np.fft.ifft(Z, axis=1)
    if float(np.max(np.abs(X.imag))) > 1e-8:
        raise ArithmeticError("synthesis produced a non-real series")
    panel = TimeSeriesPanel(np.ascontiguousarray(X.real))
    return panel, replace(truth, U=U)


# ---------------------------------------------------------------------------
# benchmark harness


def _ase_curve(h_hat, truth, basis):
    diff = wavelet.idwt(h_hat, basis) - truth.h_f
    return float(np.mean(diff**2))


def _ase_g_t(sigma_u2_hat, truth):
    return float(np.mean((sigma_u2_hat - truth.sigma_u2) ** 2))


def _ase_g_s(G_hat, truth):
    diff = G_hat - truth.G_S
    return float(np.mean(diff**2))


def _fit_ols_average(Y, sigma_e2, q=0.001):
    """Per-replicate FDR smoothing, then averaging the smoothed sequences."""
    S, T = Y.shape
    scale = math.sqrt(T / sigma_e2)
    smoothed = np.zeros_like(Y)
    for s in range(S):
        sel = fdr_select(Y[s] * scale, 1.0, q)
        mask = sel.mask(T)
        smoothed[s, mask] = Y[s, mask]
    return smoothed.mean(axis=0)


def _method_fit(method, Y, truth, cfg, sigma_e2):
    """Returns (h_hat, sigma_u2_hat or None, G_hat or None)."""
    T = cfg.T
    if method == "ols":
        return _fit_ols_average(Y, sigma_e2), None, None
    if method == "nonadaptive":
        thresholds = ThresholdConfig(sigma_e2=sigma_e2, k_h=truth.k_h)
        fit = fit_iterative_gls(Y, FitConfig(thresholds=thresholds))
    elif method.startswith("adaptive-"):
        q = float(method.split("-", 1)[1])
        thresholds = ThresholdConfig(sigma_e2=sigma_e2, fdr_q=q)
        fit = fit_iterative_gls(Y, FitConfig(thresholds=thresholds))
    elif method == "oracle":
        family = CovarianceFamily(truth.sigma_u2, truth.G_S, sigma_e2 / T)
        weights = family.gls_weight_matrix()
        thresholds = ThresholdConfig(sigma_e2=sigma_e2, fdr_q=0.001)
        fit = fit_with_known_weights(Y, weights, FitConfig(thresholds=thresholds))
    else:
        raise ConfigError(f"unknown benchmark method {method!r}")
    return fit.h_hat, fit.re_cov.sigma_u2, fit.re_cov.G_S.entries


@dataclass(frozen=True)
class MetricStat:
    mean: float
    se: float
    values: np.ndarray


@dataclass(frozen=True)
class BenchmarkResult:
    methods: tuple
    metrics: dict
    M: int
    runtime_s: dict
    config: ScenarioConfig

    def stat(self, method, metric):
        return self.metrics[(method, metric)]


def _rep_seed(root, rep):
    return np.random.SeedSequence(root, spawn_key=(rep,))


def _run_indexed(n, fn, threads=1):
    """Evaluate fn(i) for i in range(n), preserving index order in the output."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def run_benchmark(cfg, methods=BENCHMARK_METHODS, M=100, sigma_e2=SIGMA_E2,
                  threads=1, panel_hook=None):
    """Monte-Carlo average squared errors for the requested methods.

    Standard errors are sigma_hat / sqrt(M) from the stored per-repetition
    values; aggregation order is independent of scheduling.
    """
    if M < 2:
        raise ConfigError("benchmark needs M >= 2")
    truth0 = scenario_truth(cfg)
    basis = cfg.basis
    runtimes = {m: 0.0 for m in methods}
    values = {(m, metric): np.zeros(M) for m in methods
              for metric in ("ase_h", "ase_g_t", "ase_g_s")}

    def one_rep(rep):
        if panel_hook is not None:
            Y, truth = panel_hook(rep, truth0)
            Y = np.asarray(Y, dtype=np.float64)
        else:
            seed = _rep_seed(cfg.seed, rep)
            panel, truth = generate_panel(cfg, seed=seed, truth=truth0)
            Y = wavelet.dwt(log_periodogram(panel).values, basis)
        out = {}
        for method in methods:
            tic = time.perf_counter()
            h_hat, s2_hat, G_hat = _method_fit(method, Y, truth, cfg, sigma_e2)
            elapsed = time.perf_counter() - tic
            ase_h = _ase_curve(h_hat, truth, basis)
            ase_gt = _ase_g_t(s2_hat, truth) if s2_hat is not None else math.nan
            ase_gs = _ase_g_s(G_hat, truth) if G_hat is not None else math.nan
            out[method] = (ase_h, ase_gt, ase_gs, elapsed)
        return out

    results = _run_indexed(M, one_rep, threads)
    for rep, out in enumerate(results):
        for method, (ase_h, ase_gt, ase_gs, elapsed) in out.items():
            values[(method, "ase_h")][rep] = ase_h
            values[(method, "ase_g_t")][rep] = ase_gt
            values[(method, "ase_g_s")][rep] = ase_gs
            runtimes[method] += elapsed

    metrics = {}
    for key, vals in values.items():
        if np.all(np.isnan(vals)):
            metrics[key] = MetricStat(math.nan, math.nan, vals)
        else:
            metrics[key] = MetricStat(
                float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(M)), vals
            )
    return BenchmarkResult(tuple(methods), metrics, M, runtimes, cfg)


# ---------------------------------------------------------------------------
# coverage harness


@dataclass(frozen=True)
class CoverageResult:
    coverage: float
    se: float
    M: int
    alpha: float
    method: str
    config: ScenarioConfig
    hits: np.ndarray = field(repr=False, default=None)


def _coverage_rep(rep, cfg, truth0, method, alpha, sigma_e2, B, radius_override):
    basis = cfg.basis
    seed = _rep_seed(cfg.seed, rep)
    panel, truth = generate_panel(cfg, seed=seed, truth=truth0)
    Y = wavelet.dwt(log_periodogram(panel).values, basis)
    S, T = Y.shape
    z_alpha = normal_quantile(alpha)
    thresholds = ThresholdConfig(sigma_e2=sigma_e2, fdr_q=0.001)
    base_cfg = FitConfig(thresholds=thresholds)
    split_seed = np.random.SeedSequence(cfg.seed, spawn_key=(rep, 1))
    w_ols = uniform_weights(S, T)

    if method == METHOD_BOOTSTRAP:
        fit = fit_iterative_gls(Y, base_cfg)
        family = CovarianceFamily(truth.sigma_u2, truth.G_S, sigma_e2 / T)
        region = bootstrap_region(
            fit, B, alpha, split_seed, thresholds=thresholds, family=family
        )
        err = float(np.linalg.norm(truth.h - fit.h_hat))
        radius = region.radius if radius_override is None else radius_override
        return err <= radius

    if method == METHOD_KNOWN_V:
        family = CovarianceFamily(truth.sigma_u2, truth.G_S, sigma_e2 / T)
    elif method == METHOD_PLUGIN:
        prelim = fit_iterative_gls(Y, base_cfg)
        family = prelim.covariance_family()
    else:
        raise ConfigError(f"unknown coverage method {method!r}")

    halves = split_sample(Y, family, split_seed)
    fit1 = fit_iterative_gls(
        halves.xi1.coeffs, replace(base_cfg, noise_scale=2.0)
    )
    err_sq = float(np.sum((truth.h - fit1.h_hat) ** 2))
    if radius_override is not None:
        return err_sq <= radius_override**2
    r_hat = risk_estimator(halves.xi2, fit1.h_hat, w_ols, family)
    tau = math.sqrt(risk_variance(truth.h, fit1.h_hat, w_ols, family))
    return err_sq <= z_alpha * tau + r_hat


def run_coverage(cfg, method, alpha, M, sigma_e2=SIGMA_E2, B=1000, threads=1,
                 radius_override=None):
    """Empirical coverage of the level-(1-alpha) region over M repetitions.

    Asymptotic methods evaluate the region's defining inequality at the true
    sequence (the set is implicit in the variance of the risk estimator);
    the bootstrap compares the estimation error to its explicit radius.
    """
    if M < 1:
        raise ConfigError("coverage needs M >= 1")
    truth0 = scenario_truth(cfg)

    def one_rep(rep):
        return _coverage_rep(
            rep, cfg, truth0, method, alpha, sigma_e2, B, radius_override
        )

    hits = np.asarray(_run_indexed(M, one_rep, threads), dtype=bool)
    coverage = float(np.mean(hits))
    se = math.sqrt(max(coverage * (1.0 - coverage), 1e-300) / M)
    return CoverageResult(coverage, se, M, alpha, method, cfg, hits)
