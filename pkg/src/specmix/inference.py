"""Confidence regions for the population-mean coefficient sequence.

Sample splitting doubles the variance, so split fits run with noise_scale=2.
The exported region radius solves a conservative scalar fixed point (the
variance bound can only enlarge the region); simulation coverage instead
evaluates the defining inequality at the true sequence, see simulation.py.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .mixed_model import (
    CovarianceFamily,
    FitConfig,
    fit_iterative_gls,
    select_fixed_set,
    uniform_weights,
)
from .panels import CoefficientPanel
from .shrinkage import ThresholdConfig

RADIUS_CONSTRUCTION = "conservative_fixed_point"

METHOD_KNOWN_V = "asymptotic-known-v"
METHOD_PLUGIN = "asymptotic-plugin"
METHOD_BOOTSTRAP = "bootstrap"


def normal_quantile(alpha):
    """Upper-alpha standard normal quantile z_alpha."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    # Acklam-style inverse via bisection on erfc is overkill; use erfinv identity
    from math import erf

    lo, hi = -40.0, 40.0
    target = 1.0 - 2.0 * alpha
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if erf(mid / math.sqrt(2.0)) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _as_stack(V, T):
    """Normalize per-k covariances: CovarianceFamily or a (T, S, S) stack."""
    if isinstance(V, CovarianceFamily):
        return V
    stack = np.asarray(V, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[0] != T:
        raise ValueError("expected a CovarianceFamily or a (T, S, S) stack")
    return stack


@dataclass(frozen=True)
class SplitPanels:
    """Two independent copies xi1 = Y - X, xi2 = Y + X with doubled variance."""

    xi1: CoefficientPanel
    xi2: CoefficientPanel

    def __post_init__(self):
        if self.xi1.coeffs.shape != self.xi2.coeffs.shape:
            raise ValueError("split halves must share a shape")


def split_sample(Y, V, seed):
    """Draw X_k ~ N(0, V_k) and return (Y - X, Y + X); deterministic in seed."""
    Y = Y.coeffs if isinstance(Y, CoefficientPanel) else np.asarray(Y, dtype=np.float64)
    S, T = Y.shape
    V = _as_stack(V, T)
    rng = np.random.default_rng(_as_seed_sequence(seed))
    if isinstance(V, CovarianceFamily):
        X = V.sample(rng)
    else:
        X = np.empty((S, T))
        for k in range(T):
            evals, evecs = np.linalg.eigh(V[k])
            neg = np.minimum(evals, 0.0)
            if np.linalg.norm(neg) > 1e-6 * max(np.linalg.norm(evals), 1e-300):
                from .errors import NonPSDCovariance

                raise NonPSDCovariance(f"covariance {k} loses too much mass to clipping")
            root = evecs * np.sqrt(np.maximum(evals, 0.0))
            X[:, k] = root @ rng.standard_normal(S)
    return SplitPanels(CoefficientPanel(Y - X), CoefficientPanel(Y + X))


def _diag_sums(V, weights, T):
    """sum_s w_sk V_k[s,s] for every k."""
    W = np.asarray(weights, dtype=np.float64)
    if isinstance(V, CovarianceFamily):
        return V.diagonal_values() * W.sum(axis=0)
    diags = np.einsum("kss->ks", V)
    return np.einsum("sk,ks->k", W, diags)


def risk_estimator(xi2, h_hat, weights, V):
    """Unbiased estimate of ||h - h_hat||^2 from the second split half.

    Subtracts 2 sigma_k^2 per coefficient with sigma_k^2 = sum_s w_sk V_k[s,s],
    the halved trace of the doubled split covariance.
    """
    xi2 = xi2.coeffs if isinstance(xi2, CoefficientPanel) else np.asarray(xi2)
    S, T = xi2.shape
    W = np.asarray(weights, dtype=np.float64)
    V = _as_stack(V, T)
    quad = np.sum(W * (xi2 - h_hat[None, :]) ** 2, axis=0)
    return float(np.sum(quad - 2.0 * _diag_sums(V, W, T)))


def _tau_terms(weights, V, T):
    """Per-k 8||diag(w_k) V_k||_F^2 and w_k' V_k w_k."""
    W = np.asarray(weights, dtype=np.float64)
    if isinstance(V, CovarianceFamily):
        frob = V.weighted_diag_frobenius_sq(W)
        quad = V.quadratic_form(W)
    else:
        frob = np.einsum("sk,kst,kst->k", W**2, V, V)
        quad = np.einsum("sk,kst,tk->k", W, V, W)
    return 8.0 * frob, quad


def risk_variance(h, h_hat, weights, V):
    """tau^2: the variance of the risk estimator at the true sequence h."""
    h = np.asarray(h, dtype=np.float64)
    h_hat = np.asarray(h_hat, dtype=np.float64)
    T = h.size
    V = _as_stack(V, T)
    frob8, quad = _tau_terms(weights, V, T)
    return float(np.sum(frob8 + 8.0 * (h - h_hat) ** 2 * quad))


def radius_fixed_point(risk_hat, A, c, alpha, max_iter=500):
    """Solve s = z_alpha sqrt(A + 8 c s) + max(risk_hat, 0) for s = radius^2.

    Bisection on s; the returned value satisfies the equation to 1e-10.
    """
    if A < 0 or c < 0:
        raise ValueError("A and c must be nonnegative")
    z = normal_quantile(alpha)
    base = max(risk_hat, 0.0)

    def f(s):
        return s - z * math.sqrt(A + 8.0 * c * s) - base

    if f(0.0) >= 0.0:
        return 0.0
    hi = base + 1.0
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("radius bisection failed to bracket")
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if abs(f(mid)) <= 1e-11:
            return mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ConfidenceRegion:
    """L2 ball around the estimated sequence (or curve, in frequency units)."""

    center: np.ndarray
    radius: float
    level: float
    domain: str
    method: str
    seed: int
    diagnostics: dict

    def __post_init__(self):
        arr = np.ascontiguousarray(self.center, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "center", arr)
        if self.domain not in ("coefficient", "frequency"):
            raise ConfigError("domain must be 'coefficient' or 'frequency'")

    def to_frequency(self, basis=None):
        """Rescale to the frequency domain: radius grows by sqrt(T)."""
        if self.domain == "frequency":
            return self
        from . import wavelet

        T = self.center.size
        curve = wavelet.idwt(self.center, basis or wavelet.DEFAULT_BASIS)
        return ConfidenceRegion(
            center=curve,
            radius=self.radius * math.sqrt(T),
            level=self.level,
            domain="frequency",
            method=self.method,
            seed=self.seed,
            diagnostics=dict(self.diagnostics),
        )

    def to_json_dict(self):
        return {
            "center": [float(x) for x in self.center],
            "radius": float(self.radius),
            "level": float(self.level),
            "domain": self.domain,
            "method": self.method,
            "seed": int(self.seed),
            "radius_construction": RADIUS_CONSTRUCTION,
            "diagnostics": {k: float(v) for k, v in self.diagnostics.items()},
        }


def _split_fit_config(fit_cfg):
    return replace(fit_cfg, noise_scale=2.0 * fit_cfg.noise_scale)


def confidence_region(Y, alpha, method, seed, fit_cfg=None, known_family=None):
    """Sample-split confidence region for the mean coefficient sequence.

    known-V mode uses the supplied covariance family for splitting and the
    radius terms; plug-in mode estimates it from a preliminary fit.  OLS
    weights enter the risk terms in both modes.
    """
    if fit_cfg is None:
        fit_cfg = FitConfig(thresholds=ThresholdConfig(fdr_q=0.001))
    Y_arr = Y.coeffs if isinstance(Y, CoefficientPanel) else np.asarray(Y)
    S, T = Y_arr.shape
    if method == METHOD_KNOWN_V:
        if known_family is None:
            raise ConfigError("known-V regions need the covariance family")
        family = known_family
    elif method == METHOD_PLUGIN:
        prelim = fit_iterative_gls(Y_arr, fit_cfg)
        family = prelim.covariance_family()
    else:
        raise ConfigError(f"unsupported asymptotic method {method!r}")

    halves = split_sample(Y_arr, family, seed)
    fit1 = fit_iterative_gls(halves.xi1.coeffs, _split_fit_config(fit_cfg))
    w_ols = uniform_weights(S, T)
    r_hat = risk_estimator(halves.xi2, fit1.h_hat, w_ols, family)
    frob8, quad = _tau_terms(w_ols, family, T)
    A = float(np.sum(frob8))
    c = float(np.max(quad))
    radius_sq = radius_fixed_point(r_hat, A, c, alpha)
    return ConfidenceRegion(
        center=fit1.h_hat,
        radius=math.sqrt(max(radius_sq, 0.0)),
        level=1.0 - alpha,
        domain="coefficient",
        method=method,
        seed=seed,
        diagnostics={"A": A, "c": c, "risk_hat": r_hat},
    )


def bootstrap_refit(panel, weights, thresholds, noise_scale=1.0):
    """Fixed-effects re-estimation used inside the bootstrap loop."""
    K = select_fixed_set(panel, thresholds, noise_scale)
    h = np.sum(weights * panel, axis=0)
    h[~K.mask(panel.shape[1])] = 0.0
    return h


def bootstrap_region(fit, B, alpha, seed, thresholds=None, family=None):
    """Parametric bootstrap region around the fitted sequence.

    Panels are regenerated from the fitted (or supplied) covariance model,
    the fixed-effects estimator is re-run on each, and the radius is the
    empirical (1 - alpha) quantile of ||h*_b - h_hat||.
    """
    if B < 100:
        raise ConfigError("bootstrap needs B >= 100")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    if thresholds is None:
        thresholds = ThresholdConfig(sigma_e2=fit.sigma_e2, fdr_q=0.001)
    family = family if family is not None else fit.covariance_family()
    S, T = family.S, family.T
    evals, evecs = np.linalg.eigh(family.G)
    re_root = np.sqrt(
        np.outer(np.maximum(evals, 0.0), np.asarray(family.sigma_u2))
    )
    noise_sd = math.sqrt(family.noise_var)
    weights = fit.weights
    rng_root = _as_seed_sequence(seed)
    norms = np.empty(B)
    for b, child in enumerate(rng_root.spawn(B)):
        rng = np.random.default_rng(child)
        U = evecs @ (re_root * rng.standard_normal((S, T)))
        eps = noise_sd * rng.standard_normal((S, T))
        panel = fit.h_hat[None, :] + U + eps
        h_star = bootstrap_refit(panel, weights, thresholds, fit.noise_scale)
        norms[b] = np.linalg.norm(h_star - fit.h_hat)
    radius = float(np.quantile(norms, 1.0 - alpha))
    return ConfidenceRegion(
        center=fit.h_hat,
        radius=radius,
        level=1.0 - alpha,
        domain="coefficient",
        method=METHOD_BOOTSTRAP,
        seed=seed,
        diagnostics={"B": float(B), "max_norm": float(norms.max())},
    )
