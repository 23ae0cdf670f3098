"""Core estimation: thresholded OLS/GLS fixed effects, variance components,
between-replicate correlation with nearest-correlation repair and rescaling,
the iterative GLS driver, and BLUP prediction.

Covariances are never densified per coefficient unless asked: the family
V_k = sigma_uk^2 * G_S + (sigma_e^2/T) * I is handled through a single
eigendecomposition of G_S.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    EmptyRandomEffectSet,
    NonPSDCovariance,
    SingularCovariance,
)
from .panels import CoefficientPanel
from .shrinkage import (
    SIGMA_E2,
    SelectedSet,
    ThresholdConfig,
    admissible_scale_mask,
    fdr_select,
    norm_cdf,
    norm_pdf,
    universal_threshold_h,
    universal_threshold_u,
    variance_statistics,
)


def _as_matrix(Y):
    if isinstance(Y, CoefficientPanel):
        return Y.coeffs
    return np.atleast_2d(np.asarray(Y, dtype=np.float64))


def _spd_solve(V, b, what="covariance"):
    """Cholesky solve with a single ridge retry before failing."""
    V = np.asarray(V, dtype=np.float64)
    for ridge in (0.0, 1e-10):
        try:
            L = np.linalg.cholesky(V if ridge == 0.0 else V + ridge * np.eye(len(V)))
        except np.linalg.LinAlgError:
            continue
        y = np.linalg.solve(L, b)
        return np.linalg.solve(L.T, y)
    raise SingularCovariance(f"{what} factorization failed twice")


def gls_weights(V):
    """Weights minimizing w'Vw subject to sum(w) = 1 (one solve V x = 1)."""
    V = np.asarray(V, dtype=np.float64)
    ones = np.ones(V.shape[0])
    x = _spd_solve(V, ones)
    total = float(ones @ x)
    if total <= 0 or not np.isfinite(total):
        raise SingularCovariance("GLS normalization is not positive")
    return x / total


@dataclass(frozen=True)
class CorrelationMatrix:
    """S x S symmetric unit-diagonal matrix with a PSD certificate."""

    entries: np.ndarray
    psd_certified: bool
    min_eigenvalue: float
    converged: bool = True

    def __post_init__(self):
        arr = np.ascontiguousarray(self.entries, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def size(self):
        return self.entries.shape[0]

    @classmethod
    def identity(cls, S):
        return cls(np.eye(S), True, 1.0, True)


@dataclass(frozen=True)
class RandomEffectsCovariance:
    """Diagonal within-replicate variances plus between-replicate correlation."""

    sigma_u2: np.ndarray
    K_u: SelectedSet
    G_S: CorrelationMatrix

    def __post_init__(self):
        arr = np.ascontiguousarray(self.sigma_u2, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "sigma_u2", arr)


class CovarianceFamily:
    """The per-coefficient covariances V_k = sigma_uk^2 G_S + noise_var I."""

    def __init__(self, sigma_u2, G_S, noise_var):
        self.sigma_u2 = np.asarray(sigma_u2, dtype=np.float64)
        entries = G_S.entries if isinstance(G_S, CorrelationMatrix) else np.asarray(G_S)
        self.G = np.asarray(entries, dtype=np.float64)
        self.noise_var = float(noise_var)
        if self.noise_var <= 0:
            raise ConfigError("noise variance must be positive")
        evals, evecs = np.linalg.eigh(self.G)
        if evals.min() < -1e-6:
            raise ConfigError(
                f"correlation matrix is not PSD (min eigenvalue {evals.min():.3g})"
            )
        # projection / roundoff residue up to -1e-6 is clipped so every V_k is
        # exactly positive definite with min eigenvalue >= noise_var
        self._evals = np.maximum(evals, 0.0)
        self._evecs = evecs
        self._ones_coords = evecs.T @ np.ones(self.G.shape[0])

    @property
    def S(self):
        return self.G.shape[0]

    @property
    def T(self):
        return self.sigma_u2.size

    def matrix(self, k):
        """Dense V_k for 1-based coefficient index k (clipped spectrum)."""
        s2 = self.sigma_u2[k - 1]
        G_psd = (self._evecs * self._evals) @ self._evecs.T
        return s2 * G_psd + self.noise_var * np.eye(self.S)

    def diagonal_values(self):
        """Common diagonal entry of each V_k (G_S has unit diagonal)."""
        return self.sigma_u2 + self.noise_var

    def _spectra(self):
        # (S, T): eigenvalues of every V_k in the shared eigenbasis
        return np.outer(self._evals, self.sigma_u2) + self.noise_var

    def gls_weight_matrix(self):
        """S x T matrix of GLS weights for every coefficient."""
        spectra = self._spectra()
        if np.any(spectra <= 0):
            raise SingularCovariance("covariance family is not positive definite")
        x = self._evecs @ (self._ones_coords[:, None] / spectra)
        totals = x.sum(axis=0)
        if np.any(totals <= 0):
            raise SingularCovariance("GLS normalization is not positive")
        return x / totals

    def sample(self, rng, max_clip_mass=1e-6):
        """One S x T draw with columns X_k ~ N(0, V_k), via symmetric roots."""
        spectra = self._spectra()
        neg = np.minimum(spectra, 0.0)
        if neg.any():
            clipped = math.sqrt(float(np.sum(neg**2)))
            total = math.sqrt(float(np.sum(spectra**2)))
            if clipped > max_clip_mass * total:
                raise NonPSDCovariance(
                    "negative eigenvalue mass exceeds tolerance in sampling"
                )
        root = np.sqrt(np.maximum(spectra, 0.0))
        Z = rng.standard_normal((self.S, self.T))
        return self._evecs @ (root * (self._evecs.T @ Z))

    def quadratic_form(self, weights):
        """w_k' V_k w_k for every k; weights is S x T."""
        W = np.asarray(weights, dtype=np.float64)
        wGw = np.einsum("st,si,it->t", W, self.G, W, optimize=True)
        return self.sigma_u2 * wGw + self.noise_var * np.sum(W * W, axis=0)

    def weighted_diag_frobenius_sq(self, weights):
        """||diag(w_k) V_k||_F^2 for every k; weights is S x T."""
        W2 = np.asarray(weights, dtype=np.float64) ** 2
        row_sq = np.sum(self.G * self.G, axis=1)
        w2_norm = W2.sum(axis=0)
        term1 = (self.sigma_u2**2) * (row_sq @ W2)
        term2 = (2.0 * self.sigma_u2 * self.noise_var + self.noise_var**2) * w2_norm
        return term1 + term2

    def ones_quadratic(self):
        """(1/S) 1' V_k 1 for every k (the Lemma-style variance scale)."""
        ones_G_ones = float(np.sum(self.G))
        return (self.sigma_u2 * ones_G_ones + self.noise_var * self.S) / self.S


def uniform_weights(S, T):
    return np.full((S, T), 1.0 / S)


def estimate_fixed_effects(Y, weights, K_h):
    """h_k = w_k' Y_k on the selected set, zero elsewhere."""
    Y = _as_matrix(Y)
    W = np.asarray(weights, dtype=np.float64)
    h = np.sum(W * Y, axis=0)
    h[~K_h.mask(Y.shape[1])] = 0.0
    return h


def select_fixed_set(Y, cfg, noise_scale=1.0):
    """Scale-restricted selection of nonzero mean coefficients.

    Non-adaptive mode thresholds column means at the universal threshold;
    adaptive mode runs FDR on means standardized to unit noise variance.
    """
    Y = _as_matrix(Y)
    S, T = Y.shape
    sig_e2 = cfg.sigma_e2 * noise_scale
    means = Y.mean(axis=0)
    admissible = admissible_scale_mask(T, cfg.scale_cutoff_alpha)
    if cfg.k_h is not None:
        lam = universal_threshold_h(S, T, cfg.k_h, sig_e2)
        mask = (np.abs(means) >= lam) & admissible
        return SelectedSet.from_mask(mask, lam)
    z = means * math.sqrt(S * T / sig_e2)
    selected = fdr_select(z, 1.0, cfg.fdr_q)
    mask = selected.mask(T) & admissible
    return SelectedSet.from_mask(mask, selected.threshold_used)


def estimate_variance_components(Y, h_hat, cfg, K_h=None, noise_scale=1.0):
    """Thresholded positive-part sample variances about h_hat.

    Returns (sigma_u2, K_u) with K_u restricted to K_h when given.
    """
    Y = _as_matrix(Y)
    S, T = Y.shape
    sig_e2 = cfg.sigma_e2 * noise_scale
    stats = variance_statistics(Y, h_hat, sig_e2)
    lam_u = universal_threshold_u(S, T)
    mask = np.abs(stats) >= lam_u
    if K_h is not None:
        mask &= K_h.mask(T)
    ssq = np.mean((Y - h_hat[None, :]) ** 2, axis=0)
    sigma_u2 = np.where(mask, np.maximum(ssq - sig_e2 / T, 0.0), 0.0)
    return sigma_u2, SelectedSet.from_mask(mask, lam_u)


def estimate_between_correlation(Y, h_hat, sigma_u2, K_u, delta):
    """Eq-style sample correlations averaged over the selected coefficients.

    Off-diagonals are clamped to [-1, 1]; the diagonal is set to one.  The
    denominator is floored at delta so it stays bounded away from zero.
    """
    if delta <= 0:
        raise ConfigError("delta must be positive")
    Y = _as_matrix(Y)
    S, T = Y.shape
    mask = K_u.mask(T)
    k_u = int(mask.sum())
    if k_u == 0:
        raise EmptyRandomEffectSet("no selected variance components")
    R = Y[:, mask] - h_hat[mask][None, :]
    denom = np.maximum(np.asarray(sigma_u2)[mask], delta)
    M = (R / denom) @ R.T / k_u
    M = 0.5 * (M + M.T)
    np.clip(M, -1.0, 1.0, out=M)
    np.fill_diagonal(M, 1.0)
    return M


def _finish_correlation(Y, converged):
    """PSD projection plus diagonal congruence: exactly PSD, unit diagonal."""
    Y = 0.5 * (Y + Y.T)
    evals, evecs = np.linalg.eigh(Y)
    Y = (evecs * np.maximum(evals, 0.0)) @ evecs.T
    d = np.sqrt(np.clip(np.diag(Y), 1e-300, None))
    Y = Y / np.outer(d, d)
    Y = 0.5 * (Y + Y.T)
    np.fill_diagonal(Y, 1.0)
    min_eig = float(np.linalg.eigvalsh(Y).min())
    return CorrelationMatrix(Y, min_eig >= -1e-8, min_eig, converged)


def _nearest_correlation_dykstra(M, tol=1e-8, max_iter=200):
    """Alternating projections with Dykstra correction (reference engine)."""
    Y = M.copy()
    dS = np.zeros_like(M)
    converged = False
    for _ in range(max_iter):
        R = Y - dS
        evals, evecs = np.linalg.eigh(0.5 * (R + R.T))
        X = (evecs * np.maximum(evals, 0.0)) @ evecs.T
        dS = X - R
        Y_new = X.copy()
        np.fill_diagonal(Y_new, 1.0)
        delta = float(np.linalg.norm(Y_new - Y))
        Y = Y_new
        if delta <= tol:
            converged = True
            break
    return _finish_correlation(Y, converged)


def _nearest_correlation_dual(M, gtol=1e-8, max_eval=300, y0=None):
    """Dual ascent for the same projection: far fewer eigendecompositions.

    The nearest correlation matrix is X* = P_psd(M + Diag(y*)) where y*
    minimizes the convex dual 0.5 ||P_psd(M + Diag(y))||_F^2 - sum(y); its
    gradient is diag(P_psd(M + Diag(y))) - 1.  The dual optimum is unique,
    so warm starts change the path, never the answer.  Returns
    (result or None, y*); None signals a stalled line search.
    """
    from scipy import optimize

    S = M.shape[0]

    def objective(y):
        evals, evecs = np.linalg.eigh(M + np.diag(y))
        pos = np.maximum(evals, 0.0)
        theta = 0.5 * float(np.sum(pos * pos)) - float(np.sum(y))
        grad = np.einsum("ij,j,ij->i", evecs, pos, evecs) - 1.0
        return theta, grad

    start = np.zeros(S) if y0 is None else np.asarray(y0, dtype=np.float64)
    res = optimize.minimize(
        objective,
        start,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_eval, "ftol": 1e-18, "gtol": gtol},
    )
    # a residual diagonal error up to 1e-5 is removed exactly by the final
    # congruence polish and keeps the Frobenius suboptimality far below the
    # projection tolerance; larger stalls fall back to alternating projections
    if float(np.max(np.abs(res.jac))) > 1e-5:
        return None, res.x
    evals, evecs = np.linalg.eigh(M + np.diag(res.x))
    X = (evecs * np.maximum(evals, 0.0)) @ evecs.T
    return _finish_correlation(X, True), res.x


def _project_correlation(M, warm=None):
    """Dual projection with warm start and Dykstra fallback; returns (out, y)."""
    out, y = _nearest_correlation_dual(M, y0=warm)
    if out is None:
        return _nearest_correlation_dykstra(M), None
    return out, y


def nearest_correlation(M, tol=1e-8, max_iter=200, engine="dual"):
    """Frobenius-nearest correlation matrix.

    engine='dual' solves the equivalent convex dual (default; one eigh per
    L-BFGS step instead of per alternating projection); engine='dykstra' is
    the Dykstra-corrected alternating projection with the stated stopping
    rule (successive iterates within tol, at most max_iter sweeps).  Both
    reach the same projection; outputs agree to solver tolerance.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-12):
        raise ValueError("input must be symmetric")
    if engine == "dykstra":
        return _nearest_correlation_dykstra(M, tol, max_iter)
    if engine != "dual":
        raise ValueError(f"unknown engine {engine!r}")
    out, _ = _project_correlation(M)
    return out


def rescale_variances(sigma_u2_hat, G_hat, G_tilde):
    """Keep ||sigma^2 G||_F invariant under the correlation repair."""
    G_hat = np.asarray(G_hat, dtype=np.float64)
    entries = (
        G_tilde.entries if isinstance(G_tilde, CorrelationMatrix) else np.asarray(G_tilde)
    )
    norm_new = float(np.linalg.norm(entries))
    if norm_new <= 0:
        raise ValueError("projected correlation matrix has zero norm")
    factor = float(np.linalg.norm(G_hat)) / norm_new
    return np.asarray(sigma_u2_hat, dtype=np.float64) * factor


@dataclass(frozen=True)
class FitConfig:
    """Iterative GLS settings; thresholds drives the selection rules.

    weight_ridge blends the estimated correlation toward the identity inside
    the weight solve only (reported estimates are untouched).  An estimated
    S x S correlation built from a handful of coefficient coordinates can be
    nearly singular, and unregularized weights then chase spurious low-noise
    directions.
    """

    thresholds: ThresholdConfig
    delta: float = 0.01
    max_iter: int = 20
    tol: float = 1e-6
    weights_mode: str = "gls"
    noise_scale: float = 1.0
    weight_ridge: float = 0.0

    def __post_init__(self):
        if self.weights_mode not in ("ols", "gls"):
            raise ConfigError("weights_mode must be 'ols' or 'gls'")
        if self.delta <= 0 or self.tol <= 0 or self.max_iter < 0:
            raise ConfigError("delta, tol must be positive and max_iter >= 0")
        if self.noise_scale <= 0:
            raise ConfigError("noise_scale must be positive")
        if not 0.0 <= self.weight_ridge < 1.0:
            raise ConfigError("weight_ridge must lie in [0, 1)")


@dataclass(frozen=True)
class ModelFit:
    """Converged estimation state; immutable once returned."""

    h_hat: np.ndarray
    K_h: SelectedSet
    re_cov: RandomEffectsCovariance
    weights: np.ndarray
    weights_mode: str
    iterations: int
    converged: bool
    delta: float
    sigma_e2: float
    noise_scale: float = 1.0

    def __post_init__(self):
        for name in ("h_hat", "weights"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_coeff(self):
        return self.h_hat.size

    @property
    def n_replicates(self):
        return self.weights.shape[0]

    def covariance_family(self):
        T = self.n_coeff
        noise = self.sigma_e2 * self.noise_scale / T
        return CovarianceFamily(self.re_cov.sigma_u2, self.re_cov.G_S, noise)


def _estimate_components(Y, h, cfg, K_h, warm=None):
    """One pass of variance-component and correlation estimation.

    warm carries the dual variable of the previous projection; the dual
    optimum is unique so warm starts only cut eigendecompositions.
    """
    S = Y.shape[0]
    sigma_u2, K_u = estimate_variance_components(
        Y, h, cfg.thresholds, K_h, cfg.noise_scale
    )
    if K_u.size == 0 or S < 3:
        return sigma_u2, K_u, CorrelationMatrix.identity(S), None
    G_hat = estimate_between_correlation(Y, h, sigma_u2, K_u, cfg.delta)
    G_tilde, warm = _project_correlation(G_hat, warm)
    sigma_tilde = rescale_variances(sigma_u2, G_hat, G_tilde)
    return sigma_tilde, K_u, G_tilde, warm


def fit_iterative_gls(Y, cfg):
    """Alternate fixed-effect and covariance estimation until h stabilizes.

    Step 0 is the thresholded OLS fit; each iteration re-estimates the
    random-effects covariance at the current h and refreshes the GLS weights.
    """
    Y = _as_matrix(Y)
    S, T = Y.shape
    K_h = select_fixed_set(Y, cfg.thresholds, cfg.noise_scale)
    weights = uniform_weights(S, T)
    h = estimate_fixed_effects(Y, weights, K_h)
    noise_var = cfg.thresholds.sigma_e2 * cfg.noise_scale / T

    sigma_u2, K_u, G_tilde, warm = _estimate_components(Y, h, cfg, K_h)
    iterations = 0
    converged = True

    def weight_correlation(G):
        if cfg.weight_ridge == 0.0:
            return G
        blended = (1.0 - cfg.weight_ridge) * G.entries + cfg.weight_ridge * np.eye(S)
        return blended

    if cfg.weights_mode == "gls" and S >= 2:
        converged = False
        for _ in range(cfg.max_iter):
            family = CovarianceFamily(
                sigma_u2, weight_correlation(G_tilde), noise_var
            )
            weights = family.gls_weight_matrix()
            h_new = estimate_fixed_effects(Y, weights, K_h)
            iterations += 1
            rel = float(np.linalg.norm(h_new - h)) / max(
                float(np.linalg.norm(h)), 1e-12
            )
            h = h_new
            sigma_u2, K_u, G_tilde, warm = _estimate_components(
                Y, h, cfg, K_h, warm
            )
            if rel <= cfg.tol:
                converged = True
                break

    re_cov = RandomEffectsCovariance(sigma_u2, K_u, G_tilde)
    return ModelFit(
        h_hat=h,
        K_h=K_h,
        re_cov=re_cov,
        weights=weights,
        weights_mode=cfg.weights_mode,
        iterations=iterations,
        converged=converged,
        delta=cfg.delta,
        sigma_e2=cfg.thresholds.sigma_e2,
        noise_scale=cfg.noise_scale,
    )


def fit_with_known_weights(Y, weight_matrix, cfg):
    """Single-pass fit with externally supplied (oracle) weights."""
    Y = _as_matrix(Y)
    S, T = Y.shape
    K_h = select_fixed_set(Y, cfg.thresholds, cfg.noise_scale)
    W = np.asarray(weight_matrix, dtype=np.float64)
    h = estimate_fixed_effects(Y, W, K_h)
    sigma_u2, K_u, G_tilde, _ = _estimate_components(Y, h, cfg, K_h)
    re_cov = RandomEffectsCovariance(sigma_u2, K_u, G_tilde)
    return ModelFit(
        h_hat=h,
        K_h=K_h,
        re_cov=re_cov,
        weights=W,
        weights_mode="gls",
        iterations=0,
        converged=True,
        delta=cfg.delta,
        sigma_e2=cfg.thresholds.sigma_e2,
        noise_scale=cfg.noise_scale,
    )


def predict_random_effects(Y, fit):
    """BLUP-style predictors U_k = G_k V_k^{-1} (Y_k - h_k 1) on the selected set."""
    Y = _as_matrix(Y)
    S, T = Y.shape
    family = fit.covariance_family()
    spectra = family._spectra()
    if np.any(spectra <= 0):
        raise SingularCovariance("assembled covariance family is not PD")
    resid = Y - fit.h_hat[None, :]
    coords = family._evecs.T @ resid
    shrink = np.outer(family._evals, family.sigma_u2) / spectra
    U = family._evecs @ (shrink * coords)
    U[:, ~fit.re_cov.K_u.mask(T)] = 0.0
    return CoefficientPanel(U)


def predict_replicate_spectra(fit, U_hat, basis=None, exponentiate=False):
    """Replicate-specific curves idwt(h + U_s) on the frequency grid."""
    from . import wavelet

    basis = basis or wavelet.DEFAULT_BASIS
    U = U_hat.coeffs if isinstance(U_hat, CoefficientPanel) else np.asarray(U_hat)
    H = fit.h_hat[None, :] + U
    curves = wavelet.idwt(H, basis)
    if exponentiate:
        curves = np.exp(curves)
    return curves


def closed_form_mse(h_k, lam, V, w):
    """Exact mean squared error of the hard-thresholded weighted mean.

    The estimate is (w' xi) 1{|mean(xi)| >= lam} for xi ~ N(h_k 1, V); the
    expression is exact under Gaussian noise and serves as the Monte Carlo
    oracle for threshold-estimator risk.
    """
    V = np.asarray(V, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    S = V.shape[0]
    ones = np.ones(S)
    a = float(w @ V @ w)
    b = float(w @ V @ ones)
    sig2 = float(ones @ V @ ones) / S
    sig = math.sqrt(sig2)
    um = math.sqrt(S) * (lam - h_k) / sig
    up = math.sqrt(S) * (lam + h_k) / sig
    mse = (2.0 * a - h_k**2) + (h_k**2 - a) * (norm_cdf(um) + norm_cdf(up))
    mse += (b * b) / (S * sig2) * (um * norm_pdf(um) + up * norm_pdf(up))
    return mse
