"""specmix: frequency-domain functional mixed-effects estimation for spectra
of correlated replicated time series."""

from . import errors
from .inference import (
    ConfidenceRegion,
    SplitPanels,
    bootstrap_region,
    confidence_region,
    risk_estimator,
    risk_variance,
    split_sample,
)
from .mixed_model import (
    CorrelationMatrix,
    CovarianceFamily,
    FitConfig,
    ModelFit,
    RandomEffectsCovariance,
    closed_form_mse,
    estimate_between_correlation,
    estimate_fixed_effects,
    estimate_variance_components,
    fit_iterative_gls,
    fit_with_known_weights,
    gls_weights,
    nearest_correlation,
    predict_random_effects,
    predict_replicate_spectra,
    rescale_variances,
    select_fixed_set,
)
from .panels import CoefficientPanel, LogPeriodogramPanel, TimeSeriesPanel
from .shrinkage import (
    SIGMA_E2,
    SelectedSet,
    ThresholdConfig,
    digamma,
    fdr_select,
    trigamma,
    universal_threshold_h,
    universal_threshold_u,
    variance_statistic,
)
from .simulation import (
    ArmaSpec,
    ScenarioConfig,
    block_diag_correlation,
    contour_correlation,
    generate_panel,
    run_benchmark,
    run_coverage,
    scenario_truth,
    truth_variance_components,
)
from .spectral import arma_log_spectrum, log_periodogram
from .wavelet import WaveletBasisSpec, dwt, idwt, scale_of_index, sparsify

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
