"""Covariance models with known linear structure.

Estimate a p x p covariance matrix as a link transform of a linear
combination of known symmetric weight matrices,

    Sigma(beta) = G(beta_0 I + beta_1 W_1 + ... + beta_K W_K),

by quasi-maximum likelihood under five links (identity, exponential,
square, inverse, sar) or by closed-form least squares under the identity
link. The package adds plug-in standard deviations valid far beyond
Gaussian data, EBIC subset selection over the weight matrices, a
quasi-likelihood ratio test between non-nested links, a Monte Carlo lab,
and a minimum-variance portfolio backtest, all behind both a functional
API and estimator classes, plus the ``cmgl`` command line tool.
"""

__version__ = "0.1.0"

from .exceptions import (
    CmglError,
    DegenerateSampleError,
    DegenerateVarianceError,
    FitFailedError,
    InfeasibleStartError,
    InputError,
    NotPositiveDefiniteError,
    SingularBError,
    SingularGramError,
    SingularInformationError,
    SingularMatrixError,
)
from .weights import (
    CovariateColumn,
    WeightSet,
    build_continuous,
    build_discrete,
    build_from_column,
    build_thresholded,
    density,
    validate_weight_matrix,
)
from .links import LINKS, LinkMap, Spectral, get_link
from .estimate import (
    OlsResult,
    QmleResult,
    VarianceEstimate,
    fit_ols,
    fit_qmle,
    init_beta,
    loglik,
    ols_variance,
    qmle_variance,
    score,
)
from .select import (
    SelectionResult,
    backward_select,
    ebic_ols,
    ebic_q,
    exhaustive_select,
)
from .lrtest import LrTestResult, lr_test
from .simlab import (
    SimConfig,
    fit_measures,
    gen_sample,
    gen_truth,
    gen_weights_scenario,
    run_part1,
    run_part2,
    selection_measures,
)
from .portfolio import (
    CovariatePanel,
    PortfolioReport,
    ReturnsPanel,
    backtest,
    build_month_weights,
    minvar_weights,
)
from .estimators import EbicSelector, OlsCovariance, QmleCovariance

__all__ = [
    "__version__",
    "CmglError",
    "InputError",
    "NotPositiveDefiniteError",
    "SingularMatrixError",
    "SingularBError",
    "SingularGramError",
    "SingularInformationError",
    "InfeasibleStartError",
    "FitFailedError",
    "DegenerateSampleError",
    "DegenerateVarianceError",
    "CovariateColumn",
    "WeightSet",
    "build_continuous",
    "build_discrete",
    "build_from_column",
    "build_thresholded",
    "density",
    "validate_weight_matrix",
    "LINKS",
    "LinkMap",
    "Spectral",
    "get_link",
    "QmleResult",
    "OlsResult",
    "VarianceEstimate",
    "init_beta",
    "loglik",
    "score",
    "fit_qmle",
    "fit_ols",
    "qmle_variance",
    "ols_variance",
    "SelectionResult",
    "ebic_q",
    "ebic_ols",
    "backward_select",
    "exhaustive_select",
    "LrTestResult",
    "lr_test",
    "SimConfig",
    "gen_truth",
    "gen_weights_scenario",
    "gen_sample",
    "fit_measures",
    "selection_measures",
    "run_part1",
    "run_part2",
    "ReturnsPanel",
    "CovariatePanel",
    "PortfolioReport",
    "minvar_weights",
    "build_month_weights",
    "backtest",
    "QmleCovariance",
    "OlsCovariance",
    "EbicSelector",
]
