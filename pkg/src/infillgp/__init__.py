"""Fixed-domain estimation for spatial Gaussian process regression with a nugget."""
from .covariance import CovarianceModel, Family, TaperDescriptor, matern
from .design import Design, FeatureSpec, grid_design, stratified_design
from .errors import (AccuracyError, DomainError, InfeasibleEstimationError, InfillGPError,
                     IngestionError, MixingError, NumericalError, SingularDesignError,
                     UnsupportedOperationError, ValidationError)
from .gp_sim import Dataset, simulate
from .inference import McmcConfig, PosteriorChain, PriorSpec, run_mcmc
from .quadvar import QvConfig, QvEstimate

__version__ = "0.1.0"
