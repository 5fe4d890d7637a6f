"""Approximate realization of linear state-space models from noisy Markov parameters."""
from .errors import (
    DimensionError,
    IllConditionedError,
    InsolubleTLSError,
    NongenericTLSError,
    NumericalFailure,
    RankError,
    RealizerError,
    WeightingSingularError,
)
from .estimators import (
    METHODS,
    RealizationResult,
    WlsConfig,
    kung_realize,
    ols_realize,
    realize,
    tls_realize,
    wls_realize,
)
from .hankel import HankelSet, build_hankel
from .model import (
    StateSpaceModel,
    char_poly_of,
    fit,
    fit_score,
    markov,
    random_stable_system,
    system1,
    system2,
)

__version__ = "0.1.0"
