"""Low-degree likelihood ratio norms and threshold predictions for spiked models."""

__version__ = "0.1.0"

from .priors import (  # noqa: F401
    MomentTable,
    Prior,
    PriorError,
    PriorSpec,
    entrywise_overlap_moments,
    enumerate_support,
    make_prior,
    overlap_moments,
    sample_spike,
)
from .hermite import (  # noqa: F401
    HermitePoly,
    check_generating_function,
    check_ibp_identity,
    check_translation_identity,
    enumerate_multi_indices,
    hermite_coeffs,
    hermite_eval,
    ldlr_coefficient,
    ldlr_evaluate,
)
from .ldlr import (  # noqa: F401
    DSchedule,
    GaussianHeuristic,
    LdlrResult,
    LrNormSq,
    ModelSpec,
    ScanResult,
    gaussian_heuristic_norm_sq,
    ldlr_norm_sq,
    lr_evaluate,
    lr_norm_sq,
    scan,
    tensor_threshold_bounds,
    term_ratios,
)
