"""Time-uniform concentration bounds for i.i.d. sums, e-processes built from them, and Monte Carlo checks."""
from .distributions import DistributionSpec, MomentNotFinite, sample_stream, trunc_moment
from .bounds import BoundValue, L1Params, LilParams, LqParams, clamp

__version__ = "0.1.0"

__all__ = ["DistributionSpec", "MomentNotFinite", "sample_stream", "trunc_moment", "BoundValue", "L1Params",
           "LqParams", "LilParams", "clamp", "__version__"]
