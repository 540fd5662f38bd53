"""heatlab: heat-semigroup harmonic analysis on flat model domains."""

from .domains import (
    Axis,
    Domain,
    Field,
    Grid,
    absolute_bc_tags,
    jet_norm,
    region_mask,
    sobolev_norm,
)
from .errors import (
    ConfigError,
    HeatlabError,
    ParameterError,
    ResolutionError,
    TruncationError,
)
from .kernels import (
    ClosedFormKernel,
    Kernel1D,
    KernelProbeReport,
    offdiag_decay_probe,
    semigroup_check,
)

__version__ = "0.1.0"
