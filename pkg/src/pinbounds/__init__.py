"""Free-energy bounds for disordered pinning, wetting and copolymer models on renewal processes."""

from .disorder import DisorderFamily, DisorderLaw, GapWeightRequest, gap_weight, gap_weight_upper, log_mgf
from .errors import (
    ConfigError,
    DomainError,
    IndeterminateError,
    NumericalFailure,
    PinboundsError,
    PreconditionError,
    UnrepresentableKernelError,
)
from .homog import (
    FreeEnergyResult,
    WeightedRenewalSpec,
    annealed_free_energy,
    check_against_dp,
    g_gamma,
    homogeneous_critical_point,
    solve_free_energy,
)
from .kernels import Family, InterArrivalLaw, c_of_gamma, dampen, log_k, renewal_mass, tilt_kernel
from .params import ModelParams

__version__ = "0.1.0"
