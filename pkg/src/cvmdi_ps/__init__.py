"""Post-selected secret key rates for CV MDI quantum key distribution.

The package computes single-point and integrated asymptotic key rates of
a coherent-state relay protocol with post-selection, under complete
collective, restricted individual, and restricted collective
eavesdropping, together with the sweep drivers that map rate versus
distance, the asymmetric frontier, and the optimal modulation parameters.
"""

__version__ = "0.1.0"

from .gaussian import (
    GaussianState,
    beam_splitter,
    binary_entropy,
    condition_homodyne,
    gaussian_entropy,
    partial_trace,
    pure_overlap_same_cm,
    symplectic_eigenvalues,
    tmsv_state,
)
from .integration import (
    GridSpec,
    RateEstimate,
    convergence_check,
    ps_rate,
    ps_rate_montecarlo,
    raw_rate,
    raw_rate_montecarlo,
)
from .optimize import (
    OptResult,
    SweepRow,
    asymmetric_frontier,
    distance_sweep,
    max_range,
    optimal_param_sweep,
    optimize_rate,
)
from .probabilities import PSPoint, SignPair, joint_ps_density
from .protocol import (
    DerivedNoise,
    OmegaPair,
    ProtocolParams,
    derived_for,
    derived_noise,
    omega_from_epsilon,
    tau_from_db,
    tau_from_km,
)
from .rates import (
    RateBreakdown,
    mixture_cm_inflation,
    single_point_holevo_complete,
    single_point_holevo_restricted,
    single_point_iae_individual,
    single_point_mutual_info,
    single_point_rate,
)

__all__ = [
    "__version__",
    "GaussianState",
    "beam_splitter",
    "binary_entropy",
    "condition_homodyne",
    "gaussian_entropy",
    "partial_trace",
    "pure_overlap_same_cm",
    "symplectic_eigenvalues",
    "tmsv_state",
    "GridSpec",
    "RateEstimate",
    "convergence_check",
    "ps_rate",
    "ps_rate_montecarlo",
    "raw_rate",
    "raw_rate_montecarlo",
    "OptResult",
    "SweepRow",
    "asymmetric_frontier",
    "distance_sweep",
    "max_range",
    "optimal_param_sweep",
    "optimize_rate",
    "PSPoint",
    "SignPair",
    "joint_ps_density",
    "DerivedNoise",
    "OmegaPair",
    "ProtocolParams",
    "derived_for",
    "derived_noise",
    "omega_from_epsilon",
    "tau_from_db",
    "tau_from_km",
    "RateBreakdown",
    "mixture_cm_inflation",
    "single_point_holevo_complete",
    "single_point_holevo_restricted",
    "single_point_iae_individual",
    "single_point_mutual_info",
    "single_point_rate",
]
