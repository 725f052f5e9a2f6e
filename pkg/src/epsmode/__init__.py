"""Normal modes of periodic dielectrics and gauge-respecting perturbation theory."""

from .born import (
    BornTrace,
    CouplingMatrix,
    born_series,
    coupling_matrix,
    first_order_frequency_shift,
    homogeneous_ls_residual,
    interface_continuity_report,
)
from .dielectric import (
    DielectricProfile,
    DisorderSpec,
    Explicit,
    Homogeneous,
    Layered,
    Region,
    build_profile,
    generate_disorder,
    perturbation_potential,
)
from .gauge import (
    GaugeTerm,
    assemble_field_profiles,
    gauge_gradient,
    plane_wave_gauge_profile,
    verify_gauge_condition,
)
from .geometry import Grid, ScalarField, VectorField
from .green import (
    SpectralKernel,
    apply_kernel,
    direct_inverse_apply,
    helmholtz_decompose,
    kernel,
    kernel_identity_residual,
)
from .localfield import LocalFieldResult, emission_enhancement, local_field_factor
from .modes import ModeSet, match_modes, solve_modes, transversality_residual

__version__ = "0.1.0"
