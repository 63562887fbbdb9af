"""Partial Bergman kernels, pole-constrained envelopes and random zeros on the Riemann sphere."""

from bergmanlab.errors import (
    BergmanLabError,
    DimensionZero,
    IllConditioned,
    MaxIterations,
    NotBig,
    RootFindingFailed,
)
from bergmanlab.geometry import (
    GridField,
    PoleSet,
    ProjectivePoint,
    SphereGrid,
    chordal_sigma,
    fs_weight,
    make_grid,
)
from bergmanlab.sections import (
    BergmanField,
    SectionSpace,
    WeightSpec,
    bergman_field,
    build_orthonormal_basis,
    dimension,
    is_big,
    modulus_of_continuity,
    threshold,
    variational_check,
)
from bergmanlab.envelopes import (
    EnvelopeProblem,
    EnvelopeResult,
    EquilibriumCurrent,
    envelope_stability_check,
    equilibrium_current,
    holder_diagnostic,
    radial_oracle,
    solve_envelope,
)
from bergmanlab.zeros import (
    EmpiricalDivisor,
    PairingReport,
    RandomSection,
    SpeedReport,
    pair_with_current,
    sample_section,
    speed_experiment,
    zero_divisor,
)

__version__ = "0.1.0"
