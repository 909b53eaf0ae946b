"""stripwave: traveling waves of a strip-domain chemotaxis system and their
moving-frame perturbation dynamics, with weighted-Sobolev energy diagnostics.
"""

__version__ = "0.1.0"

from .energy import (  # noqa: F401
    EnergyLedger,
    empirical_C0,
    fit_exponential_decay,
    ledger_row,
    sobolev_norm,
    transverse_energy,
)
from .evolve import (  # noqa: F401
    IntegratorBlowup,
    IntegratorConfig,
    TrajectoryRecord,
    run,
    step_linear_eps,
    step_nonlinear_eps0,
    step_nq,
)
from .grid import (  # noqa: F401
    Grid,
    GridError,
    ScalarField,
    VectorField,
    ddy,
    ddz,
    divergence,
    gradient,
    integrate,
    integrate_weighted,
    laplacian,
    make_grid,
    mean_in_y,
    remove_mean_in_y,
)
from .transforms import (  # noqa: F401
    ColeHopfState,
    PerturbationState,
    PhysicalState,
    assemble_physical,
    cole_hopf_forward,
    cole_hopf_inverse,
    curl,
    make_initial_perturbation,
)
from .waves import (  # noqa: F401
    WaveParams,
    WaveProfile,
    check_wave_identities,
    explicit_wave_eps0,
    solve_wave_kpp,
    wave_speed,
)
