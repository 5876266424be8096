"""Self-consistent BdG solver for trapped two-component Fermi gases with
retrospective fluctuation diagnostics of the meanfield solution."""

from .basis import BasisTable, RadialGrid, build_grid, states_per_l, tabulate_basis
from .bdg import (
    LBlockSpectrum,
    RadialField,
    assemble_lblock,
    compute_fields,
    diagonalize,
    fermi_occupation,
)
from .config import DerivedScales, SolverConfig, derive_scales, validate_config
from .fluctuations import (
    FluctuationProfile,
    density_fluctuations,
    fluctuation_profile,
    pairing_fluctuations,
    relative_fluctuation,
)
from .regularization import LocalMomenta, hybrid_gap, lda_gap_tail, local_momenta, regularized_coupling
from .runner import ScenarioResult, run_point, run_scenario, scenario_configs
from .scf import (
    FFLOResult,
    Problem,
    ScfState,
    detect_fflo,
    initial_state,
    run_scf,
    scf_step,
    solve_chemical_potentials,
)

__version__ = "0.1.0"
