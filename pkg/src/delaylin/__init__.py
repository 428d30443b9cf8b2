"""Linear and semilinear delay difference equations in the fading-memory space B^beta."""

from ._jit import NUMBA_ENABLED
from .conjugacy import (
    ConjugacyResidual,
    InjectivityReport,
    Orbit,
    OrbitEta,
    apply_F_on_orbit,
    conjugacy_residual,
    conjugacy_table,
    dense_F_oracle,
    h_apply,
    injectivity_probe,
    linear_orbit,
    picard_iterations,
    solve_eta_on_orbit,
)
from .delay_system import (
    LinearTapSystem,
    Nonlinearity,
    SemilinearSystem,
    TimeRule,
    apply_linear,
    apply_nonlinearity,
    lipschitz_certificate,
)
from .dichotomy import (
    ContractionCertificate,
    CorruptedDichotomy,
    DiagonalDichotomy,
    DichotomyData,
    TabulatedDichotomy,
    contraction_certificate,
    decay_probe,
    green_apply,
    green_norm_bound,
    make_diagonal_dichotomy,
    probe_dichotomy_axioms,
    two_sided_geometric_q,
    uniform_dichotomy_bound,
)
from .errors import CertificateError, ConfigurationError, ConsistencyError, DelayLinError, DomainError
from .evolution import (
    EvolutionFamily,
    solve_forced,
    solve_linear,
    solve_semilinear,
    voc_residual_two_time,
    voc_sum,
)
from .phase_space import (
    History,
    PhaseSpaceParams,
    entries_distance,
    gamma_embed,
    norm_beta,
    random_history,
    shift_append,
)

__version__ = "0.1.0"
