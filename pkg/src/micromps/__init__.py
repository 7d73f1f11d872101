"""Microcanonical sampling of spin chains with random matrix product states.

The package draws random MPS whose ensemble average is the maximally mixed
state, then concentrates each state onto a target energy window by power
iteration with the filter operator G = I - ((H - E)/sigma)^2, and estimates
ensemble averages of energies, magnetizations and spin-spin correlations.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateWindowError,
    IncompatibleStatesError,
    InsufficientDataError,
    InvalidParameterError,
    MicrompsError,
    NumericalFailureError,
    RunFailedError,
    SampleFailedError,
    TooLargeError,
)
from .mpo import (
    FilterOperator,
    Mpo,
    SpinModel,
    apply_mpo,
    build_filter,
    expectation,
    hamiltonian_mpo,
    identity_mpo,
    local_expectations,
    matrix_element,
    mpo_square,
    mpo_to_dense,
    sigma_estimate,
    zz_correlation,
)
from .mps import (
    Mps,
    canonicalize,
    compress,
    inner_product,
    load_mps,
    product_mps,
    random_mps,
    save_mps,
    to_dense,
)
from .rng import RngStream, derive_stream, derive_subseed, haar_unit_vector, haar_unitary
from .sampler import (
    DiagnosticsReport,
    IterationRecord,
    IterationTrace,
    SamplerConfig,
    SamplerOperators,
    build_operators,
    convergence_diagnostics,
    run_sample,
)

# these pull in __version__ from the partially initialized package, so they
# must come after it is bound above
from .ensemble import (  # noqa: E402
    EnsembleResult,
    GaussianFit,
    ObservablesRequest,
    correlation_profile,
    fit_gaussian,
    magnetization_curve,
    run_ensemble,
    write_outputs,
)
from .oracle import (  # noqa: E402
    DenseSpectrum,
    canonical_average,
    dense_hamiltonian,
    dense_power_replay,
    diagonalize,
    filtered_average,
    filtered_energy_variance,
    populations,
)

__all__ = [name for name in dir() if not name.startswith("_")]
