"""Work statistics of two-energy-measurement schemes built from generalized
quantum measurements, with numerical checks of the Jarzynski equality, the
Crooks relation and generalized detailed balance.

Set ``TEMS_DISABLE_NUMBA=1`` before import to run the pure-numpy kernels.
"""
from ._kernels import BACKEND
from .adversarial import SearchResult, adversarial_search
from .errors import (
    ConfigError,
    DimensionError,
    InstrumentError,
    NotCompletelyPositiveError,
    NotHermitianError,
    NotUnitaryError,
    TemsError,
)
from .hamiltonian import (
    SpectralHamiltonian,
    boltzmann_weights,
    gibbs_state,
    nondegenerate_difference_spectrum,
    partition_function,
    spectral_from_levels,
    spectral_from_matrix,
)
from .instrument import (
    Channel,
    Instrument,
    QuantumOperation,
    build_crooks,
    build_error_free,
    build_ji_erroneous,
    build_jii,
    build_outcome_mixed,
    build_projective,
    constant_channel,
    depolarizing,
    error_matrix,
    is_error_free,
    is_unital,
    nonselective,
    random_channel,
    random_unital_channel,
    time_reverse_instrument,
    transpose_depolarizing,
)
from .lemma_lab import (
    EnsembleStats,
    appendixA_effect_check,
    lemma3_classify,
    lemma3_trace_scan,
    lemma4_check,
    lemma4_fit,
)
from .operator_core import choi, haar_unitary, is_psd, kraus_from_choi
from .protocol import Protocol, quench_protocol, time_reversed
from .tolerances import DEFAULT as DEFAULT_TOLERANCES
from .tolerances import Tolerances
from .verifier import (
    CheckReport,
    Scenario,
    certify_crooks,
    certify_jarzynski,
    check_backward_jarzynski,
    check_condition_Ji,
    check_condition_Jii,
    check_crooks,
    check_detailed_balance,
    check_jarzynski,
    fit_depolarizing_alpha,
)
from .work_stats import WorkDistribution, joint_table, work_distribution

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
