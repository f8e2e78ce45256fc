"""Zero-field dipolar decoupling of spin-1 color-center ensembles.

Library layout:

* :mod:`zenith.operators` - spin-1 operator basis, pi/2 rotations,
  phase-canonical unitary comparison.
* :mod:`zenith.control` - two-channel drive model, pulses, sequences.
* :mod:`zenith.dipole` - cluster sampling and the rotating-frame dipolar
  Hamiltonian (pair and ensemble).
* :mod:`zenith.search` - group generation, Cayley graph, minimal
  decoupling subsets, Z interleaving, average-Hamiltonian checks.
* :mod:`zenith.dynamics` - exact state-vector propagation, survival
  traces, protection factors, scaling fits.
* :mod:`zenith.sensing` - DC signal response, optimal readout state,
  frequency estimation.
* :mod:`zenith.cli` - command-line entry point (verify / search /
  simulate / sense).
"""

from .control import (
    DriveParams,
    Pulse,
    PulseSequence,
    composite_z,
    drive_hamiltonian,
    drive_unitary,
    prepare_double_quantum,
    pulse_to_unitary,
    toggling_frames,
)
from .dipole import (
    ClusterGeometry,
    ClusterSpec,
    EnsembleHamiltonian,
    PairGeometry,
    PairHamiltonian,
    assemble_ensemble,
    concentration_to_coupling,
    pair_geometry,
    pair_hamiltonian,
    sample_cluster,
    secular_consistency_check,
)
from .dynamics import (
    INITIAL_STATES,
    RunConfig,
    TimeSeries,
    apply_global_pulse,
    finite_size_study,
    fit_power_law,
    period_propagate,
    protection_factor,
    segment_propagate,
    stroboscopic_run,
)
from .operators import (
    QutritOperator,
    QutritUnitary,
    canonical_phase,
    conjugate,
    make_gellmann,
    make_spin_operators,
    rotation,
    verify_rotation_table,
)
from .search import (
    CayleyGraph,
    DecouplingSubset,
    ZenithSequence,
    aht_first,
    aht_zeroth,
    enumerate_family,
    find_minimal_subsets,
    generate_group,
    interleave_z,
    project,
    symmetrize,
)
from .sensing import (
    DELTA_LAMBDA,
    FREQUENCY_RATIO,
    EffectiveSignal,
    SensingResult,
    effective_hamiltonian,
    estimate_frequency,
    optimal_state,
    ramsey_run,
    spectral_range,
)

__version__ = "0.1.0"
