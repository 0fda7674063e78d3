"""Atomic-frequency-comb quantum memory simulation and analysis."""

__version__ = "0.1.0"

from .comb import (  # noqa: E402
    CombSpec,
    MediumSpec,
    afc_efficiency,
    capacity_for_bandwidth,
    comb_profile,
    multimode_capacity,
    optimal_finesse,
)
from .estimation import DecaySeries, FitResult, fit_comb, fit_gaussian_peak, fit_spin_linewidth  # noqa: E402
from .propagation import (  # noqa: E402
    SimGrid,
    Spectrum,
    TimeTrace,
    echo_components,
    echo_efficiency,
    gaussian_pulse,
    propagate,
    pulse_train_spectrum,
    transfer_function,
)
from .spinwave import (  # noqa: E402
    ControlPulseSpec,
    SpinParams,
    StorageScenario,
    effective_transfer_efficiency,
    extract_transfer_efficiency,
    rabi_transfer_probability,
    spin_decay_factor,
    three_level_efficiency,
)
