"""Simulation and identification of a phase-locked loop with a band-pass filter.

The third-order model is simulated with a fixed-step integrator, and the
model parameters are recovered from a single scalar observable by
increment-based least squares over phase-sorted samples.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .config import ConfigError, RegimeConfig, bundled_regime, load_bundle, load_regime
from .core import (
    AlphaPair,
    DimensionlessParams,
    ModelState,
    PhysicalSetup,
    SimulationDiverged,
    count_spikes_per_burst,
    effective_params,
    rhs,
    simulate,
    to_dimensionless,
)
from .identify import (
    FitResult,
    build_deltas_integrated,
    build_deltas_legacy,
    build_sort_map,
    fit_integrated,
    fit_legacy,
    reconstruct_f4,
    solve_least_squares,
)
from .preprocess import (
    ObservationModel,
    StateEnsemble,
    apply_observation,
    assemble_states,
    differentiate,
    integrate,
    lowpass_smooth,
)
from .series import TimeSeries
from .shiftscan import ScanGrid, ScanResult, choose_shift, detect_slope, scan

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
