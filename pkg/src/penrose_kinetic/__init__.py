"""Penrose-stability diagnostics and quasineutral Vlasov-Poisson simulation (1D1V).

Subpackages by concern:

* ``core``      grids, fields, transforms, interpolation, norms, snapshots
* ``profiles``  velocity profiles and phase-space initial data
* ``penrose``   stability function, margin scans, zero-order symbol
* ``fields``    scaled electrostatic field solve and field energy
* ``solver``    Strang-split semi-Lagrangian time integration
* ``kernelops`` averaging operator K, kernel norms, quantization
* ``harness``   convergence / persistence / instability studies
* ``cli``       command-line interface
"""

from .core import (
    GridX,
    GridV,
    VelocityProfile,
    PhaseField,
    SpatialField,
    density,
    fourier_v,
    sobolev_norm_x,
    shift_interpolate_v,
)
from .profiles import (
    ProfileSpec,
    InitialDataSpec,
    build_maxwellian,
    build_two_stream,
    build_initial_data,
    build_profile,
    is_one_bump,
)
from .penrose import (
    FreqPoint,
    ScanConfig,
    PenroseReport,
    penrose_value,
    penrose_margin,
    penrose_margin_field,
    symbol_a,
)
from .fields import FieldMode, solve_field, field_energy
from .solver import SolverConfig, DiagnosticsRecord, advect_x, advect_v, step, run

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
