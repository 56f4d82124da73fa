"""Finite-volume solver for non-locally coupled crowd flows on bounded domains.

The library splits into small layers: geometry (grids, masks, face
classification), kernels and boundary-renormalized averaging, linear
transport (exact characteristics oracle and the Lax-Friedrichs scheme),
crowd velocity models, and the coupled simulator with its Picard mode.
"""

from .averaging import (
    Channel,
    CouplingSpec,
    DomainAverager,
    NonlocalEval,
    assemble_nonlocal,
    compute_z,
    compute_z_gradient,
    convolve_bounded,
    gradient_convolve_bounded,
)
from .config import RunConfig, deep_merge, load_config_file, preset, preset_names
from .errors import ConfigError, NanAbortError
from .fields import ScalarField, VectorField, sample_bilinear
from .geometry import (
    CellKind,
    CellMask,
    Domain,
    FaceKind,
    Grid,
    build_grid,
    check_interior_sphere,
    classify_faces,
)
from .kernels import (
    KernelStencil,
    RadialKernel,
    build_stencil,
    eval_gradient,
    make_quartic_kernel_corridor,
    make_quartic_kernel_room,
)
from .models import (
    DesiredField,
    ModelSpec,
    PopulationModel,
    SpeedLaw,
    build_desired_field,
    eval_speed,
    eval_velocity_evacuation,
    eval_velocity_two_population,
    grid_distance,
)
from .simulator import (
    DiagnosticsRecord,
    PicardResult,
    RunResult,
    Scenario,
    SimState,
    StepRecord,
    init_scenario,
    picard_solve,
    run,
    step,
)
from .transport import (
    CharacteristicPath,
    ContractionVelocity,
    FieldDiagnostics,
    LinearProblem,
    RotationVelocity,
    TransportStepResult,
    UniformVelocity,
    cfl_dt,
    discrete_diagnostics,
    exact_solution,
    lf_step,
    lf_step_detailed,
    trace_characteristic,
)
from .output import read_snapshot, write_series, write_snapshot

__version__ = "0.1.0"
