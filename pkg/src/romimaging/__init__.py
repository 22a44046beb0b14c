"""Data-driven reduced order model imaging of 2D acoustic media.

Array data ``D^k`` are synthesized with an exact-in-discretization wave
propagator, turned into a block tridiagonal reduced order model using the
data alone, and backprojected onto the snapshots of a kinematic velocity
model.  Reverse time migration serves as the linear baseline.
"""

__version__ = "0.1.0"

from .errors import (
    BlockCholeskyError,
    NumericalError,
    RegularizationError,
    RomImagingError,
    StabilityError,
    ValidationError,
)
from .imaging import (
    Image,
    SubArrayPartition,
    backprojection_image,
    composite_image,
    delta_diagnostic,
    depth_scale,
    kinematic_basis,
    rtm_image,
    schrodinger_potential,
)
from .media import (
    Grid2D,
    SymmetrizedOperator,
    TransducerArray,
    VelocityModel,
    WaveletSpec,
    build_symmetrized_operator,
    build_transducer_field,
    constant_velocity,
    gaussian_smooth_velocity,
)
from .phantoms import make_phantom
from .propagate import (
    DiscretePropagator,
    SampledData,
    SnapshotSet,
    apply_propagator,
    compute_snapshots,
    dense_oracle,
    simulate,
    simulate_data,
)
from .regularization import MuSchedule, NoiseSpec, RegularizationResult, add_noise, min_eig, regularize
from .rom import (
    OrthonormalBasis,
    ReducedModel,
    assemble_mass,
    assemble_stiffness,
    block_cholesky,
    orthogonalize_snapshots,
    reduce,
    resimulate,
    verify_structure,
)
