"""liprank: finite-rank approximation of Lipschitz functions on compact sets.

The pipeline enlarges a compact set M by a Lipschitz retraction, smooths
functions by mollifier convolution, and interpolates on a hypercube lattice,
producing finite-rank operators on Lipschitz functions with empirically
certified norm bound 1 + 1/n and uniform convergence.
"""

from .geometry import (
    CompactSet,
    Norm,
    annulus,
    ball,
    box,
    check_downwards_closed,
    connected_components,
    equivalence_constant,
    erode,
    estimate_lipschitz,
    interval,
    load_set,
    lshape,
    star_kernel_contains,
    two_squares,
)
from .enlargement import (
    Enlargement,
    EnlargementError,
    GluedMap,
    ShearMap,
    build_ball_cover,
    build_partition_of_unity,
    choose_theta,
    enlarge,
    glue,
    invert_glued,
    shear_estimates,
)
from .smoothing import (
    DEFAULT_QUAD_SLACK,
    Mollifier,
    SmoothedFunction,
    convolve,
    differentiability_modulus,
    mollifier_normalize,
    smoothing_bounds_check,
)
from .interpolation import (
    Hypercube,
    Mesh,
    build_mesh,
    cube_gradient,
    cube_interpolate,
    face_consistency_check,
    hat_value,
    interp_bounds_check,
)
from .pipeline import (
    FiniteRankOperator,
    PullbackOperator,
    Schedule,
    assemble_operator,
    build_test_suite,
    make_schedule,
    predual_action,
    run_experiment,
    verify_norm,
    verify_uniform,
)

__version__ = "0.1.0"
