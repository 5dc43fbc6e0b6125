"""Norms, compact-set oracles, erosion, and boundary-regularity predicates."""

from .norms import (
    Norm,
    equivalence_constant,
    estimate_lipschitz,
    sphere_sample,
    validate_norm,
)
from .sets import (
    CompactSet,
    ErodedSet,
    annulus,
    ball,
    box,
    connected_components,
    erode,
    halfspace_intersection,
    implicit_grid,
    interval,
    load_set,
    lshape,
    polytope,
    scale_about,
    set_to_dict,
    two_squares,
    union,
)
from .predicates import (
    DownwardsCertificate,
    StarKernelReport,
    check_downwards_closed,
    star_kernel_contains,
)

__all__ = [
    "Norm", "equivalence_constant", "estimate_lipschitz", "sphere_sample",
    "validate_norm",
    "CompactSet", "ErodedSet", "erode", "connected_components",
    "box", "interval", "ball", "lshape", "two_squares", "annulus",
    "halfspace_intersection", "polytope", "implicit_grid", "union",
    "scale_about", "load_set", "set_to_dict",
    "DownwardsCertificate", "check_downwards_closed",
    "StarKernelReport", "star_kernel_contains",
]
