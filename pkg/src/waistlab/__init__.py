"""waistlab: waist and isoperimetric lower bounds for unit spheres of
uniformly convex normed spaces, verified at desk scale by cone-measure
Monte Carlo and a needle property suite."""

__version__ = "0.1.0"

from .norms import (  # noqa: F401
    ModulusCurve,
    NormDescriptor,
    euclidean_norm,
    euclidean_sandwich,
    format_norm,
    lp_norm,
    modulus_of_convexity,
    norm_eval,
    parse_norm,
    radial_project,
    smooth_norm,
)
from .bounds import (  # noqa: F401
    BoundInputs,
    BoundValue,
    bound_table,
    cap_angles,
    gromov_milman_bound,
    projection_lower_bound,
    round_sphere_reference,
    sine_integrals,
    sphere_tube_volume,
    waist_lower_bound,
)
from .cone import (  # noqa: F401
    MeasureEstimate,
    SampleBatch,
    best_fiber,
    fiber_points,
    neighborhood_measure,
    sample_conical,
    set_measure,
    tube_measure,
)
from .needles import (  # noqa: F401
    ArcDensity,
    ConvexCapSpec,
    decay_bound_check,
    derived_density_estimate,
    is_weakly_concave,
    max_structure_check,
    needle_ratio_and_ball,
    needle_suite,
    prekopa_concavity_check,
    random_arc_density,
)
