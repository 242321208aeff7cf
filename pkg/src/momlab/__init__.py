"""momlab: a desk-scale laboratory for moment measures of convex potentials.

Grids and fields (:mod:`momlab.grid`), discrete convex analysis
(:mod:`momlab.convexlab`), measures (:mod:`momlab.measures`), 1D optimal
transport (:mod:`momlab.transport`), the variational functionals and their
deficits (:mod:`momlab.functionals`) and the 1D moment-measure solver with
its experiments (:mod:`momlab.momsolve`).
"""

from .convexlab import (Potential, convexify, gradient, legendre_transform, second_derivative,
                        strong_convexity_modulus, sup_convolution_fdelta)
from .errors import (ClassMembershipError, ConcavityError, DegenerateTargetError, DomainError,
                     MomlabError, NonConvergenceError, NormalizationError, ParameterError,
                     PreconditionError, RangeError, UnsupportedDimensionError)
from .functionals import (backbone_gap, bl_deficit, bl_triple, dist_to_bl_optimizers,
                          duality_gap, e_functional, indicator, j_functional, pl_deficit,
                          prekopa_condition_check, variation_first, variation_report,
                          variation_second)
from .grid import Field, Grid, integrate, interp
from .measures import (AtomicMeasure, Density, barycenter, center, entropy, gibbs,
                       l1_dist_mod_translation, l1_distance, moment_measure, moments, theta)
from .momsolve import (caffarelli_exponents, compact_stability, p_moment_bound_check,
                       regularity_probe, regularization_path, solve_moment_measure)
from .transport import (geodesic, l1_moment_coupling_bound, m2_geodesic_gap, max_correlation,
                        wasserstein_1d)

__version__ = "0.1.0"
