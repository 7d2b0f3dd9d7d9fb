"""convext: convex extension of functions under log-concave integral
constraints, with discrete Legendre transforms, log-domain marginals, a
geometric-contraction extension pipeline, and the associated extremal
convex function."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import (ConfigurationError, ContractViolationError, ConvextError,
                     DomainError, InputError, ShapeError)
from .extension import (ExtensionReport, IterationTrace, MixtureSpec,
                        SofteningParams, extend_affine, extend_convex,
                        extend_mixture, extend_zero, holder_extend,
                        soft_legendre)
from .extremal import (ExtremalResult, HatPhi, extremal_function,
                       extremal_oracle, hat_phi, log_laplace)
from .grids import (Axis, ConvexityReport, GridFunction, GridSpec,
                    ProductGridFunction, add, check_midpoint_convexity,
                    joint_check, scale, shift, tilt)
from .integrals import (LogIntegralResult, constraint_residuals, log_integral,
                        normalization_gap, prekopa_marginal, tilted_marginal)
from .transforms import (AffineFunction, auto_dual_spec, biconjugate,
                         legendre_transform, slope_range)
