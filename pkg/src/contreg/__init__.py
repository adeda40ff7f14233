"""Closed forms, optimal strength and Monte Carlo validation for
L2-regularized continual linear regression."""

__version__ = "0.1.0"

from .coeffs import (CoefficientSet, ProblemParams, coefficient_derivatives,  # noqa: E402
                     make_coefficients, zero_lambda_limits)
from .errors import (ContregError, DegenerateRegime, DimensionMismatch,  # noqa: E402
                     InvalidParam, NonFiniteObjective, SingularSystem)
from .lambda_opt import (LambdaBounds, LambdaStar, advise_scale,  # noqa: E402
                         lambda_star_bounds, lambda_star_search)
from .theory import (IIDTeachers, SingleTeacher, TeacherSequence,  # noqa: E402
                     TheoryResult, expected_loss, general_loss, iid_loss,
                     infinite_horizon_loss, loss_curve, monotonicity_threshold,
                     noreg_loss, single_teacher_loss)
