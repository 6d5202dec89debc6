"""Random conical tessellations: exact moments, cone geometry and Monte Carlo checks."""
from .combinatorics import HPReal, binom, face_count_total, schlafli_count, theta, wendel_probability
from .errors import (
    ConetessError,
    ConfigurationError,
    DomainError,
    GeneralPositionError,
    OutOfRangeError,
    PrecisionError,
    UnsupportedInputError,
)
from .geometry import AngleEstimate, Arrangement, ConeRep, PolyCone, enumerate_cells, enumerate_k_faces
from .moments import MomentValue, covariance_matrix_lambda, second_moment_lambda
from .sampler import DirectionDistribution, RngStream, sample_arrangement

__version__ = "0.1.0"
