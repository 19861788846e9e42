"""Constants that don't change often enough to go in Settings."""

from importlib import metadata

# Tolerance ladder: structural checks, eigensolver residuals (per unit of
# dimension) and inequality verifications.
STRUCTURAL_TOL = 1e-10
EIG_RESIDUAL_TOL = 1e-9
INEQUALITY_TOL = 1e-8

# Hermiticity accepted by the eigensolver before it refuses the input.
HERMITIAN_INPUT_TOL = 1e-8

# Trace preservation of a Kraus set, measured as ||sum K^dag K - 1||_F.
TP_TOL = 1e-9

# Eigenvalues below this are treated as exact zeros in entropies.
ENTROPY_CUTOFF = 1e-12

# Convergence of the diamond-distance interval.
DIAMOND_GAP_TOL = 1e-6

# Unit annotations carried by every numeric field of a run record.
UNIT_PROBABILITY = "probability"
UNIT_BITS = "bits (log base 2)"
UNIT_BITS_PER_USE = "bits per channel use (log base 2)"
UNIT_NATS = "nats (log base e)"
UNIT_HALF_DIAMOND = "half diamond norm, 1/2 ||N1 - N2||_diamond"
UNIT_COUNT = "count"
UNIT_RATIO = "dimensionless"

# Process exit codes.
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_VERIFICATION = 3
EXIT_RESOURCE_CAP = 4

__version__ = metadata.version(__package__)
