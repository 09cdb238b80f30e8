from __future__ import annotations

# Singular values below RANK_TOLERANCE * largest are dropped by projections.
RANK_TOLERANCE = 1e-10

SYMMETRY_TOLERANCE = 1e-8

SPLINE_DEGREE = 3
SPLINE_MIN_DF = SPLINE_DEGREE + 1
SPLINE_RIDGE_JITTER = 1e-8

FOREST_TREES = 500
FOREST_MIN_NODE = 5

GAMMA_GRID_SIZE = 40
GAMMA_GRID_MIN = 1e-3
GAMMA_GRID_MAX = 1e5

KAPPA_CLAMP = 1e-6
GAMMA_MAX = 1.0 / KAPPA_CLAMP

DEFAULT_LEVEL = 0.95
DEFAULT_K = 2
DEFAULT_S = 100

NUMBER_SIGNIFICANT_DIGITS = 9
