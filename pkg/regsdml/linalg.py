from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from regsdml import settings
from regsdml.constants import RANK_TOLERANCE
from regsdml.errors import InvalidArgumentError
from regsdml.errors import SingularSystemError


logger = logging.getLogger(__name__)


def condition_number(matrix: np.ndarray, scale: float | None = None) -> float:
    """Ratio of the largest to the smallest singular value.

    ``scale`` replaces the largest singular value when it is bigger, so a
    1 x 1 system that is tiny relative to its unprojected counterpart still
    counts as ill-conditioned.
    """
    matrix = np.atleast_2d(matrix)
    if not np.all(np.isfinite(matrix)):
        return float("inf")
    singular_values = np.linalg.svd(matrix, compute_uv=False)
    top = float(singular_values[0]) if scale is None else max(float(singular_values[0]), float(scale))
    smallest = float(singular_values[-1])
    if smallest == 0.0:
        return float("inf")
    return top / smallest


def check_condition(matrix: np.ndarray, *, fold: int | None = None, limit: float | None = None,
                    scale: float | None = None, what: str = "matrix") -> None:
    limit = settings.REGSDML_CONDITION_LIMIT if limit is None else limit
    condition = condition_number(matrix, scale)
    if not condition <= limit:
        raise SingularSystemError(f"{what} is numerically singular", condition, fold)


def guarded_solve(matrix: np.ndarray, rhs: np.ndarray, *, fold: int | None = None,
                  limit: float | None = None, scale: float | None = None,
                  what: str = "matrix") -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    check_condition(matrix, fold=fold, limit=limit, scale=scale, what=what)
    return scipy.linalg.solve(matrix, rhs)


def guarded_inv(matrix: np.ndarray, *, fold: int | None = None,
                limit: float | None = None, what: str = "matrix") -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    check_condition(matrix, fold=fold, limit=limit, what=what)
    return scipy.linalg.inv(matrix)


def spectral_norm(matrix: np.ndarray) -> float:
    return float(np.linalg.norm(np.atleast_2d(matrix), ord=2))


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def fold_weights(sizes: list[int] | np.ndarray) -> np.ndarray:
    """Weights used to average per-fold quantities.

    ``size`` weighting returns n_k / N, ``uniform`` returns 1 / K. The mode is
    read from settings on every call so tests can patch it.
    """
    sizes = np.asarray(sizes, dtype=float)
    if sizes.size == 0:
        raise InvalidArgumentError("at least one fold is required")

    mode = settings.REGSDML_FOLD_WEIGHTING
    if mode == "uniform":
        return np.full(sizes.size, 1.0 / sizes.size)
    if mode == "size":
        return sizes / sizes.sum()
    raise InvalidArgumentError(f"unknown fold weighting '{mode}'")


def project_onto(RA: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Orthogonal projection of the columns of ``V`` onto span(``RA``).

    Uses a thin SVD of ``RA`` and drops directions whose singular value is
    below RANK_TOLERANCE times the largest one. The n x n projection matrix is
    never formed.
    """
    RA = np.asarray(RA, dtype=float)
    V = np.asarray(V, dtype=float)
    if RA.ndim == 1:
        RA = RA[:, None]
    vector = V.ndim == 1
    if vector:
        V = V[:, None]

    n, q = RA.shape
    if n < q:
        raise InvalidArgumentError(f"projection needs at least q={q} rows, got {n}")
    if V.shape[0] != n:
        raise InvalidArgumentError(f"row mismatch: RA has {n} rows, V has {V.shape[0]}")
    if not np.all(np.isfinite(RA)):
        raise InvalidArgumentError("RA contains non-finite entries")

    U, s, _ = scipy.linalg.svd(RA, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        out = np.zeros_like(V)
    else:
        basis = U[:, s > RANK_TOLERANCE * s[0]]
        out = basis @ (basis.T @ V)

    return out[:, 0] if vector else out
