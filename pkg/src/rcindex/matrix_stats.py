"""Dense numerical kernels shared by the factor, reliability and index code.

Every function takes and returns plain ``numpy`` arrays. Column names, where
accepted, are only used to make error messages point at the right variable.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import SingularMatrixError, ValidationError

SYMMETRY_TOL = 1e-10
SPD_EIGEN_FLOOR = 1e-10


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues in descending order and matching column eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class CorrelationMatrix:
    variables: list
    values: np.ndarray

    def to_csv(self, path):
        """Write as a square CSV with a header row and a label column."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(["variable", *self.variables]) + "\n")
            for name, row in zip(self.variables, self.values):
                fh.write(",".join([name, *(format(float(v), ".17g") for v in row)]) + "\n")


def _label(names, j):
    return names[j] if names is not None else f"column {j}"


def _as_matrix(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {x.shape}")
    return x


def zscore(x, names=None):
    """Standardize each column to mean 0 and sample standard deviation 1.

    Raises
    ------
    ValidationError
        If a column is constant (or has fewer than two rows).
    """
    x = _as_matrix(x)
    if x.shape[0] < 2:
        raise ValidationError("zscore needs at least two rows")
    mean = x.mean(axis=0)
    centered = x - mean
    sd = np.sqrt((centered**2).sum(axis=0) / (x.shape[0] - 1))
    for j, s in enumerate(sd):
        if not s > 0:
            raise ValidationError(f"constant column cannot be standardized: {_label(names, j)}")
    z = centered / sd
    # second centering pass removes the O(eps) residual mean left by the division
    return z - z.mean(axis=0)


def pearson_corr(x, names=None):
    """Pearson correlation matrix of the columns of ``x``."""
    x = _as_matrix(x)
    if x.shape[0] < 2:
        raise ValidationError("correlation needs at least two rows")
    z = zscore(x, names)
    r = (z.T @ z) / (x.shape[0] - 1)
    r = (r + r.T) / 2.0
    np.fill_diagonal(r, 1.0)
    return np.clip(r, -1.0, 1.0)


def check_symmetric(a, tol=SYMMETRY_TOL):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > tol * scale:
        raise ValidationError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    return (a + a.T) / 2.0


def sym_eigen(a):
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are returned in descending order. Each eigenvector is signed
    so that its largest-magnitude component is positive, which keeps output
    stable across LAPACK builds.
    """
    a = check_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order]
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return EigenSystem(values, vectors * signs)


def invert_spd(a):
    """Inverse of a symmetric positive definite matrix.

    Raises
    ------
    SingularMatrixError
        When the smallest eigenvalue is at or below ``1e-10``; the offending
        eigenvalue is attached to the exception.
    """
    a = check_symmetric(a)
    smallest = float(np.linalg.eigvalsh(a)[0])
    if smallest <= SPD_EIGEN_FLOOR:
        raise SingularMatrixError(
            f"matrix is singular or not positive definite (smallest eigenvalue {smallest:.3g})",
            smallest_eigenvalue=smallest,
        )
    factor = linalg.cho_factor(a, lower=True)
    inv = linalg.cho_solve(factor, np.eye(a.shape[0]))
    return (inv + inv.T) / 2.0


def smc(r):
    """Squared multiple correlation of each variable with all the others."""
    inv = invert_spd(r)
    return 1.0 - 1.0 / np.diag(inv)
