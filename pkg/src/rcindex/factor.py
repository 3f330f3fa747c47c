"""Factor adequacy tests, scree analysis, principal-axis factoring and varimax.

Loading columns always follow one convention: ordered by explained variance
(column sum of squared loadings, descending), each signed so that its column
sum is non-negative. Both extraction and rotation apply it, so results are
byte-stable across runs.

The ``com`` column of :func:`loading_table` is the ratio h^2 / u^2. This is
not Hoffman's row complexity index ``(sum l^2)^2 / sum l^4`` that most factor
analysis software prints under the same name.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import HeywoodError, NumericalError, ValidationError
from .matrix_stats import check_symmetric, invert_spd, smc, sym_eigen, zscore

PAF_TOL = 1e-6
PAF_MAX_ITER = 200
HEYWOOD_TOL = 1e-8
VARIMAX_TOL = 1e-6
VARIMAX_MAX_SWEEPS = 1000


@dataclass
class AdequacyReport:
    overall_msa: float = math.nan
    per_variable_msa: np.ndarray = None
    bartlett_chi2: float = math.nan
    bartlett_df: int = 0
    bartlett_p: float = math.nan
    n: int = 0
    variables: list = None

    def to_json(self):
        out = {
            "overall_msa": float(self.overall_msa),
            "per_variable_msa": None if self.per_variable_msa is None else [float(v) for v in self.per_variable_msa],
            "bartlett_chi2": float(self.bartlett_chi2),
            "bartlett_df": int(self.bartlett_df),
            "bartlett_p": float(self.bartlett_p),
            "n": int(self.n),
        }
        if self.variables is not None:
            out["variables"] = list(self.variables)
        return out


@dataclass
class ScreeReport:
    eigenvalues: np.ndarray
    cumulative_variance_proportion: np.ndarray
    n_factors_kaiser: int

    def to_json(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "cumulative_variance_proportion": [float(v) for v in self.cumulative_variance_proportion],
            "n_factors_kaiser": int(self.n_factors_kaiser),
        }


@dataclass
class FactorModel:
    variables: list
    unrotated_loadings: np.ndarray
    rotated_loadings: np.ndarray
    rotation_matrix: np.ndarray
    communalities: np.ndarray
    iterations: int
    converged: bool
    rotation_sweeps: int = 0
    varimax_criterion: list = None

    @property
    def n_factors(self):
        return self.rotated_loadings.shape[1]

    @property
    def uniqueness(self):
        return 1.0 - self.communalities

    @property
    def complexity(self):
        return _complexity(self.communalities)

    def to_json(self):
        return {
            "variables": list(self.variables),
            "unrotated_loadings": self.unrotated_loadings.tolist(),
            "rotated_loadings": self.rotated_loadings.tolist(),
            "rotation_matrix": self.rotation_matrix.tolist(),
            "communalities": self.communalities.tolist(),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "rotation_sweeps": int(self.rotation_sweeps),
        }

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(
                variables=list(obj["variables"]),
                unrotated_loadings=np.array(obj["unrotated_loadings"], dtype=float),
                rotated_loadings=np.array(obj["rotated_loadings"], dtype=float),
                rotation_matrix=np.array(obj["rotation_matrix"], dtype=float),
                communalities=np.array(obj["communalities"], dtype=float),
                iterations=int(obj["iterations"]),
                converged=bool(obj["converged"]),
                rotation_sweeps=int(obj.get("rotation_sweeps", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed factor model: {exc}") from None


@dataclass
class FactorScores:
    countries: list
    scores: np.ndarray
    weight_matrix: np.ndarray


# ------------------------------------------------------------ adequacy tests


def anti_image_correlation(r):
    """Partial correlations of each pair given all other variables."""
    inv = invert_spd(r)
    d = np.sqrt(np.diag(inv))
    q = -inv / np.outer(d, d)
    np.fill_diagonal(q, 0.0)
    return q


def kmo(r, variables=None):
    """Kaiser-Meyer-Olkin measure of sampling adequacy."""
    r = check_symmetric(r)
    q = anti_image_correlation(r)
    r_off = r.copy()
    np.fill_diagonal(r_off, 0.0)
    r2 = r_off**2
    q2 = q**2
    num = r2.sum()
    den = num + q2.sum()
    if den == 0.0 or num == 0.0:
        raise NumericalError("no correlations to assess: off-diagonal correlations are all zero")
    row_r = r2.sum(axis=0)
    row_q = q2.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_var = np.where(row_r + row_q > 0, row_r / (row_r + row_q), np.nan)
    return AdequacyReport(overall_msa=float(num / den), per_variable_msa=per_var, variables=variables)


def bartlett(r, n):
    """Bartlett's test of sphericity: chi2, df and upper-tail p-value."""
    r = check_symmetric(r)
    p = r.shape[0]
    if n <= p:
        raise ValidationError(f"Bartlett's test needs n > p (n={n}, p={p})")
    sign, logdet = np.linalg.slogdet(r)
    if sign <= 0:
        raise NumericalError("correlation matrix determinant is not positive (collinear variables)")
    df = p * (p - 1) // 2
    chi2 = -((n - 1) - (2 * p + 5) / 6.0) * logdet
    # ln det R is 0 for the identity but rounding can leave a tiny negative chi2
    chi2 = max(chi2, 0.0) + 0.0 if abs(chi2) < 1e-12 else chi2
    p_value = float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0
    return AdequacyReport(bartlett_chi2=float(chi2), bartlett_df=df, bartlett_p=p_value, n=int(n))


def adequacy(r, n, variables=None):
    """KMO and Bartlett combined into one report."""
    out = kmo(r, variables)
    b = bartlett(r, n)
    out.bartlett_chi2, out.bartlett_df, out.bartlett_p, out.n = b.bartlett_chi2, b.bartlett_df, b.bartlett_p, b.n
    return out


def scree(r):
    r = check_symmetric(r)
    values = sym_eigen(r).eigenvalues
    p = r.shape[0]
    cumulative = np.cumsum(values) / p
    return ScreeReport(values, cumulative, int(np.sum(values > 1.0)))


# ---------------------------------------------------------------- extraction


def _orient_columns(loadings, rotation=None):
    """Sort columns by explained variance and make every column sum >= 0."""
    ss = (loadings**2).sum(axis=0)
    order = np.argsort(-ss, kind="stable")
    loadings = loadings[:, order]
    signs = np.where(loadings.sum(axis=0) < 0, -1.0, 1.0)
    loadings = loadings * signs
    if rotation is not None:
        rotation = rotation[:, order] * signs
    return loadings, rotation


def extract_paf(r, k, variables=None, tol=PAF_TOL, max_iter=PAF_MAX_ITER):
    """Iterated principal-axis factoring starting from squared multiple correlations.

    Returns an unrotated :class:`FactorModel` (rotation fields hold the
    unrotated loadings and the identity).
    """
    r = check_symmetric(r)
    p = r.shape[0]
    names = variables if variables is not None else [f"V{j + 1}" for j in range(p)]
    if not 1 <= k < p:
        raise ValidationError(f"number of factors must satisfy 1 <= k < p (k={k}, p={p})")

    h2 = smc(r)
    converged = False
    iterations = 0
    reduced = r.copy()
    for iterations in range(1, max_iter + 1):
        np.fill_diagonal(reduced, h2)
        eig = sym_eigen(reduced)
        lam = np.clip(eig.eigenvalues[:k], 0.0, None)
        loadings = eig.eigenvectors[:, :k] * np.sqrt(lam)
        new_h2 = (loadings**2).sum(axis=1)
        worst = int(np.argmax(new_h2))
        if new_h2[worst] > 1.0 + HEYWOOD_TOL:
            raise HeywoodError(names[worst], float(new_h2[worst]))
        delta = float(np.max(np.abs(new_h2 - h2)))
        h2 = new_h2
        if delta < tol:
            converged = True
            break

    if not converged:
        warnings.warn(f"principal-axis factoring did not converge in {max_iter} iterations", RuntimeWarning)
    loadings, _ = _orient_columns(loadings)
    return FactorModel(
        variables=list(names),
        unrotated_loadings=loadings,
        rotated_loadings=loadings.copy(),
        rotation_matrix=np.eye(k),
        communalities=(loadings**2).sum(axis=1),
        iterations=iterations,
        converged=converged,
    )


# ------------------------------------------------------------------ varimax


def varimax_criterion(loadings):
    """Sum over factors of the variance of squared loadings."""
    p = loadings.shape[0]
    sq = loadings**2
    return float(np.sum((sq**2).sum(axis=0) / p - (sq.sum(axis=0) / p) ** 2))


def _planar_angle(x, y):
    # Kaiser's closed-form optimum for rotating the column pair (x, y)
    p = x.shape[0]
    u = x**2 - y**2
    v = 2.0 * x * y
    a, b = u.sum(), v.sum()
    c = np.sum(u**2 - v**2)
    d = 2.0 * np.sum(u * v)
    num = d - 2.0 * a * b / p
    den = c - (a**2 - b**2) / p
    return 0.25 * math.atan2(num, den)


def varimax(loadings, normalize=True, tol=VARIMAX_TOL, max_sweeps=VARIMAX_MAX_SWEEPS, return_trace=False):
    """Varimax rotation by cyclic pairwise planar rotations.

    Parameters
    ----------
    loadings : ndarray, shape (p, k)
    normalize : bool
        Kaiser normalization: rows are scaled to unit length before rotating
        and scaled back afterwards.
    return_trace : bool
        Also return the criterion value after every sweep (starting with the
        initial value), computed on the matrix being rotated.

    Returns
    -------
    rotated : ndarray, shape (p, k)
    rotation : ndarray, shape (k, k)
        Orthogonal, with ``rotated == loadings @ rotation``.
    """
    a = np.asarray(loadings, dtype=float)
    if a.ndim != 2:
        raise ValidationError("loadings must be a 2-D array")
    p, k = a.shape
    if k < 2:
        out = (a.copy(), np.eye(k))
        return (*out, [varimax_criterion(a)]) if return_trace else out

    if normalize:
        norms = np.sqrt((a**2).sum(axis=1))
        norms[norms == 0] = 1.0
    else:
        norms = np.ones(p)
    b = a / norms[:, None]
    t = np.eye(k)
    trace = [varimax_criterion(b)]
    for _ in range(max_sweeps):
        for i in range(k - 1):
            for j in range(i + 1, k):
                theta = _planar_angle(b[:, i], b[:, j])
                cs, sn = math.cos(theta), math.sin(theta)
                g = np.array([[cs, -sn], [sn, cs]])
                b[:, [i, j]] = b[:, [i, j]] @ g
                t[:, [i, j]] = t[:, [i, j]] @ g
        trace.append(varimax_criterion(b))
        if abs(trace[-1] - trace[-2]) < tol:
            break

    rotated = a @ t
    rotated, t = _orient_columns(rotated, t)
    if return_trace:
        return rotated, t, trace
    return rotated, t


def fit_efa(r, k, variables=None, normalize=True):
    """Principal-axis extraction followed by varimax rotation."""
    model = extract_paf(r, k, variables)
    rotated, t, trace = varimax(model.unrotated_loadings, normalize=normalize, return_trace=True)
    model.rotated_loadings = rotated
    model.rotation_matrix = t
    model.communalities = (rotated**2).sum(axis=1)
    model.rotation_sweeps = len(trace) - 1
    model.varimax_criterion = trace
    return model


# ------------------------------------------------------------ loading table


def _complexity(h2):
    u2 = 1.0 - h2
    with np.errstate(divide="ignore", invalid="ignore"):
        com = np.where(u2 > 0, h2 / np.where(u2 > 0, u2, 1.0), math.inf)
    return np.where(h2 == 0, 0.0, com)


def loading_table(loadings, variables=None):
    """Rows of ``(variable, loading_1..k, h2, u2, com)``.

    ``com = h2 / u2``; a row with ``u2 == 0`` reports ``inf`` and warns.
    """
    lam = np.asarray(loadings, dtype=float)
    if lam.ndim == 1:
        lam = lam[None, :]
    names = variables if variables is not None else [f"V{j + 1}" for j in range(lam.shape[0])]
    h2 = (lam**2).sum(axis=1)
    u2 = 1.0 - h2
    com = _complexity(h2)
    rows = []
    for j, name in enumerate(names):
        if math.isinf(com[j]):
            warnings.warn(f"{name}: uniqueness is zero, complexity reported as inf", RuntimeWarning)
        rows.append({
            "variable": name,
            "loadings": [float(v) for v in lam[j]],
            "h2": float(h2[j]),
            "u2": float(u2[j]),
            "com": float(com[j]),
        })
    return rows


# ----------------------------------------------------------- factor scores


def regression_scores(z, r, loadings, countries=None):
    """Thurstone regression scores ``Z R^-1 L``, each column restandardized."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    lam = np.asarray(loadings, dtype=float)
    if lam.ndim == 1:
        lam = lam[:, None]
    if z.shape[1] != lam.shape[0]:
        raise ValidationError(f"data has {z.shape[1]} variables but loadings have {lam.shape[0]} rows")
    weights = invert_spd(r) @ lam
    raw = z @ weights
    return FactorScores(list(countries) if countries is not None else None, zscore(raw), weights)
