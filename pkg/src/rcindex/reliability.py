"""Internal-consistency coefficients for an item set."""

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError, ValidationError
from .matrix_stats import pearson_corr, smc


@dataclass
class ReliabilityReport:
    item_set: list
    raw_alpha: float
    std_alpha: float
    lambda6: float
    average_r: float
    n: int

    def to_json(self):
        return {
            "item_set": list(self.item_set),
            "raw_alpha": self.raw_alpha,
            "std_alpha": self.std_alpha,
            "lambda6": self.lambda6,
            "average_r": self.average_r,
            "n": self.n,
        }


def cronbach_alpha(cov):
    k = cov.shape[0]
    return (k / (k - 1)) * (1.0 - np.trace(cov) / cov.sum())


def standardized_alpha(corr):
    k = corr.shape[0]
    rbar = (corr.sum() - k) / (k * (k - 1))
    return k * rbar / (1.0 + (k - 1) * rbar), rbar


def guttman_lambda6(corr):
    return 1.0 - np.sum(1.0 - smc(corr)) / corr.sum()


def reliability(items, item_names=None, allow_singular=False):
    """Raw and standardized Cronbach's alpha and Guttman's lambda-6.

    Raw alpha uses the item covariance matrix, so items on very different
    scales pull it well below the standardized value. Lambda-6 takes squared
    multiple correlations from this item set alone.

    Raises
    ------
    ValidationError
        Fewer than two items, fewer than three rows, or a constant item.
    SingularMatrixError
        The item correlation matrix is singular (lambda-6 undefined). Exact
        duplicate items trigger this; pass ``allow_singular=True`` to get both
        alphas with ``lambda6 = nan`` instead.
    """
    x = np.asarray(items, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValidationError("reliability needs at least two items")
    if x.shape[0] < 3:
        raise ValidationError("reliability needs at least three observations")
    names = list(item_names) if item_names is not None else [f"item{j + 1}" for j in range(x.shape[1])]
    cov = np.cov(x, rowvar=False, ddof=1)
    corr = pearson_corr(x, names)
    std, rbar = standardized_alpha(corr)
    try:
        lambda6 = float(guttman_lambda6(corr))
    except SingularMatrixError:
        if not allow_singular:
            raise
        lambda6 = float("nan")
    return ReliabilityReport(
        item_set=names,
        raw_alpha=float(cronbach_alpha(cov)),
        std_alpha=float(std),
        lambda6=lambda6,
        average_r=float(rbar),
        n=int(x.shape[0]),
    )
