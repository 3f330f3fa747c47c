"""Country index scores and deterministic rankings.

Two aggregation methods produce a capacity and a governance score per
country: Thurstone factor regression scores, and a summative index (equal
weight mean of item z-scores, restandardized). The interaction score is the
elementwise product of the two standardized scores and is not restandardized.

Ties in a ranking are broken by country code, ascending.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .matrix_stats import zscore

METHODS = ("factor_scores", "summative")


@dataclass
class IndexScores:
    countries: list
    capacity: np.ndarray
    governance: np.ndarray
    interaction: np.ndarray
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown aggregation method {self.method!r}")

    @property
    def codes(self):
        return [c.code for c in self.countries]

    def column(self, which):
        return {"capacity": self.capacity, "governance": self.governance, "interaction": self.interaction}[which]


@dataclass
class Ranking:
    ranks: list  # (rank, country, score), best first

    def __len__(self):
        return len(self.ranks)

    def position(self, code):
        for rank, country, _ in self.ranks:
            if _code(country) == code:
                return rank
        raise KeyError(code)

    def codes(self):
        return [_code(c) for _, c, _ in self.ranks]

    def top(self, n):
        return self.codes()[:n]

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "country_code", "country_name", "score"])
            for rank, c, score in self.ranks:
                w.writerow([rank, _code(c), getattr(c, "name", _code(c)), format(float(score), ".17g")])


def _code(country):
    return getattr(country, "code", country)


def summative_index(z, item_columns):
    """Mean of the selected z-score columns per row, then restandardized.

    ``z`` is an (n, p) array of already standardized items and
    ``item_columns`` the column indices forming the scale.
    """
    item_columns = list(item_columns)
    if not item_columns:
        raise ValidationError("summative index needs a non-empty item set")
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    raw = z[:, item_columns].mean(axis=1)
    return zscore(raw)[:, 0]


def build_index(capacity_scores, governance_scores, method="factor_scores", countries=None):
    """Standardize both score vectors and form their product.

    ``capacity_scores`` and ``governance_scores`` may be plain arrays aligned
    with ``countries``, or ``{code: score}`` mappings, in which case the
    country sets must agree exactly.
    """
    if isinstance(capacity_scores, dict) or isinstance(governance_scores, dict):
        if not (isinstance(capacity_scores, dict) and isinstance(governance_scores, dict)):
            raise ValidationError("pass both score sets as mappings or both as arrays")
        a, b = set(capacity_scores), set(governance_scores)
        if a != b:
            raise ValidationError(
                f"country sets differ: only in capacity {sorted(a - b)}, only in governance {sorted(b - a)}"
            )
        codes = sorted(a)
        countries = codes if countries is None else countries
        cap = np.array([capacity_scores[c] for c in codes], dtype=float)
        gov = np.array([governance_scores[c] for c in codes], dtype=float)
    else:
        cap = np.asarray(capacity_scores, dtype=float).ravel()
        gov = np.asarray(governance_scores, dtype=float).ravel()
        if cap.shape != gov.shape:
            raise ValidationError(f"score vectors differ in length: {cap.size} vs {gov.size}")
        if countries is None:
            countries = list(range(cap.size))
    cap = zscore(cap, ["capacity"])[:, 0]
    gov = zscore(gov, ["governance"])[:, 0]
    return IndexScores(list(countries), cap, gov, cap * gov, method)


def rank(scores, countries):
    """Descending ranking with 1-based positions; ties go to the smaller code."""
    scores = np.asarray(scores, dtype=float).ravel()
    countries = list(countries)
    if scores.size != len(countries):
        raise ValidationError("scores and countries differ in length")
    if np.isnan(scores).any():
        bad = [_code(countries[i]) for i in np.flatnonzero(np.isnan(scores))]
        raise ValidationError(f"NaN score for {bad}")
    order = sorted(range(scores.size), key=lambda i: (-scores[i], str(_code(countries[i]))))
    return Ranking([(pos + 1, countries[i], float(scores[i])) for pos, i in enumerate(order)])
