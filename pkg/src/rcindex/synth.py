"""Seeded synthetic country-year panels with a known two-factor structure.

Each country draws two latent scores (capacity, governance). Indicators are
``loc + scale * (loadings @ scores + noise)`` with a small year-to-year
jitter; count-like indicators are passed through ``expm1`` so that the
``log1p`` transform in the pipeline recovers the linear scale.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .panel import Country, Panel

# Rounded two-factor reference loadings, in dictionary order.
REFERENCE_LOADINGS = (
    ("RD", 0.668, 0.213),
    ("ResPatent", 0.896, 0.149),
    ("AcadInst", 0.962, 0.089),
    ("NonAcadInst", 0.873, 0.269),
    ("Authors", 0.981, 0.153),
    ("Pubs", 0.978, 0.166),
    ("IntlPubs", 0.974, 0.195),
    ("OpenInternet", 0.044, 0.772),
    ("RuleLaw", 0.274, 0.917),
    ("RegQual", 0.472, 0.764),
    ("Stability", 0.119, 0.713),
    ("NonCorrupt", 0.398, 0.754),
    ("Polyarchy", 0.146, 0.911),
    ("AcadFreedom", 0.009, 0.814),
)

# (loc, scale) on the analysis scale: log scale for counts, raw otherwise.
_REFERENCE_SCALES = {
    "RD": (14.455, 3.5),
    "ResPatent": (3.906, 0.95),
    "AcadInst": (3.063, 0.7),
    "NonAcadInst": (2.883, 0.7),
    "Authors": (7.792, 2.478),
    "Pubs": (6.736, 2.774),
    "IntlPubs": (5.813, 2.373),
    "OpenInternet": (0.387, 1.511),
    "RuleLaw": (0.555, 0.303),
    "RegQual": (-0.118, 0.993),
    "Stability": (-0.205, 0.951),
    "NonCorrupt": (-0.115, 1.005),
    "Polyarchy": (0.527, 0.25),
    "AcadFreedom": (0.638, 0.289),
}

_COUNT_LIKE = {"RD", "ResPatent", "AcadInst", "NonAcadInst", "Authors", "Pubs", "IntlPubs"}
_RECODE_ZERO = {"RD", "ResPatent"}


@dataclass
class FactorSpec:
    """Generating model for :func:`generate_synthetic_panel`.

    ``noise_sd=None`` gives each indicator unit latent variance
    (unique sd = sqrt(1 - h^2)); a scalar applies the same unique sd to
    every indicator, and 0 makes the latent indicators exactly rank 2.
    """

    variables: list
    loadings: np.ndarray
    loc: np.ndarray
    scale: np.ndarray
    count_like: np.ndarray
    noise_sd: object = None
    year_sd: float = 0.05
    n_regions: int = 10
    first_year: int = 2013
    # fraction of countries with no data at all for recode-zero variables
    zero_country_rate: float = 0.0
    zero_variables: tuple = ()
    # per-cell missing rate for the remaining indicators
    cell_missing_rate: float = 0.0
    outcome: str = "FWCI"
    outcome_intercept: float = 0.79
    outcome_coef: tuple = (0.04, 0.12)
    outcome_region_sd: float = 0.1
    outcome_residual_sd: float = 0.12
    extra_dropped: tuple = ("TertiaryEnrol",)
    region_labels: list = field(default=None)
    # whiten latent scores and unique noise so their sample covariance is exactly I
    exact_moments: bool = True

    def __post_init__(self):
        self.loadings = np.asarray(self.loadings, dtype=float)
        self.loc = np.asarray(self.loc, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        self.count_like = np.asarray(self.count_like, dtype=bool)
        p = len(self.variables)
        if self.loadings.shape != (p, 2):
            raise ValidationError(f"loadings must be {p} x 2, got {self.loadings.shape}")
        if self.n_regions < 1:
            raise ValidationError("n_regions must be positive")

    def unique_sd(self):
        if self.noise_sd is None:
            h2 = (self.loadings**2).sum(axis=1)
            return np.sqrt(np.clip(1.0 - h2, 0.0, None))
        return np.broadcast_to(np.asarray(self.noise_sd, dtype=float), (len(self.variables),)).copy()


def reference_spec(**overrides):
    """Generator settings shaped like the 14-indicator reference solution."""
    names = [r[0] for r in REFERENCE_LOADINGS]
    kwargs = dict(
        variables=names,
        loadings=np.array([r[1:] for r in REFERENCE_LOADINGS]),
        loc=np.array([_REFERENCE_SCALES[n][0] for n in names]),
        scale=np.array([_REFERENCE_SCALES[n][1] for n in names]),
        count_like=np.array([n in _COUNT_LIKE for n in names]),
        zero_variables=tuple(n for n in names if n in _RECODE_ZERO),
    )
    kwargs.update(overrides)
    return FactorSpec(**kwargs)


def _whiten(x):
    """Columns with sample mean 0 and sample covariance exactly I."""
    q, r = np.linalg.qr(x - x.mean(axis=0))
    q = q * np.sign(np.diag(r))
    return q * np.sqrt(x.shape[0] - 1)


def generate_synthetic_panel(seed, n_countries, n_years, factor_spec=None, return_latent=False):
    """Draw a synthetic panel; identical arguments give identical panels.

    With ``return_latent=True`` also returns ``(scores, latent)`` where
    ``scores`` is the n x 2 latent factor matrix and ``latent`` the n x p
    country-level indicator values on the linear scale (before year jitter).
    """
    if n_countries < 1 or n_years < 1:
        raise ValidationError("n_countries and n_years must be positive")
    spec = factor_spec if factor_spec is not None else reference_spec()
    rng = np.random.default_rng(seed)
    p = len(spec.variables)

    draws = rng.standard_normal((n_countries, 2 + p))
    if spec.exact_moments and n_countries > 2 + p:
        draws = _whiten(draws)
    scores, noise = draws[:, :2], draws[:, 2:]
    unique = spec.unique_sd()
    latent = scores @ spec.loadings.T + noise * unique
    jitter = rng.standard_normal((n_countries, n_years, p)) * spec.year_sd
    linear = spec.loc + spec.scale * (latent[:, None, :] + jitter)
    values = np.where(spec.count_like, np.expm1(np.clip(linear, 0.0, None)), linear)

    if spec.region_labels is not None:
        labels = list(spec.region_labels)
    else:
        labels = [f"region_{r + 1:02d}" for r in range(spec.n_regions)]
    countries = [
        Country(f"C{i + 1:03d}", f"Country {i + 1:03d}", labels[i % len(labels)])
        for i in range(n_countries)
    ]

    # missingness: whole-country gaps in recode-zero variables, scattered cells elsewhere
    if spec.zero_country_rate > 0:
        for name in spec.zero_variables:
            j = spec.variables.index(name)
            hit = rng.random(n_countries) < spec.zero_country_rate
            values[hit, :, j] = np.nan
    if spec.cell_missing_rate > 0:
        mask = rng.random(values.shape) < spec.cell_missing_rate
        for name in spec.zero_variables:
            mask[:, :, spec.variables.index(name)] = False
        # keep at least one observed year per country and variable
        all_gone = mask.all(axis=1)
        mask[:, 0, :] &= ~all_gone
        values[mask] = np.nan

    region_idx = np.arange(n_countries) % len(labels)
    region_effect = rng.standard_normal(len(labels)) * spec.outcome_region_sd
    fwci = (
        spec.outcome_intercept
        + scores @ np.asarray(spec.outcome_coef)
        + region_effect[region_idx]
    )[:, None] + rng.standard_normal((n_countries, n_years)) * spec.outcome_residual_sd
    fwci = np.abs(fwci)

    extras = []
    for name in spec.extra_dropped:
        col = 0.4 + 0.1 * scores[:, :1] + 0.02 * rng.standard_normal((n_countries, n_years))
        col[rng.random((n_countries, n_years)) < 0.6] = np.nan
        extras.append(col)

    stacked = [values, fwci[:, :, None], *(e[:, :, None] for e in extras)]
    all_values = np.concatenate(stacked, axis=2)
    variables = [*spec.variables, spec.outcome, *spec.extra_dropped]
    years = list(range(spec.first_year, spec.first_year + n_years))
    panel = Panel(countries, years, variables, all_values)
    if return_latent:
        return panel, scores, latent
    return panel
