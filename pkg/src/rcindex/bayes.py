"""Gibbs sampler for the Gaussian linear model with random intercepts.

Model::

    y = X beta + sum_l Z_l u_l + e
    u_l ~ Normal(0, s2_l I),  e ~ Normal(0, s2 I)
    beta ~ Normal(m, t^2 I),  s2, s2_l ~ InvGamma(a, b)

All location parameters (beta and every u_l) are drawn jointly from their
Gaussian full conditional, then the variances from their inverse-gamma
conditionals. Each chain owns a generator seeded from ``(seed, chain)``, so
draws do not depend on the order chains run in.

Percentiles use linear interpolation between order statistics
(``numpy.percentile`` default).
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .errors import NumericalError, ValidationError

GROUPINGS = ("none", "region", "region_and_country")
RHAT_WARN = 1.1
# variance draws are floored here so a collapsing group sd cannot produce 0 or inf
VARIANCE_FLOOR = 1e-12


@dataclass
class ModelSpec:
    outcome: str = "FWCI"
    predictors: tuple = ("Capacity", "Governance")
    year_fixed_effects: bool = False
    grouping: str = "region"
    min_publications_filter: int = 50
    chains: int = 4
    iterations: int = 2000
    warmup: int = 1000
    seed: int = None
    beta_prior_mean: float = 0.0
    beta_prior_sd: float = 10.0
    ig_shape: float = 0.001
    ig_scale: float = 0.001

    def __post_init__(self):
        if self.grouping not in GROUPINGS:
            raise ValidationError(f"grouping must be one of {GROUPINGS}, got {self.grouping!r}")
        if self.chains < 1:
            raise ValidationError("chains must be at least 1")
        if not 0 <= self.warmup < self.iterations:
            raise ValidationError(f"need 0 <= warmup < iterations (warmup={self.warmup}, iterations={self.iterations})")
        if self.seed is None:
            raise ValidationError("a seed is required")
        if self.beta_prior_sd <= 0:
            raise ValidationError("beta_prior_sd must be positive")
        if self.min_publications_filter < 0:
            raise ValidationError("min_publications_filter must be non-negative")


@dataclass
class RegressionData:
    """Rows of a regression: outcome, predictors and grouping labels."""

    y: np.ndarray
    x: np.ndarray
    predictor_names: list
    region: list
    country: list
    year: list = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        n = self.y.size
        if self.x.shape[0] != n or len(self.region) != n or len(self.country) != n:
            raise ValidationError("regression inputs differ in length")
        if self.year is not None and len(self.year) != n:
            raise ValidationError("year labels differ in length")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise ValidationError("regression inputs contain missing or non-finite values")

    def subset(self, mask):
        idx = np.flatnonzero(mask)
        pick = lambda seq: None if seq is None else [seq[i] for i in idx]
        return RegressionData(self.y[idx], self.x[idx], list(self.predictor_names),
                              pick(self.region), pick(self.country), pick(self.year))


@dataclass
class ParameterSummary:
    estimate: float
    sd: float
    ci95_low: float
    ci95_high: float


@dataclass
class Posterior:
    parameters: list
    draws: np.ndarray  # (chains, kept draws, parameters)
    summaries: dict
    rhat: dict
    ess: dict
    spec: ModelSpec
    n: int
    n_groups: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    removed: list = field(default_factory=list)
    predictor_source: str = None

    def pooled(self, name):
        return self.draws[:, :, self.parameters.index(name)].ravel()

    def mcse(self, name):
        return self.summaries[name].sd / math.sqrt(self.ess[name])

    def to_json(self):
        rows = []
        for name in self.parameters:
            s = self.summaries[name]
            rows.append({
                "parameter": name,
                "estimate": s.estimate,
                "sd": s.sd,
                "ci95_low": s.ci95_low,
                "ci95_high": s.ci95_high,
                "rhat": _finite_or_none(self.rhat[name]),
                "ess": _finite_or_none(self.ess[name]),
            })
        return {
            "outcome": self.spec.outcome,
            "n": self.n,
            "groups": self.n_groups,
            "spec": asdict(self.spec),
            "predictor_source": self.predictor_source,
            "removed_low_publication": list(self.removed),
            "rhat_warning": any(w.startswith("R-hat") for w in self.warnings),
            "warnings": list(self.warnings),
            "parameters": rows,
        }

    def draws_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(["chain", "draw", *self.parameters]) + "\n")
            for c in range(self.draws.shape[0]):
                for d in range(self.draws.shape[1]):
                    vals = ",".join(format(float(v), ".17g") for v in self.draws[c, d])
                    fh.write(f"{c},{d},{vals}\n")


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


# ------------------------------------------------------------------ filter


def filter_low_pub(data, totals, threshold):
    """Drop rows of countries whose total publication count is below ``threshold``.

    ``totals`` maps country code to the raw (untransformed) publication total.
    Returns the filtered data and the sorted list of removed codes.
    """
    if threshold < 0:
        raise ValidationError(f"publication threshold must be non-negative, got {threshold}")
    missing = sorted({c for c in data.country if c not in totals})
    if missing:
        raise ValidationError(f"no publication totals for {missing}")
    removed = sorted({c for c in set(data.country) if totals[c] < threshold})
    mask = np.array([c not in removed for c in data.country], dtype=bool)
    return data.subset(mask), removed


# ------------------------------------------------------------------ design


@dataclass
class _Design:
    fixed_names: list
    x_fixed: np.ndarray
    levels: list  # (name, index array, n_groups)


def _factorize(labels):
    uniq = sorted(set(labels))
    lookup = {u: i for i, u in enumerate(uniq)}
    return np.array([lookup[v] for v in labels]), len(uniq)


def build_design(data, spec):
    n = data.y.size
    cols = [np.ones(n), *data.x.T]
    names = ["Intercept", *data.predictor_names]
    if spec.year_fixed_effects:
        if data.year is None:
            raise ValidationError("year fixed effects requested but the data has no year column")
        years = sorted(set(data.year))
        # first year is the baseline: its effect is 0 by construction
        for yv in years[1:]:
            cols.append(np.array([1.0 if v == yv else 0.0 for v in data.year]))
            names.append(f"year[{yv}]")
    x_fixed = np.column_stack(cols)
    rank = np.linalg.matrix_rank(x_fixed)
    if rank < x_fixed.shape[1]:
        raise ValidationError(
            f"fixed-effect design is rank deficient (rank {rank} < {x_fixed.shape[1]} columns); "
            "check for constant or collinear predictors"
        )
    levels = []
    if spec.grouping in ("region", "region_and_country"):
        idx, g = _factorize(data.region)
        levels.append(("Region", idx, g))
    if spec.grouping == "region_and_country":
        idx, g = _factorize([f"{r}:{c}" for r, c in zip(data.region, data.country)])
        levels.append(("Region:Country", idx, g))
    return _Design(names, x_fixed, levels)


# ----------------------------------------------------------------- sampler


def _inv_gamma(rng, shape, scale):
    return scale / rng.gamma(shape)


def _run_chain(chain, y, w, wtw, wty, design, spec):
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(chain,)))
    n = y.size
    q = design.x_fixed.shape[1]
    sizes = [g for _, _, g in design.levels]
    offsets = np.cumsum([q, *sizes])
    dim = w.shape[1]

    prior_prec_fixed = 1.0 / spec.beta_prior_sd**2
    prior_shift = np.zeros(dim)
    prior_shift[:q] = spec.beta_prior_mean * prior_prec_fixed

    yvar = float(np.var(y)) if n > 1 else 1.0
    yvar = yvar if yvar > 0 else 1.0
    sigma2 = yvar * math.exp(rng.standard_normal() * 0.5)
    tau2 = [yvar * math.exp(rng.standard_normal() * 0.5) for _ in design.levels]

    n_keep = spec.iterations - spec.warmup
    out = np.empty((n_keep, q + len(design.levels) + 1))
    diag_idx = np.arange(dim)
    for it in range(spec.iterations):
        prior_diag = np.empty(dim)
        prior_diag[:q] = prior_prec_fixed
        for l, t2 in enumerate(tau2):
            prior_diag[offsets[l]:offsets[l + 1]] = 1.0 / t2
        prec = wtw / sigma2
        prec[diag_idx, diag_idx] += prior_diag
        rhs = wty / sigma2 + prior_shift
        try:
            chol = linalg.cholesky(prec, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise NumericalError(f"chain {chain}: conditional precision not positive definite at iteration {it}") from None
        mean = linalg.cho_solve((chol, True), rhs, check_finite=False)
        theta = mean + linalg.solve_triangular(chol, rng.standard_normal(dim), lower=True, trans="T",
                                               check_finite=False)

        resid = y - w @ theta
        sigma2 = max(_inv_gamma(rng, spec.ig_shape + n / 2.0, spec.ig_scale + resid @ resid / 2.0), VARIANCE_FLOOR)
        for l, g in enumerate(sizes):
            u = theta[offsets[l]:offsets[l + 1]]
            tau2[l] = max(_inv_gamma(rng, spec.ig_shape + g / 2.0, spec.ig_scale + u @ u / 2.0), VARIANCE_FLOOR)

        if not (np.all(np.isfinite(theta)) and math.isfinite(sigma2)):
            raise NumericalError(f"chain {chain}: sampler produced non-finite values at iteration {it}")
        if it >= spec.warmup:
            row = out[it - spec.warmup]
            row[:q] = theta[:q]
            row[q:q + len(tau2)] = np.sqrt(tau2)
            row[-1] = math.sqrt(sigma2)
    return out


def fit(data, spec, workers=1):
    """Run ``spec.chains`` Gibbs chains and summarize the pooled draws.

    ``workers > 1`` runs chains on a thread pool; the draws are identical
    either way.
    """
    design = build_design(data, spec)
    n = data.y.size
    blocks = [design.x_fixed]
    for _, idx, g in design.levels:
        z = np.zeros((n, g))
        z[np.arange(n), idx] = 1.0
        blocks.append(z)
    w = np.hstack(blocks)
    wtw = w.T @ w
    wty = w.T @ data.y

    run = lambda c: _run_chain(c, data.y, w, wtw, wty, design, spec)
    if workers > 1 and spec.chains > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(run, range(spec.chains)))
    else:
        chains = [run(c) for c in range(spec.chains)]
    draws = np.stack(chains)

    names = [*design.fixed_names, *(f"sd({name})" for name, _, _ in design.levels), "sigma"]
    summaries, rhat, ess = {}, {}, {}
    for j, name in enumerate(names):
        summaries[name] = summarize(draws[:, :, j].ravel())
        rhat[name] = split_rhat(draws[:, :, j])
        ess[name] = effective_sample_size(draws[:, :, j])

    notes = []
    high = [name for name in names if np.isfinite(rhat[name]) and rhat[name] > RHAT_WARN]
    if high:
        msg = f"R-hat above {RHAT_WARN} for {high}"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning)
    return Posterior(
        parameters=names,
        draws=draws,
        summaries=summaries,
        rhat=rhat,
        ess=ess,
        spec=spec,
        n=int(n),
        n_groups={name: int(g) for name, _, g in design.levels},
        warnings=notes,
    )


# --------------------------------------------------------------- summaries


def summarize(draws):
    """Posterior mean, sd and 2.5/97.5 percentiles of a 1-D draw vector."""
    d = np.asarray(draws, dtype=float).ravel()
    if d.size < 2:
        raise ValidationError("need at least two draws to summarize")
    lo, hi = np.percentile(d, [2.5, 97.5])
    return ParameterSummary(float(d.mean()), float(d.std(ddof=1)), float(lo), float(hi))


def _chain_stats(chains):
    m, n = chains.shape
    means = chains.mean(axis=1)
    within = chains.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * within + between / n
    return within, var_plus


def split_rhat(chains):
    """Split-chain potential scale reduction factor."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    half = chains.shape[1] // 2
    if half < 2:
        return math.nan
    split = np.vstack([chains[:, :half], chains[:, -half:]])
    within, var_plus = _chain_stats(split)
    if within <= 0:
        return math.nan
    return float(math.sqrt(var_plus / within))


def _autocovariance(x):
    n = x.size
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n]
    return acov / n


def effective_sample_size(chains):
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    if n < 4:
        return math.nan
    acov = np.array([_autocovariance(c) for c in chains])
    within = acov[:, 0].mean() * n / (n - 1)
    means = chains.mean(axis=1)
    var_plus = within * (n - 1) / n + (means.var(ddof=1) if m > 1 else 0.0)
    if var_plus <= 0:
        return math.nan
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    total = 0.0
    prev = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / math.log10(m * n)) if m * n > 10 else max(tau, 1e-12)
    return float(m * n / tau)
