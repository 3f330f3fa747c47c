import os
from pathlib import Path

import numpy as np
import pytest

from rcindex import panel

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def specs():
    return panel.load_dictionary()


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="panel.csv"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    return _write


@pytest.fixture
def small_dictionary(tmp_path):
    import json

    specs = [
        {"name": "A", "source_column": "A", "transform": "log1p", "missing_policy": "recode_zero", "group_hint": "capacity"},
        {"name": "B", "source_column": "B", "transform": "none", "missing_policy": "country_mean", "group_hint": "governance"},
    ]
    p = tmp_path / "dict.json"
    p.write_text(json.dumps(specs), encoding="utf-8")
    return p


def real_data_dir():
    d = os.environ.get("RCINDEX_REAL_DATA")
    return Path(d) if d else None


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int(k.split(".")[0]), k)):
        status, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {detail}")


def analysis_matrix(pnl, specs=None):
    """Impute, collapse and transform a generated panel; return (labels, X)."""
    from rcindex import stages

    specs = specs or panel.load_dictionary()
    cs = panel.apply_transforms(panel.collapse_to_cross_section(panel.apply_missing_policy(pnl, specs)), specs)
    labels = stages.analysis_variables(specs)
    return labels, cs.select(labels).matrix


def match_columns(estimated, truth):
    """Max-abs loading error after the best column permutation and signs (k = 2)."""
    best = np.inf
    for perm in ((0, 1), (1, 0)):
        e = estimated[:, perm]
        signs = np.sign((e * truth).sum(axis=0))
        best = min(best, float(np.max(np.abs(e * signs - truth))))
    return best


def heterogeneous_fixture(seed=5, n=60):
    """One-factor items with very unequal loadings; returns (codes, factor-score, summative)."""
    from rcindex.factor import fit_efa, regression_scores
    from rcindex.index import summative_index
    from rcindex.matrix_stats import pearson_corr, zscore

    g = np.random.default_rng(seed)
    lam = np.array([0.95, 0.9, 0.35, 0.25, 0.2])
    x = g.normal(size=(n, 1)) * lam + g.normal(size=(n, lam.size)) * np.sqrt(1 - lam**2)
    z = zscore(x)
    r = pearson_corr(x)
    loadings = fit_efa(r, 1).rotated_loadings
    fs = regression_scores(z, r, loadings).scores[:, 0]
    sm = summative_index(z, range(lam.size))
    return [f"K{i:03d}" for i in range(n)], fs, sm


def make_regression_data(seed, n=157, beta=(0.79, 0.004, 0.018), region_sd=0.16, sigma=0.176, n_regions=10):
    """Two standard-normal predictors, region random intercepts, Gaussian noise."""
    from rcindex.bayes import RegressionData

    g = np.random.default_rng(seed)
    x = g.normal(size=(n, 2))
    region_idx = np.arange(n) % n_regions
    u = g.normal(size=n_regions) * region_sd
    y = beta[0] + x @ np.asarray(beta[1:]) + u[region_idx] + g.normal(size=n) * sigma
    return RegressionData(y, x, ["Capacity", "Governance"], [f"R{i:02d}" for i in region_idx],
                          [f"C{i:03d}" for i in range(n)])
