import numpy as np
import pytest

from rcindex.errors import SingularMatrixError, ValidationError
from rcindex.reliability import cronbach_alpha, guttman_lambda6, reliability, standardized_alpha


def brute_force(x):
    """Std alpha and lambda-6 written out from their definitions; SMC from least-squares R^2."""
    n, k = x.shape
    z = (x - x.mean(axis=0)) / x.std(axis=0, ddof=1)
    corr = z.T @ z / (n - 1)
    off = [corr[i, j] for i in range(k) for j in range(k) if i != j]
    rbar = sum(off) / len(off)
    std = k * rbar / (1 + (k - 1) * rbar)
    smc = []
    for j in range(k):
        others = np.column_stack([np.ones(n), np.delete(z, j, axis=1)])
        coef, *_ = np.linalg.lstsq(others, z[:, j], rcond=None)
        resid = z[:, j] - others @ coef
        smc.append(1 - resid @ resid / (z[:, j] @ z[:, j]))
    lam6 = 1 - sum(1 - s for s in smc) / corr.sum()
    return std, lam6


def pair_with_r(rho, n=200, seed=0):
    g = np.random.default_rng(seed).normal(size=(n, 2))
    g = np.linalg.qr(g - g.mean(axis=0))[0]
    return g @ np.linalg.cholesky(np.array([[1.0, rho], [rho, 1.0]])).T


def test_std_alpha_two_items():
    alpha, rbar = standardized_alpha(np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert alpha == pytest.approx(2 / 3, abs=1e-10) and rbar == 0.5
    rep = reliability(pair_with_r(0.5))
    assert rep.std_alpha == pytest.approx(2 / 3, abs=1e-10)


def test_duplicate_items_give_one(rng):
    a = rng.normal(size=50)
    x = np.column_stack([a, a, a])
    with pytest.raises(SingularMatrixError):
        reliability(x)
    rep = reliability(x, allow_singular=True)
    assert rep.raw_alpha == pytest.approx(1.0, abs=1e-12)
    assert rep.std_alpha == pytest.approx(1.0, abs=1e-12)
    assert np.isnan(rep.lambda6)
    assert cronbach_alpha(np.cov(x, rowvar=False)) == pytest.approx(1.0, abs=1e-12)


def test_negative_alpha_for_anticorrelated_items():
    rep = reliability(pair_with_r(-0.6))
    assert rep.raw_alpha < 0 and rep.std_alpha < 0
    assert rep.raw_alpha <= 1


def test_std_alpha_invariant_to_rescaling(rng):
    x = rng.normal(size=(60, 4)) + rng.normal(size=(60, 1))
    base = reliability(x)
    scaled = reliability(x * np.array([1.0, 1000.0, 0.001, 7.0]) + 3.0)
    assert abs(base.std_alpha - scaled.std_alpha) < 1e-12
    assert abs(base.lambda6 - scaled.lambda6) < 1e-12
    assert scaled.raw_alpha < base.raw_alpha


def test_adding_duplicate_never_lowers_std_alpha(rng):
    for _ in range(50):
        f = rng.normal(size=(80, 1))
        x = f * rng.uniform(0.2, 1.0, size=4) + rng.normal(size=(80, 4))
        before = reliability(x).std_alpha
        for j in range(4):
            after = reliability(np.column_stack([x, x[:, j]]), allow_singular=True).std_alpha
            assert after >= before - 1e-12


def test_brute_force_oracle():
    g = np.random.default_rng(99)
    for _ in range(100):
        x = g.normal(size=(40, 1)) * g.uniform(0, 1.5, size=5) + g.normal(size=(40, 5))
        rep = reliability(x)
        std, lam6 = brute_force(x)
        assert abs(rep.std_alpha - std) < 1e-10
        assert abs(rep.lambda6 - lam6) < 1e-10
        assert 0 <= rep.lambda6 <= 1 and rep.std_alpha <= 1 and rep.raw_alpha <= 1


def test_lambda6_independent_items_is_zero_ish():
    assert guttman_lambda6(np.eye(4)) == pytest.approx(0.0, abs=1e-15)


def test_errors(rng):
    with pytest.raises(ValidationError):
        reliability(rng.normal(size=(10, 1)))
    with pytest.raises(ValidationError):
        reliability(rng.normal(size=(2, 3)))
    x = rng.normal(size=(10, 3))
    x[:, 1] = 4.0
    with pytest.raises(ValidationError, match="b"):
        reliability(x, ["a", "b", "c"])


def test_report_json(rng):
    rep = reliability(rng.normal(size=(20, 3)), ["x", "y", "z"])
    obj = rep.to_json()
    assert obj["item_set"] == ["x", "y", "z"] and obj["n"] == 20
    assert set(obj) >= {"raw_alpha", "std_alpha", "lambda6"}
