import math

import numpy as np
import pytest

from infillgp.covariance import covariance_matrix, matern
from infillgp.design import FeatureSpec, grid_design, stratified_design
from infillgp.errors import NumericalError, ValidationError
from infillgp.gp_sim import Dataset, cholesky_with_jitter, features_at, simulate

CONST = FeatureSpec("polynomial", 0)


def test_no_latent_process_leaves_noise():
    ds = simulate(None, 0.7, [2.0], grid_design(4000, 1), CONST, seed=1)
    resid = ds.Y - 2.0
    assert np.var(resid) == pytest.approx(0.7, rel=0.08)
    np.testing.assert_array_equal(ds.X_true, 0.0)


def test_two_point_covariance_monte_carlo():
    # many independent replicate pairs, tau = beta = 0: sample covariance vs theta K
    model = matern(2.0, 3.0, 0.5)
    design = grid_design(2, 1)
    K = covariance_matrix(model, design.points)
    reps = 100_000
    z = np.random.default_rng(5).standard_normal((reps, 2))
    X = z @ cholesky_with_jitter(K)[0].T
    emp = X.T @ X / reps
    # standard error of a sample covariance entry: sqrt((K_ii K_jj + K_ij^2) / reps)
    se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K ** 2) / reps)
    assert np.all(np.abs(emp - K) < 3 * se)


def test_two_point_covariance_via_simulate():
    model = matern(2.0, 3.0, 0.5)
    design = grid_design(2, 1)
    K = covariance_matrix(model, design.points)
    reps = 20_000
    X = np.array([simulate(model, 0.0, [0.0], design, CONST, seed=9, replicate=r).X_true
                  for r in range(reps)])
    emp = X.T @ X / reps
    se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K ** 2) / reps)
    assert np.all(np.abs(emp - K) < 4 * se)


def test_two_dimensional_setting():
    beta = np.array([1, -1.5, -1.5, 2, 1, 2], dtype=float)
    model = matern(5.0, 1.0, 0.5)
    design = grid_design(20, 2)
    # per replicate, mean of (Y - F beta)^2 over sites estimates sigma^2 + tau = 5.5
    ms = []
    for r in range(150):
        ds = simulate(model, 0.5, beta, design, FeatureSpec("polynomial", 2), seed=3, replicate=r)
        ms.append(np.mean((ds.Y - ds.F @ beta) ** 2))
    ms = np.array(ms)
    se = ms.std(ddof=1) / math.sqrt(ms.size)
    assert abs(ms.mean() - 5.5) < 3 * se


def test_assembly_identity():
    ds = simulate(matern(5.0, 1.0, 0.5), 0.5, [1.0, 2.0], stratified_design(30, 1, 2),
                  FeatureSpec("polynomial", 1), seed=4)
    eps = ds.Y - ds.F @ ds.beta_true - ds.X_true
    assert np.var(eps) < 2.0 and abs(eps.mean()) < 0.5
    assert ds.has_truth and ds.meta["seed"] == 4


def test_bitwise_reproducible():
    args = (matern(5.0, 1.0, 0.5), 0.5, [1.0], grid_design(50, 1), CONST)
    a = simulate(*args, seed=8, replicate=3)
    b = simulate(*args, seed=8, replicate=3)
    assert a.Y.tobytes() == b.Y.tobytes()
    c = simulate(*args, seed=8, replicate=4)
    assert a.Y.tobytes() != c.Y.tobytes()


def test_whitened_latent_is_standard_normal():
    model = matern(5.0, 1.0, 0.5)
    design = grid_design(30, 1)
    L, _ = cholesky_with_jitter(covariance_matrix(model, design.points))
    reps = 200
    Z = np.array([np.linalg.solve(L, simulate(model, 0.0, [0.0], design, CONST, 11, r).X_true)
                  for r in range(reps)])
    n = design.n
    assert abs(Z.mean()) < 4 / math.sqrt(n * reps)
    assert Z.var() == pytest.approx(1.0, abs=0.06)


def test_test_points_drawn_jointly():
    model = matern(5.0, 1.0, 0.5)
    tp = np.array([[0.5], [0.5001]])
    ds = simulate(model, 0.1, [0.0], grid_design(10, 1), CONST, seed=2, test_points=tp)
    assert ds.X_test.shape == (2,)
    # two almost coincident locations must have nearly equal latent values
    assert abs(ds.X_test[0] - ds.X_test[1]) < 0.2
    np.testing.assert_allclose(features_at(ds, tp), [[1.0], [1.0]])


def test_jitter_escalates_on_singular_matrix():
    K = np.ones((3, 3))
    L, j = cholesky_with_jitter(K)
    assert j > 0
    np.testing.assert_allclose(L @ L.T, K + j * np.eye(3))


def test_jitter_gives_up_with_diagnostics():
    K = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NumericalError) as info:
        cholesky_with_jitter(K)
    assert info.value.diagnostics["min_eig"] == pytest.approx(-1.0)


@pytest.mark.parametrize("kw", [dict(tau=-1.0), dict(beta=[1.0, 2.0])])
def test_invalid_inputs(kw):
    args = dict(model=matern(1.0, 1.0, 0.5), tau=0.1, beta=[1.0], design=grid_design(5, 1),
                featurespec=CONST, seed=1) | kw
    with pytest.raises(ValidationError):
        simulate(**args)


def test_dataset_shape_checks():
    with pytest.raises(ValidationError):
        Dataset(design=grid_design(4, 1), F=np.ones((3, 1)), Y=np.zeros(4))
