import mpmath
import numpy as np
import pytest

from aset.errors import DimensionError, FileFormatError, MissingClassError, NotConvergedError
from aset.glasso import (
    ModelState, bias_gradient, data_loss, fit, gradient, kkt_report, load_model, objective,
    predict, prox_group, residual_matrix, save_model, violation_scores,
)
from aset.tensor import FeatureMatrix, normalize_column

from conftest import random_instance


def zero_state(d, C, lam=1e-3):
    return ModelState(np.zeros((d, C)), np.zeros(C), np.ones(d), lam)


def mp_objective(X, W, b, y, lam, gamma):
    """Objective evaluated with 50 significant digits."""
    mpmath.mp.dps = 50
    l, C = X.shape[0], W.shape[1]
    total = mpmath.mpf(0)
    for i in range(l):
        m = [mpmath.mpf(b[c]) + mpmath.fsum(mpmath.mpf(X[i, j]) * mpmath.mpf(W[j, c])
                                            for j in range(W.shape[0])) for c in range(C)]
        total += mpmath.log(mpmath.fsum(mpmath.exp(v) for v in m)) - m[y[i] - 1]
    pen = mpmath.fsum(mpmath.mpf(gamma[j]) * mpmath.sqrt(mpmath.fsum(mpmath.mpf(w) ** 2 for w in W[j]))
                      for j in range(W.shape[0]))
    return total / l + mpmath.mpf(lam) * pen


# -- objective ---------------------------------------------------------------------

@pytest.mark.parametrize("C", [2, 3, 7])
def test_objective_at_zero_is_log_c(rng, C):
    phi, y = random_instance(rng, 4 * C, 3, C)
    assert abs(objective(zero_state(3, C), phi, y) - np.log(C)) <= 1e-12
    empty = FeatureMatrix.empty(4 * C)
    assert abs(objective(zero_state(0, C), empty, y) - np.log(C)) <= 1e-12


def test_objective_matches_high_precision(rng):
    for _ in range(5):
        phi, y = random_instance(rng, 6, 3, 3)
        W = rng.normal(size=(3, 3)) * 3
        b = rng.normal(size=3)
        gamma = rng.uniform(0.5, 2, 3)
        state = ModelState(W, b, gamma, 0.05)
        ref = mp_objective(phi.values, W, b, y, 0.05, gamma)
        assert abs(objective(state, phi, y) - float(ref)) <= 1e-14


def test_objective_stable_for_large_logits(rng):
    phi, y = random_instance(rng, 6, 2, 2)
    state = ModelState(np.array([[800.0, -800.0], [0.0, 0.0]]), np.zeros(2), np.ones(2), 1e-3)
    assert np.isfinite(objective(state, phi, y))


# -- residual and gradients ---------------------------------------------------------

def test_residual_rows_sum_to_zero_and_signs(rng):
    for _ in range(10):
        phi, y = random_instance(rng, 15, 4, 4)
        state = ModelState(rng.normal(size=(4, 4)) * 5, rng.normal(size=4), np.ones(4), 1e-3)
        R = residual_matrix(state, phi, y)
        assert np.max(np.abs(R.sum(axis=1))) <= 1e-12
        own = R[np.arange(15), y - 1]
        assert np.all(own <= 0)
        other = R.copy()
        other[np.arange(15), y - 1] = 0
        assert np.all(other >= 0)


def test_residual_at_zero_two_classes(rng):
    phi, y = random_instance(rng, 8, 2, 2)
    R = residual_matrix(zero_state(2, 2), phi, y)
    l = 8
    for i in range(l):
        expect = [-1 / (2 * l), 1 / (2 * l)] if y[i] == 1 else [1 / (2 * l), -1 / (2 * l)]
        np.testing.assert_allclose(R[i], expect, atol=1e-15)


def test_gradient_zero_phi():
    R = np.random.default_rng(0).normal(size=(5, 3))
    assert np.all(gradient(np.zeros((5, 2)), R) == 0)


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_against_central_differences(seed):
    rng = np.random.default_rng(seed)
    l, d, C = int(rng.integers(8, 21)), int(rng.integers(1, 6)), int(rng.integers(2, 5))
    phi, y = random_instance(rng, l, d, C)
    W, b = rng.normal(size=(d, C)), rng.normal(size=C)
    R = residual_matrix(ModelState(W, b, np.ones(d), 1e-3), phi, y)
    h = 1e-5
    fd = np.zeros((d, C))
    for j in range(d):
        for c in range(C):
            E = np.zeros((d, C))
            E[j, c] = h
            fd[j, c] = (data_loss(W + E, b, phi, y) - data_loss(W - E, b, phi, y)) / (2 * h)
    assert _rel_err(gradient(phi, R), fd) <= 1e-6
    fdb = np.array([(data_loss(W, b + h * e, phi, y) - data_loss(W, b - h * e, phi, y)) / (2 * h)
                    for e in np.eye(C)])
    assert _rel_err(bias_gradient(R), fdb) <= 1e-6


# -- prox --------------------------------------------------------------------------------

def test_prox_examples():
    assert np.all(prox_group(np.zeros((3, 2)), 1.0, 1.0, 1.0) == 0)
    out = prox_group(np.array([[3.0, 4.0], [1.9, 0.0]]), 1.0, 2.0, 1.0)
    np.testing.assert_allclose(out[0], [1.8, 2.4], atol=1e-15)
    assert np.linalg.norm(out[0]) == pytest.approx(3.0)
    assert np.all(out[1] == 0)


def test_prox_against_scaling_search(rng):
    for _ in range(20):
        V = rng.normal(size=(4, 3)) * rng.uniform(0.1, 3)
        gamma = rng.uniform(0.5, 2, 4)
        step, lam = rng.uniform(0.1, 2), rng.uniform(0.1, 1)
        P = prox_group(V, step, lam, gamma)
        for j in range(4):
            # the minimizer lies on the ray through v; search its scaling densely
            s = np.linspace(0, 1, 200001)
            f = 0.5 * (1 - s) ** 2 * (V[j] @ V[j]) + step * lam * gamma[j] * s * np.linalg.norm(V[j])
            best = s[np.argmin(f)] * V[j]
            np.testing.assert_allclose(P[j], best, atol=1e-4 * np.linalg.norm(V[j]))


# -- fit -----------------------------------------------------------------------------------

def test_fit_huge_lambda_gives_zero_weights(rng):
    phi, y = random_instance(rng, 30, 4, 3)
    state, report = fit(phi, y, 1e3)
    assert np.all(state.W == 0)
    prior = np.bincount(y - 1, minlength=3) / 30
    # optimal bias reproduces the class priors
    expect = -np.sum(prior * np.log(prior))
    assert report.objective == pytest.approx(expect, abs=1e-10)


def test_fit_two_class_sign_matches_grid_search():
    x = np.array([-2.0, -1.5, -1.0, -0.3, 0.4, 1.0, 1.6, 2.2])
    y = np.array([1, 1, 1, 2, 1, 2, 2, 2])
    col, _, _ = normalize_column(x)
    phi = FeatureMatrix.empty(8).append(col, "x")
    lam = 0.01
    state, _ = fit(phi, y, lam)
    # with two classes only the differences u = w1 - w2, v = b1 - b2 matter, and the
    # penalty of the best split of u over the row is lam * |u| / sqrt(2)
    us = np.linspace(-30, 30, 1201)
    vs = np.linspace(-10, 10, 401)
    U, V = np.meshgrid(us, vs)
    m = U[..., None] * col + V[..., None]
    own = np.where(y == 1, m, -m)
    loss = np.mean(np.logaddexp(0, -own), axis=-1) + lam * np.abs(U) / np.sqrt(2)
    u_best = U.flat[np.argmin(loss)]
    assert np.sign(state.W[0, 0] - state.W[0, 1]) == np.sign(u_best) == -1


def test_fit_kkt_and_warm_start_descent(rng):
    phi, y = random_instance(rng, 40, 6, 4)
    state, report = fit(phi, y, 1e-2)
    assert report.converged
    assert kkt_report(state, phi, y).satisfied(1e-6)
    again, rep2 = fit(phi, y, 1e-2, warm=state)
    assert rep2.objective <= report.objective + 1e-15


def test_fit_row_sparsity_structure(rng):
    phi, y = random_instance(rng, 40, 8, 3)
    state, _ = fit(phi, y, 0.03)
    for row in state.W:
        assert np.all(row == 0) or np.all(row != 0)


def test_fit_missing_class_rejected(rng):
    phi, y = random_instance(rng, 12, 2, 2)
    with pytest.raises(MissingClassError):
        fit(phi, y, 1e-3, n_classes=3)


def test_fit_recorded_history_non_increasing(rng):
    phi, y = random_instance(rng, 30, 5, 3)
    _, report = fit(phi, y, 1e-3, record=True)
    h = np.array(report.history)
    assert h.size > 1 and np.all(np.diff(h) <= 1e-12)


# -- violation scores -------------------------------------------------------------------------

def test_duplicate_candidate_scores_non_positive(rng):
    for _ in range(5):
        phi, y = random_instance(rng, 40, 5, 3)
        state, _ = fit(phi, y, 1e-3, tol_kkt=1e-8)
        scores = violation_scores(state, phi, y, phi.values, state.gamma)
        assert np.all(scores <= 0)


def test_orthogonal_candidate_score(rng):
    phi, y = random_instance(rng, 30, 3, 3)
    state, _ = fit(phi, y, 1e-3)
    R = residual_matrix(state, phi, y)
    # project a random column off the span of R's columns
    Q, _ = np.linalg.qr(np.column_stack([R, np.ones(30)]))
    c = rng.normal(size=30)
    c -= Q @ (Q.T @ c)
    c /= np.linalg.norm(c)
    s = violation_scores(state, phi, y, c, 1.3)
    assert s[0] == pytest.approx(-1e-3 * 1.3 - state.epsilon, abs=1e-15)


def test_best_candidate_decreases_objective(rng):
    phi, y = random_instance(rng, 40, 6, 3)
    base = FeatureMatrix.empty(40)
    for j in range(2):
        base = base.append(phi.values[:, j], phi.descriptors[j])
    state, rep = fit(base, y, 1e-3)
    cand = phi.values[:, 2:]
    scores = violation_scores(state, base, y, cand)
    k = int(np.argmax(scores))
    assert scores[k] > 0
    grown = base.append(cand[:, k], phi.descriptors[2 + k])
    _, rep2 = fit(grown, y, 1e-3, np.ones(3), warm=state)
    assert rep2.objective < rep.objective


def test_scores_need_converged_state(rng):
    phi, y = random_instance(rng, 12, 2, 2)
    state = zero_state(2, 2)
    state.converged = False
    with pytest.raises(NotConvergedError):
        violation_scores(state, phi, y, phi.values)


# -- predict -----------------------------------------------------------------------------------

def test_predict_properties(rng):
    X = rng.normal(size=(10, 3))
    labels, P = predict(zero_state(3, 4), X)
    assert np.all(P == 0.25) and np.all(labels == 1)
    state = ModelState(rng.normal(size=(3, 4)), rng.normal(size=4), np.ones(3), 1e-3)
    labels, P = predict(state, X)
    assert np.all((P >= 0) & (P <= 1))
    assert np.max(np.abs(P.sum(axis=1) - 1)) <= 1e-12
    shifted = ModelState(state.W, state.b + 7.5, state.gamma, state.lam)
    np.testing.assert_allclose(predict(shifted, X)[1], P, atol=1e-12)
    with pytest.raises(DimensionError):
        predict(state, X[:, :2])


# -- persistence -------------------------------------------------------------------------------

def test_model_round_trip(tmp_path, rng):
    phi, y = random_instance(rng, 30, 4, 3)
    state, _ = fit(phi, y, 1e-3)
    save_model(state, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    assert back.W.tobytes() == state.W.tobytes() and back.b.tobytes() == state.b.tobytes()
    assert back.descriptors == state.descriptors and back.lam == state.lam


def test_corrupt_model_file(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("{not json")
    with pytest.raises(FileFormatError):
        load_model(p)
