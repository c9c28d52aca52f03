import numpy as np
import pytest
from scipy.optimize import minimize

from planefinder.classifier import (ClassifierError, FeatureScaler, MulticlassModel,
                                    SvmModel, apply_scaler, classify,
                                    decision_value, decision_values, dual_objective,
                                    fit_scaler, hik, hik_matrix, identity_scaler,
                                    kernel_matrix, predict, train_multiclass,
                                    train_svm)


def test_hik_basics():
    a = np.array([0.2, 0.5, 0.3])
    b = np.array([0.4, 0.1, 0.5])
    assert hik(a, b) == pytest.approx(0.2 + 0.1 + 0.3)
    assert hik(a, b) == hik(b, a)
    assert hik(a, a) == pytest.approx(a.sum())
    assert hik(a, b) <= min(a.sum(), b.sum()) + 1e-12


def test_hik_rejects_bad_input():
    with pytest.raises(ClassifierError):
        hik(np.array([0.5, -0.1]), np.array([0.5, 0.5]))
    with pytest.raises(ClassifierError):
        hik(np.array([0.5]), np.array([0.5, 0.5]))


def test_hik_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    a = rng.random((7, 5))
    b = rng.random((4, 5))
    g = hik_matrix(a, b)
    for i in range(7):
        for j in range(4):
            assert g[i, j] == pytest.approx(hik(a[i], b[j]), abs=1e-12)


def test_hik_gram_positive_semidefinite():
    rng = np.random.default_rng(1)
    data = rng.random((40, 12))
    g = kernel_matrix(data, data, "hik")
    evals = np.linalg.eigvalsh(0.5 * (g + g.T))
    assert evals.min() >= -1e-9


def test_unknown_kernel():
    with pytest.raises(ClassifierError):
        kernel_matrix(np.zeros((2, 2)), np.zeros((2, 2)), "rbf")


def test_scaler_maps_to_unit_box():
    codes = np.array([[0.0, 2.0, 5.0], [4.0, 2.0, 7.0], [2.0, 2.0, 6.0]])
    sc = fit_scaler(codes)
    out = apply_scaler(codes, sc)
    assert np.allclose(out[:, 0], [0.0, 1.0, 0.5])
    assert np.allclose(out[:, 1], 0.5)  # constant dim
    assert np.allclose(out[:, 2], [0.0, 1.0, 0.5])
    # out-of-range clamps
    assert np.allclose(apply_scaler(np.array([-10.0, 9.0, 100.0]), sc),
                       [0.0, 0.5, 1.0])


def test_identity_scaler_passthrough():
    sc = identity_scaler(3)
    z = np.array([-2.0, 0.5, 7.0])
    assert np.array_equal(apply_scaler(z, sc), z)


def test_two_point_analytic_solution():
    # f(x) = x separates z=+1/-1 with margin 1: alpha = 0.5, bias = 0
    z = np.array([[1.0], [-1.0]])
    y = np.array([1.0, -1.0])
    m = train_svm(z, y, c=10.0, kernel="linear", class_weights=(1.0, 1.0),
                  scaler=identity_scaler(1))
    assert np.allclose(sorted(m.dual_coefs), [-0.5, 0.5], atol=1e-6)
    assert m.bias == pytest.approx(0.0, abs=1e-6)
    assert decision_value(m, np.array([0.5])) == pytest.approx(0.5, abs=1e-6)


def _oracle_dual(gram, y, box):
    """Independent QP solve of the SVM dual by SLSQP."""
    n = y.shape[0]
    q = (y[:, None] * y[None, :]) * gram

    def neg_dual(a):
        return 0.5 * a @ q @ a - a.sum()

    def grad(a):
        return q @ a - np.ones(n)

    cons = {"type": "eq", "fun": lambda a: a @ y, "jac": lambda a: y}
    res = minimize(neg_dual, np.zeros(n), jac=grad, method="SLSQP",
                   bounds=[(0.0, b) for b in box], constraints=[cons],
                   options={"maxiter": 500, "ftol": 1e-12})
    return -res.fun


@pytest.mark.parametrize("kernel", ["linear", "hik"])
def test_smo_matches_qp_oracle(kernel):
    rng = np.random.default_rng(7)
    for trial in range(5):
        n = 20
        z = rng.random((n, 4))
        y = np.where(rng.random(n) > 0.5, 1.0, -1.0)
        if not (np.any(y > 0) and np.any(y < 0)):
            y[0] = -y[0]
        z[y > 0, 0] += 0.3
        c = [0.5, 1.0, 5.0][trial % 3]
        m = train_svm(z, y, c=c, kernel=kernel, class_weights=(1.0, 1.0),
                      scaler=identity_scaler(4))
        gram = kernel_matrix(z, z, kernel)
        # recover the full alpha vector from the kept support vectors
        alpha = np.zeros(n)
        for sv, coef in zip(m.support_vectors, m.dual_coefs):
            idx = int(np.argmin(((z - sv) ** 2).sum(axis=1)))
            alpha[idx] += abs(coef)
        ours = dual_objective(alpha, gram=gram, y=y)
        oracle = _oracle_dual(gram, y, np.full(n, c))
        assert ours >= oracle - 1e-5 * max(1.0, abs(oracle))


def test_kkt_conditions_hold():
    rng = np.random.default_rng(8)
    n = 30
    z = rng.random((n, 3))
    y = np.where(z[:, 0] + 0.2 * rng.normal(size=n) > 0.5, 1.0, -1.0)
    if not (np.any(y > 0) and np.any(y < 0)):
        y[0] = -y[0]
    c = 2.0
    m = train_svm(z, y, c=c, kernel="linear", class_weights=(1.0, 1.0),
                  scaler=identity_scaler(3))
    alpha = np.zeros(n)
    for sv, coef in zip(m.support_vectors, m.dual_coefs):
        idx = int(np.argmin(((z - sv) ** 2).sum(axis=1)))
        alpha[idx] += abs(coef)
    f = decision_values(m, z)
    margin = y * f
    tol = 1e-3
    for i in range(n):
        if alpha[i] <= 1e-8:
            assert margin[i] >= 1.0 - tol
        elif alpha[i] >= c - 1e-8:
            assert margin[i] <= 1.0 + tol
        else:
            assert abs(margin[i] - 1.0) <= tol


def test_duplicated_data_with_halved_c_equivalent():
    rng = np.random.default_rng(9)
    n = 20
    z = rng.random((n, 3))
    y = np.where(z[:, 1] > 0.5, 1.0, -1.0)
    if not (np.any(y > 0) and np.any(y < 0)):
        y[0] = -y[0]
    m1 = train_svm(z, y, c=1.0, kernel="hik", class_weights=(1.0, 1.0),
                   scaler=identity_scaler(3))
    m2 = train_svm(np.vstack([z, z]), np.concatenate([y, y]), c=0.5,
                   kernel="hik", class_weights=(1.0, 1.0),
                   scaler=identity_scaler(3))
    grid = rng.random((15, 3))
    assert np.allclose(decision_values(m1, grid), decision_values(m2, grid),
                       atol=2e-3)


def test_default_class_weights_balance():
    rng = np.random.default_rng(10)
    z = rng.random((12, 2))
    y = np.array([1.0] * 3 + [-1.0] * 9)
    m = train_svm(z, y, c=1.0, kernel="linear")
    assert m.class_weights == (3.0, 1.0)


def test_train_errors():
    with pytest.raises(ClassifierError):
        train_svm(np.ones((4, 2)), np.ones(4))  # one class only
    bad = np.ones((4, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ClassifierError):
        train_svm(bad, np.array([1.0, 1.0, -1.0, -1.0]))


def test_decision_dim_mismatch():
    z = np.array([[1.0, 0.0], [0.0, 1.0]])
    m = train_svm(z, np.array([1.0, -1.0]), kernel="linear",
                  scaler=identity_scaler(2))
    with pytest.raises(ClassifierError):
        decision_values(m, np.zeros(3))


def test_predict_sign_convention():
    m = SvmModel(support_vectors=np.zeros((1, 2)), dual_coefs=np.zeros(1),
                 bias=0.0, c=1.0, class_weights=(1.0, 1.0), kernel="linear",
                 scaler=identity_scaler(2))
    assert predict(m, np.zeros(2)) == 1


def test_multiclass_three_gaussians():
    rng = np.random.default_rng(11)
    centers = np.array([[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]])
    z = np.vstack([c + 0.06 * rng.normal(size=(40, 2)) for c in centers])
    labels = np.repeat([0, 1, 2], 40)
    z = np.clip(z, 0.0, 1.0)
    model = train_multiclass(z, labels, c=5.0, kernel="hik")
    correct = sum(classify(model, z[i])[0] == labels[i] for i in range(len(labels)))
    assert correct / len(labels) >= 0.95


def test_multiclass_ignores_nonstandard_label():
    rng = np.random.default_rng(12)
    z = np.clip(np.vstack([0.2 + 0.05 * rng.normal(size=(10, 2)),
                           0.8 + 0.05 * rng.normal(size=(10, 2)),
                           rng.random((5, 2))]), 0, 1)
    labels = np.array([0] * 10 + [1] * 10 + [-1] * 5)
    model = train_multiclass(z, labels, kernel="hik")
    assert model.class_ids == (0, 1)


def test_classify_none_and_tie_rules():
    def flat_machine(bias):
        return SvmModel(support_vectors=np.zeros((1, 2)), dual_coefs=np.zeros(1),
                        bias=bias, c=1.0, class_weights=(1.0, 1.0),
                        kernel="linear", scaler=identity_scaler(2))

    model = MulticlassModel(class_ids=(0, 1), machines={0: flat_machine(-1.0),
                                                        1: flat_machine(-2.0)})
    assert classify(model, np.zeros(2))[0] is None
    model = MulticlassModel(class_ids=(0, 1), machines={0: flat_machine(1.5),
                                                        1: flat_machine(1.5)})
    best, scores = classify(model, np.zeros(2))
    assert best == 0 and scores == {0: 1.5, 1: 1.5}


def test_multiclass_needs_two_classes():
    with pytest.raises(ClassifierError):
        train_multiclass(np.random.default_rng(0).random((6, 2)),
                         np.array([0, 0, 0, -1, -1, -1]))
