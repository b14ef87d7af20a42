"""Detector layer: merge-effort identities, the working-set SVM solver
against a projected-gradient reference, the window monitor, the
latch-and-switch pipeline, and model serialization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import falltime.dataset as ds
import falltime.detectors as det
from falltime.errors import (InsufficientData, NoConvergence, SingularR)


def spd_matrix(rng, d):
    M = rng.normal(size=(d, d))
    return M @ M.T + d * np.eye(d)


def effort_loops(A, b, R_inv):
    """Variance-increase oracle: literal sums of squared Mahalanobis
    residuals before and after the merge."""
    def sse(rows):
        mu = sum(rows) / len(rows)
        total = 0.0
        for r in rows:
            dv = r - mu
            total += float(dv @ R_inv @ dv)
        return total

    rows = [np.asarray(r, dtype=float) for r in A]
    return sse(rows + [np.asarray(b, dtype=float)]) - sse(rows)


def identity_scaler(p):
    return ds.ScalerParams(min_=np.zeros(p), max_=np.ones(p))


def test_ward_effort_oracle_batch():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(300):
        k = rng.integers(2, 10)
        d = rng.integers(1, 7)
        A = rng.normal(size=(k, d)) * rng.uniform(0.1, 10.0)
        b = rng.normal(size=d)
        R_inv = spd_matrix(rng, d)
        got = det.ward_effort(A, b, R_inv)
        expect = effort_loops(A, b, R_inv)
        worst = max(worst, abs(got - expect) / max(abs(expect), 1.0))
        assert det.ward_effort_sse(A, b, R_inv) == pytest.approx(
            expect, rel=1e-9, abs=1e-9)
    assert worst < 1e-10


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_ward_effort_nonnegative_and_routes_agree(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 8))
    d = int(rng.integers(1, 5))
    A = rng.normal(size=(k, d))
    b = rng.normal(size=d)
    R_inv = spd_matrix(rng, d)
    closed = det.ward_effort(A, b, R_inv)
    assert closed >= -1e-12
    assert closed == pytest.approx(det.ward_effort_sse(A, b, R_inv),
                                   rel=1e-8, abs=1e-10)


def test_ward_effort_needs_two_rows():
    with pytest.raises(ValueError):
        det.ward_effort(np.ones((1, 3)), np.ones(3), np.eye(3))


def test_window_efforts_match_scalar():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 10, 4))
    R_inv = spd_matrix(rng, 4)
    batch = det.window_efforts(X, R_inv)
    for i in range(40):
        assert batch[i] == pytest.approx(
            det.ward_effort(X[i, :-1], X[i, -1], R_inv), rel=1e-12)


def test_dcor_matrix():
    import falltime.features as ft
    rng = np.random.default_rng(2)
    frames = rng.normal(size=(80, 4))
    frames[:, 3] = 2.0 * frames[:, 0] + 0.1 * rng.normal(size=80)
    R = det.dcor_matrix(frames)
    assert R.shape == (4, 4)
    assert np.array_equal(R, R.T)
    assert np.allclose(np.diag(R), 1.0)
    assert R[0, 3] == pytest.approx(
        ft.distance_correlation(frames[:, 0], frames[:, 3]), abs=1e-12)
    assert R[0, 3] > R[0, 1]


def test_regularized_inverse():
    rng = np.random.default_rng(3)
    R = spd_matrix(rng, 5)
    lam = 1e-6
    R_inv = det.regularized_inverse(R, lam)
    assert np.array_equal(R_inv, R_inv.T)
    assert np.allclose(R_inv @ (R + lam * np.eye(5)), np.eye(5),
                       atol=1e-9)
    bad = np.full((3, 3), np.nan)
    with pytest.raises(SingularR):
        det.regularized_inverse(bad)


def test_nn_train_threshold_is_max_training_effort():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(60, 10, 3))
    model = det.nn_train(X)
    vals = det.nn_decision_values(model, X)
    assert model.threshold == pytest.approx(vals.max(), rel=1e-12)
    # the extreme training window itself stays nominal: strict exceed
    worst = X[int(np.argmax(vals))]
    _, faulty = det.nn_score(model, worst)
    assert not faulty
    grown = X[int(np.argmax(vals))].copy()
    grown[-1] += 3.0
    _, faulty = det.nn_score(model, grown)
    assert faulty


def test_nn_decision_values_route():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(30, 10, 3))
    model = det.nn_train(X)
    Xs = ds.apply_scaler(model.scaler, X)
    assert np.allclose(det.nn_decision_values(model, X),
                       det.window_efforts(Xs, model.R_inv), atol=1e-12)


def test_nn_train_needs_windows():
    with pytest.raises(InsufficientData):
        det.nn_train(np.zeros((1, 10, 3)))


def make_svm_problem(rng, n=8, p=3):
    X = rng.normal(size=(n, 1, p))
    y = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
    if np.all(y == y[0]):
        y[0] = -y[0]
    return X, y


def kkt_violation(K, y, alpha, bias, C, f):
    """Largest violation of the soft-margin optimality conditions."""
    worst = 0.0
    margins = y * f
    for i in range(y.size):
        if alpha[i] < 1e-8 * C:
            worst = max(worst, 1.0 - margins[i])
        elif alpha[i] > C * (1 - 1e-8):
            worst = max(worst, margins[i] - 1.0)
        else:
            worst = max(worst, abs(margins[i] - 1.0))
    worst = max(worst, abs(float(y @ alpha)) / max(C, 1.0))
    return worst


def recover_alpha(flat, y, model):
    """Map stored support coefficients back onto training rows. Support
    rows keep training order, so a forward scan suffices."""
    alpha = np.zeros(y.size)
    j = 0
    for i in range(y.size):
        if j < model.support.shape[0] and np.array_equal(
                model.support[j], flat[i]):
            alpha[i] = model.coef[j] * y[i]
            j += 1
    assert j == model.support.shape[0]
    return alpha


def test_smo_matches_projected_gradient_oracle():
    rng = np.random.default_rng(6)
    for trial in range(6):
        X, y = make_svm_problem(rng)
        C = float(rng.uniform(0.5, 20.0))
        model = det.svm_train(X, y, C=C, tol=1e-10)
        flat = ds.apply_scaler(model.scaler, X).reshape(X.shape[0], -1)
        d2 = ((flat[:, None, :] - flat[None, :, :]) ** 2).sum(axis=2)
        K = np.exp(-model.gamma * d2)
        alpha_ref, bias_ref = det.svm_qp_oracle(K, y, C)
        alpha_smo = recover_alpha(flat, y, model)

        obj_gap = abs(det.dual_objective(K, y, alpha_smo)
                      - det.dual_objective(K, y, alpha_ref))
        assert obj_gap < 1e-6

        vals = det.svm_decision_values(model, X)
        f_ref = K @ (alpha_ref * y) + bias_ref
        assert np.max(np.abs(vals - f_ref)) < 1e-5
        assert kkt_violation(K, y, alpha_smo, model.bias, C, vals) < 1e-5
        assert abs(float(y @ alpha_smo)) < 1e-8 * max(C, 1.0)


def test_smo_two_point_symmetry():
    X = np.array([[[-1.0]], [[1.0]]])
    y = np.array([1.0, -1.0])
    model = det.svm_train(X, y, C=10.0, gamma=0.5, tol=1e-12)
    mid = np.array([[[0.0]]])
    assert abs(det.svm_decision_values(model, mid)[0]) < 1e-12
    assert model.support.shape[0] == 2


def test_smo_xor_pattern():
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    labels = np.array([1.0, 1.0, -1.0, -1.0])
    X = np.concatenate([
        c + 0.08 * rng.normal(size=(10, 2)) for c in centers])[:, None, :]
    y = np.repeat(labels, 10)
    model = det.svm_train(X, y, C=10.0, tol=1e-8)
    vals = det.svm_decision_values(model, X)
    assert np.all(np.sign(vals) == y)


def test_svm_train_validates_labels():
    X = np.random.default_rng(8).normal(size=(6, 1, 2))
    with pytest.raises(ValueError):
        det.svm_train(X, np.ones(6))


def test_svm_no_convergence():
    rng = np.random.default_rng(9)
    X, y = make_svm_problem(rng, n=12)
    with pytest.raises(NoConvergence):
        det.svm_train(X, y, tol=1e-12, max_iter=1)


def test_default_gamma_formula():
    rng = np.random.default_rng(10)
    F = rng.normal(size=(50, 4)) * np.array([1.0, 2.0, 3.0, 4.0])
    expect = 1.0 / (4 * F.var(axis=0).mean())
    assert det.default_gamma(F) == pytest.approx(expect, rel=1e-12)
    assert det.default_gamma(np.ones((5, 3))) == pytest.approx(1.0 / 3.0)


def test_monitor_examples():
    # verdict streams use True for faulty
    s, f = False, True
    assert det.monitor([s, f, s, f, f], n_monitor=3,
                       fire_threshold=2) == 3
    assert det.monitor([s, s, f], n_monitor=1, fire_threshold=1) == 2
    assert det.monitor([s, s, s], n_monitor=3, fire_threshold=1) is None
    assert det.monitor([f], n_monitor=4, fire_threshold=1) == 0
    assert det.monitor([s, f, f, f], n_monitor=3, fire_threshold=3) == 3
    times = np.array([2.1, 2.4, 2.7])
    assert det.monitor([s, f, f], n_monitor=1, fire_threshold=1,
                       end_times=times) == pytest.approx(2.4)


def test_monitor_validates_parameters():
    with pytest.raises(ValueError):
        det.monitor([True], n_monitor=0)
    with pytest.raises(ValueError):
        det.monitor([True], n_monitor=2, fire_threshold=3)
    with pytest.raises(ValueError):
        det.monitor([True], n_monitor=2, fire_threshold=0)


@given(verdicts=st.lists(st.booleans(), max_size=30),
       n_monitor=st.integers(1, 6), fire=st.integers(1, 6))
def test_monitor_matches_naive_scan(verdicts, n_monitor, fire):
    if fire > n_monitor:
        fire = n_monitor
    expect = None
    for k in range(len(verdicts)):
        lo = max(0, k - n_monitor + 1)
        if sum(verdicts[lo:k + 1]) >= fire:
            expect = k
            break
    assert det.monitor(verdicts, n_monitor, fire) == expect


def crafted_identifier():
    """f(x) = exp(-(x - 1)^2) - 0.5: abrupt (negative) iff the velocity
    window sits far from 1."""
    return det.SvmModel(
        support=np.array([[1.0]]), coef=np.array([1.0]), bias=-0.5,
        gamma=1.0, C=1.0, n_window=1, dim=1,
        scaler=identity_scaler(1))


def crafted_nn(threshold):
    return det.NnModel(R=np.eye(1), R_inv=np.eye(1),
                       threshold=threshold, n_window=3,
                       scaler=identity_scaler(1))


def vel_windows(pattern):
    # 0 keeps the identifier quiet, 1 trips it
    return np.where(np.asarray(pattern, dtype=float) > 0.5,
                    5.0, 1.0)[:, None, None]


def main_windows(deltas):
    # effort of a [0, 0, delta] window is (2/3) * delta^2
    out = np.zeros((len(deltas), 3, 1))
    out[:, 2, 0] = np.asarray(deltas, dtype=float)
    return out


def test_multiclass_never_latches():
    model = det.MulticlassModel(
        identifier=crafted_identifier(),
        incipient_detector=crafted_nn(threshold=0.4),
        abrupt_detector=crafted_nn(threshold=1e18))
    X = main_windows([0.0, 1.0, 2.0, 0.0])
    V = vel_windows([0, 0, 0, 0])
    ends = 2.0 + 0.03 * np.arange(4)
    trace = det.multiclass_stream(model, X, V, ends)
    assert trace.latch_index is None and trace.latch_time is None
    assert not trace.identifier_abrupt.any()
    # the incipient detector drives every verdict: effort > 0.4
    assert np.array_equal(trace.faulty, [False, True, True, False])
    assert np.array_equal(trace.faulty, trace.incipient_faulty)


def test_multiclass_latches_mid_stream():
    model = det.MulticlassModel(
        identifier=crafted_identifier(),
        incipient_detector=crafted_nn(threshold=1e18),
        abrupt_detector=crafted_nn(threshold=-1.0))
    X = main_windows([0.0, 0.0, 0.0, 0.0, 0.0])
    V = vel_windows([0, 0, 1, 0, 1])
    ends = 2.0 + 0.03 * np.arange(5)
    trace = det.multiclass_stream(model, X, V, ends)
    assert trace.latch_index == 2
    assert trace.latch_time == pytest.approx(ends[2])
    # before the latch the (mute) incipient detector rules; after it the
    # always-firing abrupt detector does, and the latch never resets
    assert np.array_equal(trace.faulty, [False, False, True, True, True])
    assert np.array_equal(trace.identifier_abrupt,
                          [False, False, True, False, True])


def test_multiclass_latches_at_first_window():
    model = det.MulticlassModel(
        identifier=crafted_identifier(),
        incipient_detector=crafted_nn(threshold=1e18),
        abrupt_detector=crafted_nn(threshold=-1.0))
    X = main_windows([0.0, 0.0])
    V = vel_windows([1, 0])
    trace = det.multiclass_stream(model, X, V, np.array([2.0, 2.03]))
    assert trace.latch_index == 0
    assert trace.faulty.all()


@given(pattern=st.lists(st.booleans(), min_size=1, max_size=25),
       deltas=st.lists(st.sampled_from([0.0, 1.0, 2.0]), min_size=1,
                       max_size=25))
@settings(max_examples=40)
def test_multiclass_stream_equals_stepwise(pattern, deltas):
    n = min(len(pattern), len(deltas))
    pattern, deltas = pattern[:n], deltas[:n]
    model = det.MulticlassModel(
        identifier=crafted_identifier(),
        incipient_detector=crafted_nn(threshold=0.4),
        abrupt_detector=crafted_nn(threshold=1.5))
    X = main_windows(deltas)
    V = vel_windows(pattern)
    ends = 2.0 + 0.03 * np.arange(n)
    trace = det.multiclass_stream(model, X, V, ends)

    latch = det.LatchState()
    for i in range(n):
        value, faulty, latch = det.multiclass_step(
            model, latch, X[i], V[i], index=i, end_time=float(ends[i]))
        assert value == pytest.approx(trace.values[i], abs=1e-12)
        assert faulty == trace.faulty[i]
    assert latch.latch_index == trace.latch_index
    assert latch.latch_time == trace.latch_time


def test_detector_score_dispatch():
    rng = np.random.default_rng(11)
    X = rng.uniform(size=(20, 10, 3))
    nn = det.nn_train(X)
    v_nn, f_nn = det.detector_score(nn, X[0])
    assert (v_nn, f_nn) == det.nn_score(nn, X[0])
    with pytest.raises(TypeError):
        det.detector_score(object(), X[0])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    X = rng.uniform(size=(30, 10, 3))
    probes = rng.uniform(size=(7, 10, 3))

    nn = det.nn_train(X)
    path_nn = tmp_path / "nn.npz"
    det.save_model(nn, path_nn, extra={"kind": "nn", "lead": 1.5})
    loaded, extra = det.load_model(path_nn)
    assert extra == {"kind": "nn", "lead": 1.5}
    assert np.array_equal(det.nn_decision_values(loaded, probes),
                          det.nn_decision_values(nn, probes))
    assert loaded.threshold == nn.threshold

    y = np.where(X[:, -1, 0] > 0.5, -1.0, 1.0)
    if len(set(y)) == 1:
        y[0] = -y[0]
    svm = det.svm_train(X, y)
    path_svm = tmp_path / "svm.npz"
    det.save_model(svm, path_svm)
    loaded_svm, _ = det.load_model(path_svm)
    assert np.array_equal(det.svm_decision_values(loaded_svm, probes),
                          det.svm_decision_values(svm, probes))

    mc = det.MulticlassModel(identifier=crafted_identifier(),
                             incipient_detector=nn,
                             abrupt_detector=svm)
    path_mc = tmp_path / "mc.npz"
    det.save_model(mc, path_mc)
    loaded_mc, _ = det.load_model(path_mc)
    V = vel_windows([0, 1, 0])
    Xq = rng.uniform(size=(3, 10, 3))
    ends = np.array([2.0, 2.03, 2.06])
    a = det.multiclass_stream(mc, Xq, V, ends)
    b = det.multiclass_stream(loaded_mc, Xq, V, ends)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.faulty, b.faulty)
    assert a.latch_index == b.latch_index


def test_save_is_byte_stable(tmp_path):
    rng = np.random.default_rng(13)
    X = rng.uniform(size=(25, 10, 3))
    nn = det.nn_train(X)
    p1 = tmp_path / "a.npz"
    p2 = tmp_path / "b.npz"
    det.save_model(nn, p1, extra={"x": 1})
    det.save_model(nn, p2, extra={"x": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_unknown_format(tmp_path):
    rng = np.random.default_rng(14)
    nn = det.nn_train(rng.uniform(size=(20, 10, 3)))
    path = tmp_path / "m.npz"
    det.save_model(nn, path)
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    arrays["format_version"] = np.array(99)
    np.savez(tmp_path / "bad.npz", **arrays)
    with pytest.raises(ValueError):
        det.load_model(tmp_path / "bad.npz")
