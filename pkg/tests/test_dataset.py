"""Window extraction, labeling semantics, scaling, splits, and the
identifier window builder."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

import falltime.dataset as ds
from falltime.errors import LeadTimeOutOfRange, TooFewTrajectories

D = 3


def frames_for(traj):
    return np.arange(traj.t.size * D, dtype=float).reshape(-1, D)


def labels_of(traj, lead, n_window=10):
    wins = ds.label_windows(traj, lead, n_window, frames=frames_for(traj))
    return np.array([w.y for w in wins]), [w.end_time for w in wins]


def test_safe_trajectory_is_all_nominal(make_traj):
    traj = make_traj(kind="none", n=40)
    y, _ = labels_of(traj, 0.0)
    assert y.size == 40 - 10 + 1
    assert np.all(y == 1)
    y2, _ = labels_of(traj, 2.0)
    assert np.all(y2 == 1)


def test_lead_zero_marks_nothing_faulty(make_traj):
    # samples stop strictly before the fall, so the boundary is never
    # crossed at zero lead
    traj = make_traj(kind="abrupt", magnitude=50.0, t_start=3.0,
                     duration=0.075, fall_time=5.0, n=90)
    assert traj.t[-1] < 5.0
    y, _ = labels_of(traj, 0.0)
    assert np.all(y == 1)


def test_label_boundary_strictly_after(make_traj):
    # windows whose end sample exceeds fall_time - lead become faulty
    traj = make_traj(kind="abrupt", magnitude=50.0, t_start=3.0,
                     duration=0.075, fall_time=5.0, n=90)
    lead = 1.0
    y, ends = labels_of(traj, lead)
    expect = np.where(np.array(ends) > 5.0 - lead, -1, 1)
    assert np.array_equal(y, expect)
    assert (y == -1).any() and (y == 1).any()


def test_label_boundary_is_exclusive(make_traj):
    # an end time exactly on the boundary stays nominal
    t = 2.0 + 0.25 * np.arange(16)
    traj = make_traj(kind="incipient", magnitude=20.0, t_start=2.0,
                     duration=1.0, fall_time=6.0, t=t)
    y, ends = labels_of(traj, 1.0, n_window=4)
    ends = np.array(ends)
    assert 5.0 in ends
    assert y[ends == 5.0] == 1
    assert np.all(y[ends > 5.0] == -1)


def test_abrupt_boundary_clamped_to_onset(make_traj):
    traj = make_traj(kind="abrupt", magnitude=50.0, t_start=3.0,
                     duration=0.075, fall_time=3.5, n=45)
    assert ds.label_boundary(traj, 2.0) == 3.0
    y, ends = labels_of(traj, 2.0)
    expect = np.where(np.array(ends) > 3.0, -1, 1)
    assert np.array_equal(y, expect)


def test_incipient_boundary_not_clamped(make_traj):
    traj = make_traj(kind="incipient", magnitude=20.0, t_start=2.5,
                     duration=1.0, fall_time=3.5, t=2.52 + 0.03 *
                     np.arange(30))
    assert ds.label_boundary(traj, 2.0) == pytest.approx(1.5)
    y, _ = labels_of(traj, 2.0)
    assert np.all(y == -1)


def test_lead_out_of_range(make_traj):
    traj = make_traj(kind="abrupt", magnitude=50.0, t_start=3.0,
                     duration=0.075, fall_time=5.0, n=90)
    for bad in (-0.1, 2.0 + 1e-9):
        with pytest.raises(LeadTimeOutOfRange):
            ds.label_windows(traj, bad, frames=frames_for(traj))


@given(lead_a=st.floats(0.0, 2.0), lead_b=st.floats(0.0, 2.0))
def test_faulty_sets_nest_as_lead_grows(make_traj, lead_a, lead_b):
    traj = make_traj(kind="incipient", magnitude=20.0, t_start=2.0,
                     duration=1.0, fall_time=4.4, n=70)
    lo, hi = sorted((lead_a, lead_b))
    y_lo, _ = labels_of(traj, lo)
    y_hi, _ = labels_of(traj, hi)
    assert np.all((y_lo == -1) <= (y_hi == -1))


def test_safe_trajectories_clip_to_six_seconds(make_traj):
    traj = make_traj(kind="none", n=260, dt=0.03)
    assert ds.retained_samples(traj) == 200
    y, ends = labels_of(traj, 0.0)
    assert y.size == 200 - 10 + 1
    assert max(ends) == pytest.approx(traj.t[199])

    fallen = make_traj(kind="abrupt", magnitude=50.0, t_start=3.0,
                       duration=0.075, fall_time=12.0, n=260)
    assert ds.retained_samples(fallen) == 260


def test_window_set_matches_per_trajectory_labels(params, small_dataset):
    _, trajs = small_dataset
    ws = ds.build_window_set(trajs, params)
    assert ws.X.shape[1:] == (10, 7)
    for lead in (0.0, 0.5, 1.3, 2.0):
        got = ws.labels(lead)
        expect = []
        for traj in trajs:
            expect.extend(w.y for w in ds.label_windows(
                traj, lead, params=params))
        assert np.array_equal(got, np.array(expect))


def test_window_set_structure(params, small_dataset):
    _, trajs = small_dataset
    ws = ds.build_window_set(trajs, params)
    assert len(ws.ids) == len(trajs)
    total = 0
    for idx, traj in enumerate(trajs):
        rows = ws.windows_of(idx)
        n_keep = ds.retained_samples(traj)
        assert rows.size == max(0, n_keep - 10 + 1)
        ends = ws.end_times[rows]
        assert np.all(np.diff(ends) > 0)
        if rows.size:
            assert ends[0] == pytest.approx(traj.t[9])
            # windows never span trajectories
            assert np.all(ws.traj_index[rows] == idx)
        total += rows.size
    assert ws.X.shape[0] == total
    fell = np.array([t.fall_time is not None for t in trajs])
    assert np.array_equal(np.isnan(ws.fall_times), ~fell)


def test_window_set_rejects_bad_lead(params, small_dataset):
    _, trajs = small_dataset
    ws = ds.build_window_set(trajs, params)
    with pytest.raises(LeadTimeOutOfRange):
        ws.labels(2.3)


def test_scaler_hand_oracle():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(30, 10, 4)) * np.array([1.0, 10.0, 0.1, 5.0])
    X[..., 2] = 7.0
    sp = ds.fit_scaler(X)
    flat = X.reshape(-1, 4)
    assert np.array_equal(sp.min_, flat.min(axis=0))
    assert np.array_equal(sp.max_, flat.max(axis=0))
    scaled = ds.apply_scaler(sp, X)
    for d in (0, 1, 3):
        lo, hi = flat[:, d].min(), flat[:, d].max()
        assert np.allclose(scaled[..., d], (X[..., d] - lo) / (hi - lo),
                           atol=1e-12)
    assert np.all(scaled[..., 2] == 0.0)
    assert scaled.min() >= 0.0 and scaled.max() <= 1.0


def test_scaler_inference_is_unclipped():
    X = np.linspace(0.0, 1.0, 40).reshape(10, 4, 1)
    sp = ds.fit_scaler(X)
    probe = np.array([[[2.0]], [[-1.0]]])
    out = ds.apply_scaler(sp, probe)
    assert out.max() > 1.0 and out.min() < 0.0
    clipped = ds.apply_scaler(sp, probe, clip=True)
    assert clipped.max() <= 1.0 and clipped.min() >= 0.0


def test_scaler_does_not_mutate_input():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(12, 5, 3))
    before = X.tobytes()
    sp = ds.fit_scaler(X)
    ds.apply_scaler(sp, X)
    ds.apply_scaler(sp, X, clip=True)
    assert X.tobytes() == before


def test_fit_scaler_rejects_empty():
    with pytest.raises(ValueError):
        ds.fit_scaler(np.zeros((0, 10, 3)))


def synthetic_population(make_traj, counts):
    trajs = []
    k = 0
    for (kind, fell), n in counts.items():
        for _ in range(n):
            trajs.append(make_traj(
                tid=f"s{k:03d}", kind=kind,
                magnitude=10.0 if kind != "none" else 0.0,
                t_start=2.6 if kind != "none" else 0.0,
                duration=0.075 if kind == "abrupt" else 1.0,
                fall_time=4.0 if fell else None, n=30, seed=k))
            k += 1
    return trajs


def test_kfold_split_stratified(make_traj):
    counts = {("abrupt", True): 12, ("abrupt", False): 9,
              ("incipient", True): 10, ("incipient", False): 9}
    trajs = synthetic_population(make_traj, counts)
    plan = ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=3, n_folds=5)
    all_ids = [t.id for t in trajs]
    seen = []
    for f in range(5):
        fold = plan.fold_ids(f)
        train = plan.train_ids(f)
        assert set(fold) | set(train) == set(all_ids)
        assert not set(fold) & set(train)
        seen.extend(fold)
    assert sorted(seen) == sorted(all_ids)
    # each stratum spreads evenly across folds
    by_id = {t.id: t for t in trajs}
    for (kind, fell), n in counts.items():
        sizes = []
        for f in range(5):
            sizes.append(sum(
                1 for tid in plan.fold_ids(f)
                if by_id[tid].fault.kind == kind
                and (by_id[tid].fall_time is not None) == fell))
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == n


def test_kfold_split_deterministic(make_traj):
    counts = {("abrupt", True): 12, ("abrupt", False): 9,
              ("incipient", True): 10, ("incipient", False): 9}
    trajs = synthetic_population(make_traj, counts)
    a = ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=3, n_folds=5)
    b = ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=3, n_folds=5)
    c = ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=4, n_folds=5)
    assert np.array_equal(a.assignment, b.assignment)
    assert not np.array_equal(a.assignment, c.assignment)


def test_kfold_rejects_thin_stratum(make_traj):
    counts = {("abrupt", True): 3, ("abrupt", False): 8,
              ("incipient", True): 8, ("incipient", False): 8}
    trajs = synthetic_population(make_traj, counts)
    with pytest.raises(TooFewTrajectories):
        ds.make_splits(trajs, kind=ds.SPLIT_KFOLD, seed=0, n_folds=5)


def test_holdout_split_fractions(make_traj):
    counts = {("abrupt", True): 12, ("abrupt", False): 8,
              ("incipient", True): 12, ("incipient", False): 8}
    trajs = synthetic_population(make_traj, counts)
    plan = ds.make_splits(trajs, kind=ds.SPLIT_HOLDOUT, seed=1)
    sizes = [len(plan.group_ids(g)) for g in
             (ds.GROUP_TRAIN, ds.GROUP_VAL, ds.GROUP_TEST)]
    assert sizes == [24, 8, 8]
    union = set()
    for g in (ds.GROUP_TRAIN, ds.GROUP_VAL, ds.GROUP_TEST):
        ids = plan.group_ids(g)
        assert not union & set(ids)
        union |= set(ids)
    assert len(union) == 40


def test_identifier_windows_exact(make_traj):
    abrupt = make_traj(tid="a0", kind="abrupt", magnitude=80.0,
                       t_start=3.0, duration=0.075, fall_time=3.80,
                       n=60, seed=1)
    incip = make_traj(tid="i0", kind="incipient", magnitude=20.0,
                      t_start=2.5, duration=1.0, fall_time=None,
                      t=2.52 + 0.03 * np.arange(50), seed=2)
    iw = ds.identifier_windows([abrupt, incip])

    # force samples sit at indices 33..35; windows 24..35 overlap them,
    # windows 0..23 end before the push, later windows are dropped
    n_push, n_pre = 12, 24
    n_inc_kept = len(range(0, 41, 3))
    assert iw.y.size == n_push + n_pre + n_inc_kept
    assert int((iw.y == -1).sum()) == n_push
    assert iw.X.shape[1:] == (10, 3)

    abrupt_rows = [i for i, tid in enumerate(iw.traj_ids) if tid == "a0"]
    for i in abrupt_rows:
        end_idx = int(round((iw.end_times[i] - 2.01) / 0.03))
        start = end_idx - 9
        assert np.array_equal(iw.X[i], abrupt.qd[start:end_idx + 1, 3:6])
        overlap = (abrupt.t[start:end_idx + 1] >= 3.0) & \
                  (abrupt.t[start:end_idx + 1] < 3.075)
        assert iw.y[i] == (-1 if overlap.any() else 1)
        if iw.y[i] == 1:
            assert iw.end_times[i] < 3.0

    inc_rows = [i for i, tid in enumerate(iw.traj_ids) if tid == "i0"]
    assert len(inc_rows) == n_inc_kept
    assert np.all(iw.y[inc_rows] == 1)
    kept_ends = iw.end_times[inc_rows]
    assert np.allclose(kept_ends, incip.t[9::3][:n_inc_kept])


def test_identifier_windows_on_generated_data(small_dataset):
    _, trajs = small_dataset
    iw = ds.identifier_windows(trajs)
    assert iw.X.shape[0] == iw.y.size == iw.end_times.size
    assert set(np.unique(iw.y)) <= {-1, 1}
    assert (iw.y == -1).sum() > 0 and (iw.y == 1).sum() > 0


def test_export_windows(tmp_path, params, small_dataset):
    _, trajs = small_dataset
    ws = ds.build_window_set(trajs[:2], params)
    path = tmp_path / "windows.csv"
    ds.export_windows(ws, ws.labels(1.0), path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("traj_id,end_time,label")
    assert len(lines) == 1 + ws.X.shape[0]
    first = lines[1].split(",")
    assert first[0] == trajs[0].id
    assert len(first) == 3 + 10 * 7
