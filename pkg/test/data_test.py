import numpy as np
import pandas as pd
import pytest
from conftest import SMALL_N_COLD

from trailercf.data import (
    SECONDS_PER_DAY,
    DatasetSplit,
    FeatureBank,
    FrameFeatureSequence,
    UserIndex,
    compute_frequency_recency,
    load_attendance,
    load_demographics,
    load_feature_file,
    load_manifest,
    load_split,
    make_splits,
    movie_release_order,
    normalize_length,
    save_split,
    write_attendance,
    write_feature_file,
)
from trailercf.errors import RecordFormatError, ShapeError

DAY = SECONDS_PER_DAY


def many_movies_records(n_movies=300, n_users=20, seed=0):
    rng = np.random.default_rng(seed)
    order = [f"m{k:03d}" for k in range(n_movies)]
    rows = [(f"u{u}", m, 1000 + k) for u in range(n_users) for k, m in enumerate(order) if rng.random() < 0.3]
    return order, pd.DataFrame(rows, columns=["user_id", "movie_id", "timestamp"])


def test_feature_file_round_trip(tmp_path):
    frames = np.random.default_rng(0).normal(size=(120, 1024)).astype(np.float32)
    path = str(tmp_path / "features" / "m42.tfv")
    write_feature_file(FrameFeatureSequence("m42", frames), path)
    seq = load_feature_file(path)
    assert seq.movie_id == "m42"
    assert (seq.n_frames, seq.dim) == (120, 1024)
    np.testing.assert_array_equal(seq.frames, frames.astype(np.float64))
    assert load_feature_file(path, movie_id="other").movie_id == "other"


def test_normalize_length():
    seq = FrameFeatureSequence("m", np.ones((120, 3)))
    assert normalize_length(seq, 120) is seq
    assert normalize_length(FrameFeatureSequence("m", np.ones((130, 3))), 120).n_frames == 120
    padded = normalize_length(FrameFeatureSequence("m", np.ones((90, 3))), 120)
    assert padded.n_frames == 120
    np.testing.assert_array_equal(padded.frames[:90], np.ones((90, 3)))
    np.testing.assert_array_equal(padded.frames[90:], np.zeros((30, 3)))
    with pytest.raises(ShapeError):
        normalize_length(seq, 0)


def test_load_manifest(tmp_path):
    (tmp_path / "data").mkdir()
    path = tmp_path / "data" / "manifest.csv"
    path.write_text("movie_id,release_ts,feature_path\nm1,20,f/m1.tfv\nm0,10,/abs/m0.tfv\n")
    manifest = load_manifest(str(path))
    assert manifest["feature_path"].tolist() == [str(tmp_path / "data" / "f" / "m1.tfv"), "/abs/m0.tfv"]
    assert movie_release_order(manifest) == ["m0", "m1"]

    path.write_text("movie_id,release_ts,feature_path\nm1,20,a\nm1,30,b\n")
    with pytest.raises(RecordFormatError, match="duplicate"):
        load_manifest(str(path))


def test_load_attendance(tmp_path):
    path = tmp_path / "attendance.csv"
    path.write_text("user_id,movie_id,timestamp\nu1,m1,5\nu1,m1,5\nu2,m1,7\n")
    records = load_attendance(str(path))
    assert [tuple(r) for r in records] == [("u1", "m1", 5), ("u2", "m1", 7)]

    path.write_text("user_id,movie_id,timestamp\nu1,m1,5\nu1,m2,abc\n")
    with pytest.raises(RecordFormatError) as error:
        load_attendance(str(path))
    assert error.value.line == 3

    path.write_text("user_id,movie_id,timestamp\nu1,m1,-5\n")
    with pytest.raises(RecordFormatError):
        load_attendance(str(path))


def test_write_then_load_attendance(tmp_path):
    _, records = many_movies_records(n_movies=10)
    path = str(tmp_path / "attendance.csv")
    write_attendance(records, path)
    assert [tuple(r) for r in load_attendance(path)] == list(records.itertuples(index=False, name=None))


def test_load_demographics(tmp_path):
    path = tmp_path / "demo.csv"
    path.write_text("user_id,age,income\nu1,0.5,1.0\nu2,-1,2\n")
    demographics = load_demographics(str(path))
    np.testing.assert_array_equal(demographics["u2"], [-1.0, 2.0])
    path.write_text("user_id\nu1\n")
    with pytest.raises(RecordFormatError):
        load_demographics(str(path))


def test_make_splits_partitions_positive_pairs():
    order, records = many_movies_records()
    split = make_splits(records, order, n_cold=50, seed=0)
    assert len(split.cold_start_movies) == 50 and len(split.in_matrix_movies) == 250
    assert split.cold_start_movies == order[250:]

    warm = records[~records["movie_id"].isin(split.cold_start_movies)]
    n = len(warm)
    sizes = split.sizes()
    assert sizes["train"] == round(0.8 * n)
    assert sizes["validation"] == round(0.1 * n)
    assert sizes["train"] + sizes["validation"] + sizes["test"] == n
    assert sizes["cold_start"] == len(records) - n

    keys = [set(zip(split.pool(w)["user_id"], split.pool(w)["movie_id"])) for w in ["train", "validation", "test"]]
    assert not (keys[0] & keys[1] or keys[0] & keys[2] or keys[1] & keys[2])
    for which in ["train", "validation", "test"]:
        assert not split.pool(which)["movie_id"].isin(split.cold_start_movies).any()
    assert split.cold_start["movie_id"].isin(split.cold_start_movies).all()


def test_make_splits_ten_positives():
    order = [f"m{k}" for k in range(20)]
    records = [("u0", order[k], k) for k in range(10)]
    split = make_splits(records, order, n_cold=5, seed=0)
    assert (len(split.train), len(split.validation), len(split.test)) == (8, 1, 1)


def test_make_splits_is_deterministic():
    order, records = many_movies_records()
    a, b = make_splits(records, order, seed=3), make_splits(records, order, seed=3)
    assert a.to_frame().equals(b.to_frame())
    c = make_splits(records, order, seed=4)
    assert not a.train.equals(c.train)


def test_make_splits_without_cold_start():
    order, records = many_movies_records(n_movies=20)
    split = make_splits(records, order, n_cold=0)
    assert split.cold_start_movies == [] and len(split.cold_start) == 0
    with pytest.raises(ValueError):
        make_splits(records, order, n_cold=21)


def test_make_splits_deduplicates_pairs():
    order = ["m0", "m1", "m2"]
    records = [("u0", "m0", 30), ("u0", "m0", 10), ("u0", "m1", 5), ("u0", "zz", 1)]
    with pytest.warns(UserWarning):
        split = make_splits(records, order, n_cold=1, ratios=(1.0, 0.0, 0.0))
    train = split.train.set_index("movie_id")["timestamp"].to_dict()
    assert train == {"m0": 10, "m1": 5}


def test_split_save_and_load(tmp_path):
    order, records = many_movies_records(n_movies=40)
    split = make_splits(records, order, n_cold=10, seed=0)
    path = str(tmp_path / "split.csv")
    save_split(split, path)
    loaded = load_split(path, split.cold_start_movies, split.in_matrix_movies, seed=0)
    assert isinstance(loaded, DatasetSplit)
    assert loaded.to_frame().equals(split.to_frame())


def test_user_positives_cover_every_pool():
    order, records = many_movies_records(n_movies=40)
    split = make_splits(records, order, n_cold=10, seed=0)
    expected = set(records.loc[records["user_id"] == "u0", "movie_id"])
    assert split.user_positives("u0") == expected
    assert split.user_positives("nobody") == frozenset()


def test_compute_frequency_recency():
    reference = 1000 * DAY
    assert compute_frequency_recency("u0", [], reference) == (0.0, 1.0)
    records = [("u0", "a", reference - 100 * DAY), ("u0", "b", reference - 10 * DAY), ("u0", "c", reference - DAY)]
    frequency, recency = compute_frequency_recency("u0", records, reference)
    assert frequency == pytest.approx(3 / 365)
    assert recency == pytest.approx(1 / 365)
    old = records + [("u0", "d", reference - 400 * DAY)]
    assert compute_frequency_recency("u0", old, reference) == (frequency, recency)
    future = records + [("u0", "e", reference + DAY)]
    assert compute_frequency_recency("u0", future, reference) == (frequency, recency)
    assert compute_frequency_recency("u1", records, reference) == (0.0, 1.0)


def test_user_index(dataset):
    users = dataset.users
    user = dataset.split.train["user_id"].iloc[0]
    ctx = users.context(user)
    train = dataset.split.train[dataset.split.train["user_id"] == user]
    assert set(ctx.attended_movies) == set(train["movie_id"])
    timestamps = train.set_index("movie_id").loc[list(ctx.attended_movies), "timestamp"].to_numpy()
    assert np.all(np.diff(timestamps) <= 0)
    assert not set(ctx.attended_movies) & set(dataset.split.cold_start_movies)
    assert users.context(user) is ctx
    assert users.context("stranger").attended_movies == ()

    capped = UserIndex.from_split(dataset.split, dataset.records, 0, max_history=2)
    assert len(capped.context(user).attended_movies) == min(2, len(train))


def test_feature_bank(tmp_path, dataset):
    bank = dataset.features
    assert len(bank) == 20 and bank.max_frames == 12 and bank.feature_dim == 6
    assert bank.stack(["m0001", "m0000"]).shape == (2, 12, 6)
    np.testing.assert_array_equal(bank["m0003"], dataset.world.movies[3].sequence.frames)
    with pytest.raises(KeyError):
        bank.stack(["nope"])

    manifest = pd.DataFrame(
        {"movie_id": ["m0"], "release_ts": [0], "feature_path": [str(tmp_path / "missing.tfv")]}
    )
    with pytest.raises(FileNotFoundError, match="missing.tfv"):
        FeatureBank.from_manifest(manifest, 12)


def test_small_dataset_split(dataset):
    assert len(dataset.split.cold_start_movies) == SMALL_N_COLD
    assert dataset.split.cold_start_movies == dataset.world.release_order()[-SMALL_N_COLD:]


if __name__ == "__main__":
    test_make_splits_partitions_positive_pairs()
    pass
