import numpy as np
import pytest

from logic.synthetic import make_anomaly_streams, make_motif_dataset, make_motif_split


def raw_1nn_accuracy(train, test):
    """1-NN on the flattened raw values, squared euclidean distance"""
    a = train.to_array().reshape(len(train), -1)
    b = test.to_array().reshape(len(test), -1)
    distances = ((b[:, None, :] - a[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(train.labels[distances.argmin(axis=1)] == test.labels))


def test_motif_set_layout():
    ds = make_motif_dataset(seed=0)
    assert len(ds) == 40
    assert ds.to_array().shape == (40, 2, 100)
    assert np.bincount(ds.labels).tolist() == [20, 20]
    assert ds.class_names == ["sine", "square"]


def test_bursts_stay_near_the_centre():
    ds = make_motif_dataset(n=60, seed=1, noise=0.0)
    for x in ds.to_array():
        active = np.flatnonzero(np.abs(x[0]) > 1e-12)
        assert 30 <= active.min() and active.max() < 70
        assert np.allclose(x[1], x[0] / 2)


def test_short_series_clip_the_jitter():
    ds = make_motif_dataset(n=10, t=24, seed=2, noise=0.0)
    assert ds.to_array().shape == (10, 2, 24)


def test_split_draws_are_independent():
    train, test = make_motif_split(seed=3)
    assert not np.array_equal(train.to_array(), test.to_array())
    again, _ = make_motif_split(seed=3)
    assert np.array_equal(train.to_array(), again.to_array())


def test_raw_nearest_neighbour_baseline_is_about_eighty_percent():
    accuracies = [raw_1nn_accuracy(*make_motif_split(seed=seed)) for seed in range(5)]
    assert 0.65 <= np.median(accuracies) <= 0.92


def test_noise_moves_the_baseline():
    default = np.median([raw_1nn_accuracy(*make_motif_split(seed=seed)) for seed in range(5)])
    noisy = np.median([raw_1nn_accuracy(*make_motif_split(seed=seed, noise=1.5)) for seed in range(5)])
    assert noisy < default


@pytest.mark.parametrize("seed", [0, 1])
def test_anomaly_streams(seed):
    train, train_flags, test, test_flags = make_anomaly_streams(seed=seed)
    assert train.values.shape == test.values.shape == (2, 2000)
    for flags in (train_flags, test_flags):
        assert set(np.unique(flags)) <= {0, 1}
        assert 0.02 <= flags.mean() <= 0.04
    assert not np.array_equal(train.values, test.values)
