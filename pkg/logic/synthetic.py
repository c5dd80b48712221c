"""
Synthetic data: a planted-motif two-class set and anomaly streams.
"""

import numpy as np

from logic.data import Dataset, Series


def sine_burst(length):
    return np.sin(np.linspace(0, 2 * np.pi, length))


def square_burst(length):
    half = length // 2
    return np.concatenate((np.ones(half), -np.ones(length - half)))


def make_motif_dataset(n=40, d=2, t=100, seed=0, noise=0.4, burst_length=20, amplitude=1.5, jitter=10,
                       name="motifs"):
    """Class 0 carries a sine burst, class 1 a square burst, over Gaussian noise.

    The burst starts within `jitter` steps of the centre of the series.
    Dimension j > 0 repeats the burst at amplitude / (j + 1). Classes are
    balanced and the order is shuffled. With the defaults, 1-NN on the raw
    values classifies about 80% of a held-out draw correctly.
    """
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2)
    centre = (t - burst_length) // 2
    low, high = max(0, centre - jitter), min(t - burst_length, centre + jitter)
    samples = []
    for i, label in enumerate(labels):
        values = noise * rng.standard_normal((d, t))
        start = int(rng.integers(low, high + 1))
        burst = sine_burst(burst_length) if label == 0 else square_burst(burst_length)
        for j in range(d):
            values[j, start:start + burst_length] += amplitude / (j + 1) * burst
        samples.append(Series(values, id=f"{name}_{i}"))
    return Dataset(samples=samples, labels=labels, class_names=["sine", "square"], name=name)


def make_motif_split(n_train=40, n_test=40, d=2, t=100, seed=0, **kwargs):
    """Independent train and test draws of the planted-motif set"""
    train = make_motif_dataset(n_train, d, t, seed=2 * seed, name="motifs_train", **kwargs)
    test = make_motif_dataset(n_test, d, t, seed=2 * seed + 1, name="motifs_test", **kwargs)
    return train, test


def make_anomaly_stream(length=2000, d=2, contamination=0.02, seed=0, noise=0.1, name="stream", pattern_seed=None):
    """Periodic multivariate signal with injected spikes and level shifts.

    Roughly `contamination` of the timestamps are flagged. Spikes flag one
    point, level shifts a segment of 5 to 15 points. Streams sharing
    pattern_seed share their periodic pattern.
    """
    pattern = np.random.default_rng(seed if pattern_seed is None else pattern_seed)
    periods = pattern.uniform(20, 60, size=d)
    phases = pattern.uniform(0, 2 * np.pi, size=d)
    rng = np.random.default_rng([seed, 1])
    time = np.arange(length)
    values = np.sin(2 * np.pi * time[None, :] / periods[:, None] + phases[:, None])
    values += noise * rng.standard_normal((d, length))
    flags = np.zeros(length, dtype=int)

    target = int(round(contamination * length))
    while flags.sum() < target:
        dim = int(rng.integers(d))
        if rng.random() < 0.5:
            pos = int(rng.integers(length))
            values[dim, pos] += rng.choice((-1.0, 1.0)) * rng.uniform(4.0, 6.0)
            flags[pos] = 1
        else:
            seg = int(rng.integers(5, 16))
            start = int(rng.integers(0, length - seg + 1))
            values[dim, start:start + seg] += rng.choice((-1.0, 1.0)) * rng.uniform(2.0, 3.0)
            flags[start:start + seg] = 1
    return Series(values, id=name), flags


def make_anomaly_streams(length=2000, d=2, contamination=0.02, seed=0):
    """(train series, train flags, test series, test flags)"""
    train, train_flags = make_anomaly_stream(length, d, contamination, seed=2 * seed, name="stream_train",
                                             pattern_seed=seed)
    test, test_flags = make_anomaly_stream(length, d, contamination, seed=2 * seed + 1, name="stream_test",
                                           pattern_seed=seed)
    return train, train_flags, test, test_flags
