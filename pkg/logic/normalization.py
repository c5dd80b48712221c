"""
Batch normalization of embeddings without learned affine parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from logic.errors import BatchSizeError, ConfigError


@dataclass(eq=False)
class BatchNormState:
    n_features: int
    momentum: float = 0.1
    epsilon: float = 1e-5
    running_mean: np.ndarray = field(default=None)
    running_var: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.running_mean is None:
            self.running_mean = np.zeros(self.n_features)
        if self.running_var is None:
            self.running_var = np.ones(self.n_features)
        self.running_mean = np.asarray(self.running_mean, dtype=float)
        self.running_var = np.asarray(self.running_var, dtype=float)
        if not 0 <= self.momentum <= 1:
            raise ConfigError("batchnorm momentum must lie in [0, 1]")

    def to_dict(self):
        return {
            "n_features": self.n_features,
            "momentum": self.momentum,
            "epsilon": self.epsilon,
            "running_mean": self.running_mean.tolist(),
            "running_var": self.running_var.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class BatchNormCache:
    normalized: np.ndarray
    inv_std: np.ndarray


def batchnorm(z, state, mode="train", update=True):
    """Standardize (B, F) embeddings.

    train: batch mean and population variance; running statistics move by
    `momentum` towards the batch mean and the unbiased batch variance.
    infer: running statistics, state untouched.
    Returns (normalized, cache).
    """
    z = np.asarray(z, dtype=float)
    if mode == "infer":
        inv_std = 1.0 / np.sqrt(state.running_var + state.epsilon)
        normalized = (z - state.running_mean) * inv_std
        return normalized, BatchNormCache(normalized, inv_std)
    if mode != "train":
        raise ConfigError(f"unknown batchnorm mode {mode!r}")

    b = z.shape[0]
    if b < 2:
        raise BatchSizeError(f"batchnorm in train mode needs at least 2 rows, got {b}")
    mean = z.mean(axis=0)
    var = z.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    normalized = (z - mean) * inv_std
    if update:
        update_running_stats(state, z)
    return normalized, BatchNormCache(normalized, inv_std)


def update_running_stats(state, z):
    """One momentum step of the running mean and unbiased variance towards the rows of z"""
    z = np.asarray(z, dtype=float)
    if z.shape[0] < 2:
        raise BatchSizeError(f"running statistics need at least 2 rows, got {z.shape[0]}")
    state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * z.mean(axis=0)
    state.running_var = (1 - state.momentum) * state.running_var + state.momentum * z.var(axis=0, ddof=1)


def batchnorm_backward(cache, upstream, mode="train"):
    """dLoss/dZ from dLoss/dZ_normalized"""
    upstream = np.asarray(upstream, dtype=float)
    if mode == "infer":
        return upstream * cache.inv_std
    y = cache.normalized
    mean_g = upstream.mean(axis=0)
    mean_gy = (upstream * y).mean(axis=0)
    return cache.inv_std * (upstream - mean_g - y * mean_gy)
