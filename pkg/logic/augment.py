"""
Augmentation library for two-view contrastive training.

Five shape-preserving transforms (jitter, crop, time warp, quantize, pool)
and a sampler that draws two of them for every sample. Each transform takes
and returns a D x T array; randomness always comes from an explicit
numpy Generator so identical seeds give identical streams.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from logic.errors import ConfigError

METHODS = ("jitter", "crop", "time_warp", "quantize", "pool")


@dataclass
class AugmentConfig:
    jitter_sigma: float = 0.03
    crop_ratio_range: Tuple[float, float] = (0.8, 1.0)
    warp_speed_changes: int = 3
    warp_max_ratio: float = 3.0
    quantize_levels: int = 10
    pool_size: int = 2
    enabled: Tuple[str, ...] = field(default_factory=lambda: METHODS)

    def __post_init__(self):
        self.crop_ratio_range = tuple(float(v) for v in self.crop_ratio_range)
        # Canonical order keeps sampling independent of how the set was given
        self.enabled = tuple(m for m in METHODS if m in set(self.enabled))

    def validate(self):
        low, high = self.crop_ratio_range
        if not 0 < low <= high <= 1:
            raise ConfigError(f"crop_ratio_range must satisfy 0 < low <= high <= 1, got {self.crop_ratio_range}")
        if self.jitter_sigma < 0:
            raise ConfigError("jitter_sigma must be non-negative")
        if self.quantize_levels < 2:
            raise ConfigError("quantize_levels must be at least 2")
        if self.pool_size < 1:
            raise ConfigError("pool_size must be at least 1")
        if self.warp_speed_changes < 1 or self.warp_max_ratio <= 0:
            raise ConfigError("warp parameters must be positive")
        return self

    def without(self, *names):
        unknown = set(names) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown augmentation(s): {sorted(unknown)}")
        return AugmentConfig(**{**self.to_dict(), "enabled": [m for m in self.enabled if m not in names]})

    def to_dict(self):
        return {
            "jitter_sigma": self.jitter_sigma,
            "crop_ratio_range": list(self.crop_ratio_range),
            "warp_speed_changes": self.warp_speed_changes,
            "warp_max_ratio": self.warp_max_ratio,
            "quantize_levels": self.quantize_levels,
            "pool_size": self.pool_size,
            "enabled": list(self.enabled),
        }

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown augment option(s): {sorted(unknown)}")
        return cls(**data)


def _resample(values, positions):
    """Linearly interpolate every row of values at fractional positions"""
    grid = np.arange(values.shape[1])
    return np.stack([np.interp(positions, grid, row) for row in values])


def jitter(x, sigma, rng):
    """Add Gaussian noise scaled by each dimension's standard deviation"""
    x = np.asarray(x, dtype=float)
    if sigma == 0:
        return x.copy()
    scale = sigma * x.std(axis=1, keepdims=True)
    return x + rng.standard_normal(x.shape) * scale


def crop(x, ratio_range, rng):
    """Take a random contiguous window and stretch it back to length T"""
    x = np.asarray(x, dtype=float)
    t = x.shape[1]
    low, high = ratio_range
    ratio = rng.uniform(low, high) if high > low else low
    crop_len = int(min(t, max(2, round(ratio * t))))
    start = int(rng.integers(0, t - crop_len + 1))
    window = x[:, start:start + crop_len]
    if crop_len == t:
        return window.copy()
    return _resample(window, np.linspace(0, crop_len - 1, t))


def warp_path(t, n_changes, max_ratio, rng):
    """Monotone piecewise-linear remap of [0, T-1] onto itself.

    The output axis is split into n_changes + 1 equal segments, each given a
    random speed in [1, max_ratio]; the ratio between any two local slopes is
    therefore bounded by max_ratio and both endpoints stay fixed.
    """
    n_segments = n_changes + 1
    knots_out = np.linspace(0, t - 1, n_segments + 1)
    low, high = sorted((1.0, float(max_ratio)))
    speeds = rng.uniform(low, high, size=n_segments) if high > low else np.ones(n_segments)
    widths = np.diff(knots_out) * speeds
    knots_in = np.concatenate(([0.0], np.cumsum(widths)))
    knots_in *= (t - 1) / knots_in[-1]
    knots_in[0], knots_in[-1] = 0.0, t - 1.0
    return np.interp(np.arange(t), knots_out, knots_in)


def time_warp(x, n_changes, max_ratio, rng):
    """Stretch and contract random segments along the time axis"""
    x = np.asarray(x, dtype=float)
    return _resample(x, warp_path(x.shape[1], n_changes, max_ratio, rng))


def quantize(x, n_levels):
    """Snap each value to the nearest of n_levels evenly spaced levels
    spanning that dimension's range"""
    x = np.asarray(x, dtype=float)
    low = x.min(axis=1, keepdims=True)
    high = x.max(axis=1, keepdims=True)
    span = high - low
    step = np.where(span > 0, span / (n_levels - 1), 1.0)
    index = np.clip(np.rint((x - low) / step), 0, n_levels - 1)
    return np.where(span > 0, low + index * step, x)


def pool(x, size):
    """Replace each block of `size` consecutive values by the block mean"""
    x = np.asarray(x, dtype=float)
    if size == 1:
        return x.copy()
    t = x.shape[1]
    starts = np.arange(0, t, size)
    counts = np.diff(np.append(starts, t))
    means = np.add.reduceat(x, starts, axis=1) / counts
    return np.repeat(means, counts, axis=1)


def apply_method(name, x, cfg, rng):
    """Apply one named augmentation with the parameters in cfg"""
    if name == "jitter":
        return jitter(x, cfg.jitter_sigma, rng)
    if name == "crop":
        return crop(x, cfg.crop_ratio_range, rng)
    if name == "time_warp":
        return time_warp(x, cfg.warp_speed_changes, cfg.warp_max_ratio, rng)
    if name == "quantize":
        return quantize(x, cfg.quantize_levels)
    if name == "pool":
        return pool(x, cfg.pool_size)
    raise ConfigError(f"unknown augmentation {name!r}")


def draw_methods(cfg, rng):
    """Draw two methods independently and uniformly (they may coincide)"""
    if not cfg.enabled:
        raise ConfigError("no augmentation method enabled")
    picks = rng.integers(0, len(cfg.enabled), size=2)
    return cfg.enabled[picks[0]], cfg.enabled[picks[1]]


def sample_pair(x, cfg, rng):
    """Two independently augmented views of one sample"""
    first, second = draw_methods(cfg, rng)
    return apply_method(first, x, cfg, rng), apply_method(second, x, cfg, rng)


def augment_batch(batch, cfg, rng):
    """Two-view augmentation of an (B, D, T) batch"""
    views = [sample_pair(x, cfg, rng) for x in batch]
    return np.stack([v[0] for v in views]), np.stack([v[1] for v in views])
