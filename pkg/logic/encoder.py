"""
Shapelet Transformer: multi-scale, multi-measure shapelet encoder.

A series x (D x T) is mapped to a vector of R * M * V features. Feature
(r, m, v) is the best match over all sliding windows of x between the window
and shapelet s[r][m][v] (D x L_r) under measure m:

    euclidean          sqrt(sum_d ||x_d[t:t+L] - s_d||^2), aggregated by min
    cosine             sum_d cos(x_d[t:t+L], s_d),        aggregated by max
    cross_correlation  sum_d <x_d[t:t+L], s_d>,           aggregated by max

Layout: R contiguous blocks of K = D_repr / R features; inside a block the
features are ordered measure-major, then shapelet index, i.e. feature
(r, m, v) sits at r * K + m * V + v when K = M * V. When K is not a multiple
of M the measures share K as evenly as possible, earlier measures first.
Ties between windows resolve to the smallest start position.
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from logic.errors import ConfigError, ShapeletLengthError

MEASURES = ("euclidean", "cosine", "cross_correlation")
MEASURE_ALIASES = {"cross": "cross_correlation", "euclid": "euclidean", "cos": "cosine"}

NORM_EPSILON = 1e-12

# Length-fraction ranges of the scale ablations
SCALE_RANGES = {"all": None, "short": (0.1, 0.4), "long": (0.5, 0.8)}


def resolve_measures(selection):
    """Map 'all', a single name or a list of names to the canonical tuple"""
    if selection in (None, "all"):
        return MEASURES
    if isinstance(selection, str):
        selection = [selection]
    names = [MEASURE_ALIASES.get(name, name) for name in selection]
    unknown = [n for n in names if n not in MEASURES]
    if unknown:
        raise ConfigError(f"unknown measure(s): {unknown}")
    return tuple(m for m in MEASURES if m in names)


@dataclass
class EncoderConfig:
    n_scales: int = 8
    measures: Tuple[str, ...] = MEASURES
    repr_dim: int = 320
    l_min_frac: float = 0.1
    l_max_frac: float = 0.8
    series_length: int = 0
    n_dims: int = 1

    def __post_init__(self):
        self.measures = resolve_measures(self.measures)

    @property
    def n_measures(self):
        return len(self.measures)

    @property
    def block_size(self):
        """K = D_repr / R features per scale"""
        return self.repr_dim // self.n_scales

    @property
    def shapelet_counts(self):
        """Shapelets per measure within a block; K is split as evenly as
        possible, earlier measures taking the remainder"""
        base, extra = divmod(self.block_size, self.n_measures)
        return [base + (1 if m < extra else 0) for m in range(self.n_measures)]

    @property
    def n_shapelets(self):
        """V when every measure has the same count, else the largest count"""
        return max(self.shapelet_counts)

    def measure_offset(self, m):
        return sum(self.shapelet_counts[:m])

    def validate(self):
        if self.n_scales < 1:
            raise ConfigError("n_scales must be at least 1")
        if not self.measures:
            raise ConfigError("at least one measure is required")
        if self.repr_dim < 1 or self.repr_dim % self.n_scales:
            raise ConfigError(
                f"repr_dim={self.repr_dim} is not divisible by n_scales={self.n_scales}")
        if self.block_size < self.n_measures:
            raise ConfigError(
                f"{self.block_size} features per scale cannot cover {self.n_measures} measures")
        if not 0 < self.l_min_frac <= self.l_max_frac:
            raise ConfigError("need 0 < l_min_frac <= l_max_frac")
        if self.series_length < 2 or self.n_dims < 1:
            raise ConfigError("series_length >= 2 and n_dims >= 1 are required")
        lengths = self.shapelet_lengths()
        if lengths[-1] > self.series_length:
            raise ShapeletLengthError(
                f"longest shapelet ({lengths[-1]}) exceeds series length {self.series_length}")
        return self

    def shapelet_lengths(self):
        """L_r evenly spaced over [l_min_frac, l_max_frac] * series_length"""
        if self.n_scales == 1:
            fracs = [self.l_min_frac]
        else:
            step = (self.l_max_frac - self.l_min_frac) / (self.n_scales - 1)
            fracs = [self.l_min_frac + r * step for r in range(self.n_scales)]
        return [max(1, int(round(self.series_length * f))) for f in fracs]

    def feature_index(self, r, m, v):
        return r * self.block_size + self.measure_offset(m) + v

    def with_scale_range(self, name):
        """Copy using the short/long/all shapelet length ablation"""
        if name not in SCALE_RANGES:
            raise ConfigError(f"unknown scale range {name!r}")
        if SCALE_RANGES[name] is None:
            return self
        low, high = SCALE_RANGES[name]
        return EncoderConfig(**{**self.to_dict(), "l_min_frac": low, "l_max_frac": high})

    def to_dict(self):
        return {
            "n_scales": self.n_scales,
            "measures": list(self.measures),
            "repr_dim": self.repr_dim,
            "l_min_frac": self.l_min_frac,
            "l_max_frac": self.l_max_frac,
            "series_length": self.series_length,
            "n_dims": self.n_dims,
        }

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown encoder option(s): {sorted(unknown)}")
        return cls(**data)


@dataclass
class ModelParams:
    """shapelets[r][m] holds the V shapelets of scale r, measure m as (V, D, L_r)"""

    shapelets: List[List[np.ndarray]]

    def shapelet(self, r, m, v):
        return self.shapelets[r][m][v]

    def arrays(self):
        return [arr for scale in self.shapelets for arr in scale]

    def n_parameters(self):
        return sum(arr.size for arr in self.arrays())

    def flatten(self):
        return np.concatenate([arr.ravel() for arr in self.arrays()])

    def unflatten(self, vector):
        vector = np.asarray(vector, dtype=float)
        out, offset = [], 0
        for scale in self.shapelets:
            row = []
            for arr in scale:
                row.append(vector[offset:offset + arr.size].reshape(arr.shape).copy())
                offset += arr.size
            out.append(row)
        return ModelParams(out)


def init_params(cfg, rng, data=None):
    """Gaussian(0, 1) shapelets, or random subsequences of `data` (N, D, T)"""
    cfg.validate()
    shapelets = []
    for length in cfg.shapelet_lengths():
        row = []
        for v in cfg.shapelet_counts:
            if data is None:
                row.append(rng.standard_normal((v, cfg.n_dims, length)))
            else:
                n, _, t = data.shape
                if length > t:
                    raise ShapeletLengthError(f"shapelet length {length} exceeds series length {t}")
                picks = rng.integers(0, n, size=v)
                starts = rng.integers(0, t - length + 1, size=v)
                row.append(np.stack([data[i, :, s:s + length] for i, s in zip(picks, starts)]).astype(float))
        shapelets.append(row)
    return ModelParams(shapelets)


def _windows(batch, length):
    """(B, D, T) -> (B, n_windows, D, L) view"""
    t = batch.shape[2]
    if length > t:
        raise ShapeletLengthError(f"shapelet length {length} exceeds series length {t}")
    return sliding_window_view(batch, length, axis=2).transpose(0, 2, 1, 3)


def _dots(windows, shapelets):
    """Per-dimension dot products: (B, W, D, L) x (V, D, L) -> (B, V, W, D)"""
    # (D, B*W, L) @ (D, L, V) -> (D, B*W, V)
    b, w, d, length = windows.shape
    lhs = windows.transpose(2, 0, 1, 3).reshape(d, b * w, length)
    rhs = shapelets.transpose(1, 2, 0)
    out = np.matmul(lhs, rhs).reshape(d, b, w, -1)
    return out.transpose(1, 3, 2, 0)


@dataclass
class MeasureCache:
    """What the backward pass needs from one (scale, measure) forward"""

    measure: str
    best: np.ndarray              # (B, V) best window start
    values: np.ndarray            # (B, V) feature values
    matched: np.ndarray           # (B, V, D, L) best-matching windows
    margin: np.ndarray = None     # (B, V) gap to the runner-up window score


@dataclass
class EncoderCache:
    caches: List[List[MeasureCache]] = field(default_factory=list)


def _selection_margin(scores, maximize):
    """Gap between the best and second-best window score"""
    if scores.shape[2] < 2:
        return np.full(scores.shape[:2], np.inf)
    ordered = -scores if maximize else scores
    top = np.partition(ordered, 1, axis=2)
    return top[:, :, 1] - top[:, :, 0]


def _squared_distances(windows, shapelets):
    """(B, W, D, L) x (V, D, L) -> (B, V, W) from direct differences, so a
    window equal to the shapelet scores exactly 0 whatever the offset"""
    return np.stack([((windows - s) ** 2).sum(axis=(2, 3)) for s in shapelets], axis=1)


def _measure_forward(windows, shapelets, measure):
    if measure == "cross_correlation":
        scores = _dots(windows, shapelets).sum(axis=3)            # (B, V, W)
        best = scores.argmax(axis=2)
    elif measure == "cosine":
        dots = _dots(windows, shapelets)                          # (B, V, W, D)
        w_norm = np.sqrt(np.einsum("bwdl,bwdl->bwd", windows, windows))   # (B, W, D)
        s_norm = np.sqrt(np.einsum("vdl,vdl->vd", shapelets, shapelets))  # (V, D)
        denom = w_norm[:, None, :, :] * s_norm[None, :, None, :]
        valid = (w_norm[:, None, :, :] >= NORM_EPSILON) & (s_norm[None, :, None, :] >= NORM_EPSILON)
        cos = np.where(valid, dots / np.where(valid, denom, 1.0), 0.0)
        scores = cos.sum(axis=3)
        best = scores.argmax(axis=2)
    elif measure == "euclidean":
        scores = _squared_distances(windows, shapelets)
        best = scores.argmin(axis=2)
    else:
        raise ConfigError(f"unknown measure {measure!r}")

    batch_idx = np.arange(windows.shape[0])[:, None]
    matched = windows[batch_idx, best]                            # (B, V, D, L)
    values = np.take_along_axis(scores, best[:, :, None], axis=2)[:, :, 0]
    if measure == "euclidean":
        values = np.sqrt(values)
    return values, MeasureCache(measure=measure, best=best, values=values, matched=matched,
                                margin=_selection_margin(scores, maximize=measure != "euclidean"))


def _measure_backward(cache, shapelets, upstream):
    """Gradient of sum_b,v upstream[b, v] * f[b, v] w.r.t. shapelets (V, D, L)"""
    matched = cache.matched
    s = shapelets[None]
    if cache.measure == "cross_correlation":
        local = matched
    elif cache.measure == "euclidean":
        dist = cache.values[:, :, None, None]
        safe = np.where(dist < NORM_EPSILON, 1.0, dist)
        local = np.where(dist < NORM_EPSILON, 0.0, (s - matched) / safe)
    else:
        w_norm = np.sqrt((matched ** 2).sum(axis=3, keepdims=True))      # (B, V, D, 1)
        s_norm = np.sqrt((s ** 2).sum(axis=3, keepdims=True))            # (1, V, D, 1)
        dot = (matched * s).sum(axis=3, keepdims=True)
        valid = (w_norm >= NORM_EPSILON) & (s_norm >= NORM_EPSILON)
        w_safe = np.where(valid, w_norm, 1.0)
        s_safe = np.where(valid, s_norm, 1.0)
        local = np.where(valid, matched / (w_safe * s_safe) - dot * s / (w_safe * s_safe ** 3), 0.0)
    return np.einsum("bv,bvdl->vdl", upstream, local)


class ShapeletTransformer:
    """Batch encoder over ModelParams with an analytic backward pass"""

    def __init__(self, config, params):
        self.config = config
        self.params = params
        self.lengths = [scale[0].shape[2] for scale in params.shapelets]

    def _check(self, batch):
        batch = np.asarray(batch, dtype=float)
        if batch.ndim == 2:
            batch = batch[None]
        if batch.ndim != 3:
            raise ShapeletLengthError(f"expected (B, D, T) input, got shape {batch.shape}")
        if batch.shape[2] < max(self.lengths):
            raise ShapeletLengthError(
                f"series length {batch.shape[2]} is shorter than the longest shapelet ({max(self.lengths)})")
        if batch.shape[1] != self.params.shapelets[0][0].shape[1]:
            raise ShapeletLengthError(
                f"series has {batch.shape[1]} dimensions, shapelets expect {self.params.shapelets[0][0].shape[1]}")
        return batch

    def forward(self, batch):
        """Encode (B, D, T) into (B, D_repr) and keep what backward needs"""
        batch = self._check(batch)
        blocks, caches = [], []
        for r, scale in enumerate(self.params.shapelets):
            windows = _windows(batch, self.lengths[r])
            scale_values, scale_caches = [], []
            for m, measure in enumerate(self.config.measures):
                values, cache = _measure_forward(windows, scale[m], measure)
                scale_values.append(values)
                scale_caches.append(cache)
            blocks.append(np.concatenate(scale_values, axis=1))
            caches.append(scale_caches)
        return np.concatenate(blocks, axis=1), EncoderCache(caches)

    def transform(self, batch):
        return self.forward(batch)[0]

    def backward(self, cache, upstream):
        """Gradients w.r.t. every shapelet given dLoss/dZ of shape (B, D_repr)"""
        upstream = np.asarray(upstream, dtype=float)
        grads = []
        for r, scale in enumerate(self.params.shapelets):
            row = []
            for m, arr in enumerate(scale):
                start = self.config.feature_index(r, m, 0)
                row.append(_measure_backward(cache.caches[r][m], arr, upstream[:, start:start + len(arr)]))
            grads.append(row)
        return ModelParams(grads)

    def best_match_positions(self, batch):
        """Best window start and feature value for every (sample, r, m, v)"""
        _, cache = self.forward(batch)
        records = []
        for r, scale_caches in enumerate(cache.caches):
            for m, mc in enumerate(scale_caches):
                for b in range(mc.best.shape[0]):
                    for v in range(mc.best.shape[1]):
                        records.append({
                            "sample": b,
                            "scale": r,
                            "measure": mc.measure,
                            "shapelet": v,
                            "length": self.lengths[r],
                            "position": int(mc.best[b, v]),
                            "value": float(mc.values[b, v]),
                        })
        return records


def shapelet_feature(x, s, measure):
    """Best-match (dis)similarity between series x (D x T) and shapelet s (D x L)"""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if x.ndim == 1:
        x = x[None]
    if s.ndim == 1:
        s = s[None]
    windows = _windows(x[None], s.shape[1])
    values, _ = _measure_forward(windows, s[None], measure)
    return float(values[0, 0])


def encode(x, params, cfg):
    """Embedding of one series, or of a (B, D, T) batch row by row"""
    z = ShapeletTransformer(cfg, params).transform(x)
    return z[0] if np.asarray(x).ndim == 2 else z


def encode_backward(x, params, cfg, upstream):
    """Shapelet gradients of <upstream, encode(x)>"""
    transformer = ShapeletTransformer(cfg, params)
    batched = np.asarray(x).ndim == 3
    _, cache = transformer.forward(x)
    upstream = np.asarray(upstream, dtype=float)
    if not batched:
        upstream = upstream[None]
    return transformer.backward(cache, upstream)


def embedding_blocks(z, n_scales):
    """Split (..., D_repr) into the R per-scale blocks"""
    z = np.asarray(z)
    return np.split(z, n_scales, axis=-1)
