"""
Loss terms of the contrastive objective and their gradients w.r.t. embeddings.

    L   = L_M + lambda * L_A
    L_M = L_C + sum_r L_F,r           multi-grained contrasting
    L_A = sum over both views of
          sum_r ||Z_r - Z_mean||_F^2 + lambda_S * sum_r L_S(C_hat_r)

L_C contrasts full embeddings, L_F,r the scale blocks; both are InfoNCE with
cosine similarity, anchored on view one against every row of view two.
C_hat_r is an exponentially accumulated covariance of scale block r; history
is held constant when differentiating, only the current batch contributes.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from logic.errors import BatchSizeError, ConfigError
from logic.normalization import BatchNormState, batchnorm, batchnorm_backward

NORM_EPSILON = 1e-12


@dataclass
class LossConfig:
    tau: float = 0.1
    lam: float = 0.01
    lambda_s: float = 1.0
    alpha: float = 0.5
    symmetric: bool = False
    align_batchnorm: bool = True
    disable_coarse: bool = False
    disable_fine: bool = False
    disable_alignment: bool = False

    def validate(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.lam < 0 or self.lambda_s < 0:
            raise ConfigError("lambda and lambda_s must be non-negative")
        if not 0 <= self.alpha < 1:
            raise ConfigError("alpha must lie in [0, 1)")
        if self.disable_coarse and self.disable_fine and self.disable_alignment:
            raise ConfigError("every loss term is disabled")
        return self

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown loss option(s): {sorted(unknown)}")
        return cls(**data)


def _unit_rows(a):
    """Row-normalize; zero rows stay zero"""
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    safe = np.where(norms < NORM_EPSILON, 1.0, norms)
    units = np.where(norms < NORM_EPSILON, 0.0, a / safe)
    return units, norms, safe


def _unit_rows_backward(units, norms, safe, upstream):
    projected = upstream - units * np.sum(units * upstream, axis=-1, keepdims=True)
    return np.where(norms < NORM_EPSILON, 0.0, projected / safe)


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < NORM_EPSILON or nv < NORM_EPSILON:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def info_nce(anchor, positive, candidates, tau):
    """-log softmax probability of the positive among candidates (which
    include the positive), cosine similarity scaled by 1/tau"""
    candidates = list(candidates)
    if not candidates:
        raise BatchSizeError("info_nce needs at least one candidate")
    if tau <= 0:
        raise ConfigError("tau must be positive")
    logits = np.array([cosine_similarity(anchor, z) for z in candidates]) / tau
    return float(logsumexp(logits) - cosine_similarity(anchor, positive) / tau)


def info_nce_batch(anchors, candidates, tau):
    """Sum over rows i of info_nce(anchors[i], candidates[i], candidates).

    Returns (loss, d_anchors, d_candidates).
    """
    ua, na, sa = _unit_rows(np.asarray(anchors, dtype=float))
    uc, nc, sc = _unit_rows(np.asarray(candidates, dtype=float))
    logits = ua @ uc.T / tau
    loss = float(np.sum(logsumexp(logits, axis=1) - np.diag(logits)))
    g = (softmax(logits, axis=1) - np.eye(len(logits))) / tau
    d_anchors = _unit_rows_backward(ua, na, sa, g @ uc)
    d_candidates = _unit_rows_backward(uc, nc, sc, g.T @ ua)
    return loss, d_anchors, d_candidates


def _check_views(zp, zpp):
    zp = np.asarray(zp, dtype=float)
    zpp = np.asarray(zpp, dtype=float)
    if zp.shape != zpp.shape or zp.ndim != 2:
        raise BatchSizeError(f"views must share a (B, F) shape, got {zp.shape} and {zpp.shape}")
    if zp.shape[0] < 2:
        raise BatchSizeError(f"contrastive losses need B >= 2 (no negatives), got B={zp.shape[0]}")
    return zp, zpp


def _contrast(zp, zpp, tau, symmetric):
    if not symmetric:
        return info_nce_batch(zp, zpp, tau)
    forward, dp1, dpp1 = info_nce_batch(zp, zpp, tau)
    backward, dpp2, dp2 = info_nce_batch(zpp, zp, tau)
    return 0.5 * (forward + backward), 0.5 * (dp1 + dp2), 0.5 * (dpp1 + dpp2)


def _block(z, r, n_scales):
    width = z.shape[1] // n_scales
    return slice(r * width, (r + 1) * width)


def coarse_loss(zp, zpp, tau, symmetric=False):
    """InfoNCE over the full embeddings"""
    zp, zpp = _check_views(zp, zpp)
    return _contrast(zp, zpp, tau, symmetric)[0]


def fine_loss(zp, zpp, r, tau, n_scales, symmetric=False):
    """InfoNCE restricted to scale block r (0-based)"""
    zp, zpp = _check_views(zp, zpp)
    if not 0 <= r < n_scales or zp.shape[1] % n_scales:
        raise ConfigError(f"scale {r} is not a block of a {zp.shape[1]}-wide, {n_scales}-scale embedding")
    cols = _block(zp, r, n_scales)
    return _contrast(zp[:, cols], zpp[:, cols], tau, symmetric)[0]


def multi_grained(zp, zpp, tau, n_scales, symmetric=False):
    """L_C + sum_r L_F,r"""
    total = coarse_loss(zp, zpp, tau, symmetric)
    for r in range(n_scales):
        total += fine_loss(zp, zpp, r, tau, n_scales, symmetric)
    return total


def soft_orth_loss(c_hat):
    """Sum of |entries| strictly above the diagonal"""
    c_hat = np.asarray(c_hat, dtype=float)
    if c_hat.ndim != 2 or c_hat.shape[0] != c_hat.shape[1]:
        raise ValueError(f"soft orthogonality needs a square matrix, got shape {c_hat.shape}")
    return float(np.abs(np.triu(c_hat, k=1)).sum())


def soft_orth_grad(c_hat):
    """Subgradient of soft_orth_loss (sign on the strict upper triangle, 0 at 0)"""
    return np.triu(np.sign(c_hat), k=1)


def batch_covariance(z):
    z = np.asarray(z, dtype=float)
    if z.shape[0] < 2:
        raise BatchSizeError(f"covariance needs B >= 2, got B={z.shape[0]}")
    return z.T @ z / (z.shape[0] - 1)


@dataclass(eq=False)
class CovarianceAccumulator:
    """C_accu <- alpha * C_accu + C_B, c <- alpha * c + 1, C_hat = C_accu / c"""

    n_features: int
    alpha: float = 0.5
    c_accu: np.ndarray = None
    c: float = 0.0

    def __post_init__(self):
        if self.c_accu is None:
            self.c_accu = np.zeros((self.n_features, self.n_features))

    def preview(self, z):
        """(C_hat, c) after absorbing batch z, without mutating"""
        c_batch = batch_covariance(z)
        if c_batch.shape != self.c_accu.shape:
            raise ConfigError(f"batch has {c_batch.shape[0]} features, accumulator {self.n_features}")
        c_new = self.alpha * self.c + 1.0
        return (self.alpha * self.c_accu + c_batch) / c_new, c_new

    def update(self, z):
        """Absorb batch z and return the new C_hat"""
        c_batch = batch_covariance(z)
        self.c_accu = self.alpha * self.c_accu + c_batch
        self.c = self.alpha * self.c + 1.0
        return self.c_hat

    @property
    def c_hat(self):
        if self.c == 0:
            return np.zeros_like(self.c_accu)
        return self.c_accu / self.c

    def reset(self):
        self.c_accu = np.zeros((self.n_features, self.n_features))
        self.c = 0.0


def cov_update(acc, z_batch, alpha=None):
    """Mutate acc with z_batch and return C_hat"""
    if alpha is not None:
        acc.alpha = alpha
    return acc.update(z_batch)


@dataclass
class AccumulatorBank:
    """One accumulator per (view, scale)"""

    n_scales: int
    block_size: int
    alpha: float = 0.5
    n_views: int = 2
    accumulators: Dict[Tuple[int, int], CovarianceAccumulator] = field(default_factory=dict)

    def __post_init__(self):
        if not self.accumulators:
            self.reset()

    def get(self, view, r):
        return self.accumulators[(view, r)]

    def reset(self):
        self.accumulators = {
            (view, r): CovarianceAccumulator(self.block_size, self.alpha)
            for view in range(self.n_views) for r in range(self.n_scales)
        }


@dataclass
class LossBreakdown:
    coarse: float = 0.0
    fine: float = 0.0
    fine_per_scale: List[float] = field(default_factory=list)
    frobenius: float = 0.0
    soft_orth: float = 0.0
    alignment: float = 0.0
    multi_grained: float = 0.0
    total: float = 0.0

    def as_row(self):
        return {"L_C": self.coarse, "L_F": self.fine, "L_A": self.alignment, "total": self.total}


def _standardize_block(block):
    state = BatchNormState(block.shape[1])
    normalized, cache = batchnorm(block, state, mode="train", update=False)
    return normalized, cache


def _view_alignment(z, bank, view, cfg, commit):
    """Frobenius + lambda_S * soft orthogonality for one view, with dL/dz"""
    n_scales = bank.n_scales
    blocks, caches = [], []
    for r in range(n_scales):
        block = z[:, _block(z, r, n_scales)]
        if cfg.align_batchnorm:
            block, cache = _standardize_block(block)
            caches.append(cache)
        blocks.append(block)

    center = np.mean(blocks, axis=0)
    frobenius = float(sum(np.sum((b - center) ** 2) for b in blocks))
    soft, grads = 0.0, []
    for r, block in enumerate(blocks):
        acc = bank.get(view, r)
        c_hat, c_new = acc.preview(block)
        if commit:
            acc.update(block)
        soft += soft_orth_loss(c_hat)
        g = soft_orth_grad(c_hat)
        d_block = 2.0 * (block - center)
        d_block += cfg.lambda_s * block @ (g + g.T) / ((block.shape[0] - 1) * c_new)
        if cfg.align_batchnorm:
            d_block = batchnorm_backward(caches[r], d_block)
        grads.append(d_block)
    return frobenius, soft, np.concatenate(grads, axis=1)


def alignment_terms(zp, zpp, bank, cfg, commit=True):
    """(frobenius, soft_orth, L_A, dL_A/dZ', dL_A/dZ'')"""
    zp, zpp = _check_views(zp, zpp)
    if zp.shape[1] != bank.n_scales * bank.block_size:
        raise ConfigError(f"embedding width {zp.shape[1]} does not match "
                          f"{bank.n_scales} scales x {bank.block_size} features")
    f1, s1, dzp = _view_alignment(zp, bank, 0, cfg, commit)
    f2, s2, dzpp = _view_alignment(zpp, bank, 1, cfg, commit)
    frobenius, soft = f1 + f2, s1 + s2
    return frobenius, soft, frobenius + cfg.lambda_s * soft, dzp, dzpp


def alignment_loss(zp, zpp, bank, cfg, commit=True):
    return alignment_terms(zp, zpp, bank, cfg, commit)[2]


def total_loss(zp, zpp, bank, cfg, commit=True):
    """Full objective with gradients w.r.t. both views.

    Returns (LossBreakdown, dL/dZ', dL/dZ''). Disabled terms contribute
    neither value nor gradient; with commit=False the accumulators are left
    untouched.
    """
    zp, zpp = _check_views(zp, zpp)
    n_scales = bank.n_scales
    out = LossBreakdown(fine_per_scale=[0.0] * n_scales)
    dzp = np.zeros_like(zp)
    dzpp = np.zeros_like(zpp)

    if not cfg.disable_coarse:
        out.coarse, gp, gpp = _contrast(zp, zpp, cfg.tau, cfg.symmetric)
        dzp += gp
        dzpp += gpp
    if not cfg.disable_fine:
        for r in range(n_scales):
            cols = _block(zp, r, n_scales)
            value, gp, gpp = _contrast(zp[:, cols], zpp[:, cols], cfg.tau, cfg.symmetric)
            out.fine_per_scale[r] = value
            dzp[:, cols] += gp
            dzpp[:, cols] += gpp
        out.fine = float(sum(out.fine_per_scale))
    out.multi_grained = out.coarse + out.fine

    if not cfg.disable_alignment and cfg.lam > 0:
        out.frobenius, out.soft_orth, out.alignment, gp, gpp = alignment_terms(zp, zpp, bank, cfg, commit)
        dzp += cfg.lam * gp
        dzpp += cfg.lam * gpp
    out.total = out.multi_grained + cfg.lam * out.alignment
    return out, dzp, dzpp
