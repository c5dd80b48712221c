"""
Unsupervised training of the shapelet encoder and dataset encoding.
"""

import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from logic.augment import AugmentConfig, augment_batch
from logic.encoder import EncoderConfig, ModelParams, ShapeletTransformer, init_params
from logic.errors import CSLError, ConfigError, TrainingError
from logic.normalization import BatchNormState, batchnorm, batchnorm_backward, update_running_stats
from logic.objective import AccumulatorBank, LossConfig, total_loss
from logic.data import equalize
from utils.logging import LoggingMixin

LOSS_COLUMNS = ["step", "epoch", "L_C", "L_F", "L_A", "total"]
ENCODE_BATCH_SIZE = 64


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 8
    epochs: int = 400
    momentum: float = 0.0
    seed: int = 0
    early_stop: bool = True
    early_stop_window: int = 20
    early_stop_tol: float = 1e-4
    init_from_data: bool = False
    scale_range: str = "all"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def validate(self):
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.early_stop_window < 1:
            raise ConfigError("early_stop_window must be at least 1")
        self.augment.validate()
        self.loss.validate()
        return self

    def to_dict(self):
        return {
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "momentum": self.momentum,
            "seed": self.seed,
            "early_stop": self.early_stop,
            "early_stop_window": self.early_stop_window,
            "early_stop_tol": self.early_stop_tol,
            "init_from_data": self.init_from_data,
            "scale_range": self.scale_range,
            "encoder": self.encoder.to_dict(),
            "augment": self.augment.to_dict(),
            "loss": self.loss.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        nested = {
            "encoder": EncoderConfig.from_dict(data.pop("encoder", {})),
            "augment": AugmentConfig.from_dict(data.pop("augment", {})),
            "loss": LossConfig.from_dict(data.pop("loss", {})),
        }
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown train option(s): {sorted(unknown)}")
        return cls(**data, **nested)


@dataclass
class TrainedModel:
    """Everything needed to encode new data"""

    encoder: EncoderConfig
    params: ModelParams
    bn_state: BatchNormState

    def transformer(self):
        return ShapeletTransformer(self.encoder, self.params)

    def encode(self, dataset):
        return encode_dataset(dataset, self.params, self.bn_state, self.encoder)


@dataclass
class TrainResult:
    model: TrainedModel
    history: List[dict] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False
    epoch_seconds: List[float] = field(default_factory=list)
    augment_seconds: List[float] = field(default_factory=list)


def objective_and_grad(transformer, xp, xpp, bn_state, bank, loss_cfg, commit=True):
    """Encode both views, batch-normalize, evaluate the loss and backpropagate
    to the shapelets. Each view is normalized by its own batch statistics;
    the running statistics take one step on both views together. They and
    the accumulators change only when commit is True. Returns
    (LossBreakdown, ModelParams of grads)."""
    zp, cache_p = transformer.forward(xp)
    zpp, cache_pp = transformer.forward(xpp)
    np_, bn_p = batchnorm(zp, bn_state, mode="train", update=False)
    npp, bn_pp = batchnorm(zpp, bn_state, mode="train", update=False)
    if commit:
        update_running_stats(bn_state, np.concatenate([zp, zpp]))
    breakdown, g_p, g_pp = total_loss(np_, npp, bank, loss_cfg, commit=commit)
    grads_p = transformer.backward(cache_p, batchnorm_backward(bn_p, g_p))
    grads_pp = transformer.backward(cache_pp, batchnorm_backward(bn_pp, g_pp))
    for acc, extra in zip(grads_p.arrays(), grads_pp.arrays()):
        acc += extra
    return breakdown, grads_p


def make_batches(order, batch_size):
    """Consecutive slices of order; a final batch shorter than 2 is dropped"""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if batches and len(batches[-1]) < 2:
        batches.pop()
    return batches


def moving_average_stalled(losses, window, tol):
    """True when the `window`-epoch moving average of the epoch losses has
    spent its last `window` values without beating its earlier best by more
    than tol (relative)"""
    if len(losses) < 2 * window:
        return False
    averages = np.convolve(losses, np.ones(window) / window, mode="valid")
    best = float(averages[:-window].min())
    return float(averages[-window:].min()) > best - tol * abs(best)


class ShapeletTrainer:
    """Runs SGD on the contrastive objective over an unlabeled dataset"""

    def __init__(self, app, config):
        self.app = app
        self.config = config.validate()

    def _prepare(self, dataset):
        data = equalize(dataset.unlabeled()).to_array()
        n, d, t = data.shape
        if n < 2:
            raise ConfigError(f"training needs at least 2 samples, got {n}")
        encoder_cfg = EncoderConfig(**{**self.config.encoder.to_dict(), "series_length": t, "n_dims": d})
        encoder_cfg = encoder_cfg.with_scale_range(self.config.scale_range).validate()
        return data, encoder_cfg

    def fit(self, dataset):
        cfg = self.config
        data, encoder_cfg = self._prepare(dataset)
        rng = np.random.default_rng(cfg.seed)
        params = init_params(encoder_cfg, rng, data if cfg.init_from_data else None)
        transformer = ShapeletTransformer(encoder_cfg, params)
        bn_state = BatchNormState(encoder_cfg.repr_dim)
        bank = AccumulatorBank(encoder_cfg.n_scales, encoder_cfg.block_size, cfg.loss.alpha)
        velocity = [np.zeros_like(p) for p in params.arrays()]
        result = TrainResult(model=TrainedModel(encoder_cfg, params, bn_state))

        self.app.log_message(
            f"🚀 Training on {len(data)} series (D={encoder_cfg.n_dims}, T={encoder_cfg.series_length}), "
            f"R={encoder_cfg.n_scales}, M={encoder_cfg.n_measures}, V={encoder_cfg.n_shapelets}, "
            f"D_repr={encoder_cfg.repr_dim}, lengths={encoder_cfg.shapelet_lengths()}")

        step = 0
        for epoch in range(1, cfg.epochs + 1):
            bank.reset()
            batches = make_batches(rng.permutation(len(data)), cfg.batch_size)
            epoch_start = time.perf_counter()
            augment_time = 0.0
            totals = []
            for batch_step, idx in enumerate(batches):
                step += 1
                try:
                    t0 = time.perf_counter()
                    xp, xpp = augment_batch(data[idx], cfg.augment, rng)
                    augment_time += time.perf_counter() - t0
                    breakdown, grads = objective_and_grad(transformer, xp, xpp, bn_state, bank, cfg.loss)
                    if not np.isfinite(breakdown.total):
                        raise TrainingError("loss is not finite", epoch, batch_step)
                    for p, g, v in zip(params.arrays(), grads.arrays(), velocity):
                        if cfg.momentum:
                            v *= cfg.momentum
                            v += g
                            g = v
                        p -= cfg.lr * g
                except TrainingError:
                    raise
                except (CSLError, ValueError, FloatingPointError) as e:
                    raise TrainingError(str(e), epoch, batch_step) from e

                row = {"step": step, "epoch": epoch, **breakdown.as_row()}
                result.history.append(row)
                totals.append(breakdown.total)
                self.app.log_message(
                    f"📊 epoch {epoch} step {batch_step}: L_C={breakdown.coarse:.6f} "
                    f"L_F={breakdown.fine:.6f} L_A={breakdown.alignment:.6f} total={breakdown.total:.6f}")

            elapsed = time.perf_counter() - epoch_start
            result.epoch_losses.append(float(np.mean(totals)))
            result.epoch_seconds.append(elapsed)
            result.augment_seconds.append(augment_time)
            result.epochs_run = epoch
            share = 100.0 * augment_time / elapsed if elapsed > 0 else 0.0
            self.app.log_message(
                f"⏱️ Epoch {epoch}/{cfg.epochs}: loss={result.epoch_losses[-1]:.6f} "
                f"time={elapsed:.2f}s (augmentation {share:.1f}%)")

            if cfg.early_stop and moving_average_stalled(
                    result.epoch_losses, cfg.early_stop_window, cfg.early_stop_tol):
                result.stopped_early = True
                self.app.log_message(f"✅ Early stop after epoch {epoch}: loss plateaued")
                break

        self.app.log_message(f"✅ Training finished: {result.epochs_run} epochs, final loss "
                             f"{result.epoch_losses[-1]:.6f}")
        return result


def train(dataset, cfg, app=None):
    """Train a model on the samples of dataset (labels are never read)"""
    if app is None:
        app = LoggingMixin(console=None)
    return ShapeletTrainer(app, cfg).fit(dataset)


def encode_dataset(dataset, params, bn_state, encoder_cfg, batch_size=ENCODE_BATCH_SIZE):
    """(N, D_repr) embeddings with inference-mode batchnorm, in dataset order"""
    data = equalize(dataset).to_array()
    transformer = ShapeletTransformer(encoder_cfg, params)
    rows = []
    for start in range(0, len(data), batch_size):
        z = transformer.transform(data[start:start + batch_size])
        rows.append(batchnorm(z, bn_state, mode="infer")[0])
    return np.concatenate(rows, axis=0)
