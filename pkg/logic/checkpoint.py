"""
Checkpoint container for trained models (layout in CHECKPOINT_FORMAT.md).
"""

import json
from pathlib import Path

import numpy as np

from logic.encoder import EncoderConfig, ModelParams
from logic.errors import DataFormatError
from logic.file_ops import FileOperations
from logic.normalization import BatchNormState
from logic.train import TrainConfig, TrainedModel

CHECKPOINT_FORMAT = "csl-checkpoint"
CHECKPOINT_VERSION = 1


def checkpoint_to_dict(model, train_config=None):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "encoder": model.encoder.to_dict(),
        "shapelets": [[arr.tolist() for arr in scale] for scale in model.params.shapelets],
        "batchnorm": model.bn_state.to_dict(),
        "train": None if train_config is None else train_config.to_dict(),
    }


def checkpoint_from_dict(data):
    """Rebuild (TrainedModel, TrainConfig or None), checking every shape"""
    if data.get("format") != CHECKPOINT_FORMAT:
        raise DataFormatError(f"not a checkpoint (format={data.get('format')!r})")
    if data.get("version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {data.get('version')!r}")
    try:
        encoder = EncoderConfig.from_dict(data["encoder"])
        shapelets = [[np.asarray(arr, dtype=float) for arr in scale] for scale in data["shapelets"]]
        bn_state = BatchNormState.from_dict(data["batchnorm"])
    except (KeyError, TypeError) as e:
        raise DataFormatError(f"checkpoint is missing or has a malformed field: {e}") from e

    lengths = encoder.shapelet_lengths()
    if len(shapelets) != encoder.n_scales:
        raise DataFormatError(f"checkpoint holds {len(shapelets)} scales, encoder declares {encoder.n_scales}")
    for r, scale in enumerate(shapelets):
        if len(scale) != encoder.n_measures:
            raise DataFormatError(f"scale {r} holds {len(scale)} measures, expected {encoder.n_measures}")
        for m, arr in enumerate(scale):
            expected = (encoder.shapelet_counts[m], encoder.n_dims, lengths[r])
            if arr.shape != expected:
                raise DataFormatError(f"shapelets ({r}, {m}) have shape {arr.shape}, expected {expected}")
            if not np.all(np.isfinite(arr)):
                raise DataFormatError(f"shapelets ({r}, {m}) contain non-finite values")
    if bn_state.running_mean.shape != (encoder.repr_dim,):
        raise DataFormatError("batchnorm statistics do not match the embedding width")

    train_config = None if data.get("train") is None else TrainConfig.from_dict(data["train"])
    return TrainedModel(encoder, ModelParams(shapelets), bn_state), train_config


class CheckpointManager:
    """Saves and loads trained models"""

    def __init__(self, app):
        self.app = app
        self.file_ops = FileOperations(app)

    def save(self, path, model, train_config=None):
        """Atomically write the checkpoint; returns its SHA-256 digest"""
        text = json.dumps(checkpoint_to_dict(model, train_config), indent=1)
        digest = self.file_ops.atomic_write_text(path, text + "\n")
        self.app.log_message(f"✅ Checkpoint saved: {path} (sha256 {digest[:16]})")
        return digest

    def load(self, path):
        path = self.file_ops.require_file(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"checkpoint {path} is not valid JSON: {e.msg}", line=e.lineno) from e
        model, train_config = checkpoint_from_dict(data)
        self.app.log_message(
            f"📁 Loaded checkpoint {Path(path).name}: R={model.encoder.n_scales}, "
            f"D_repr={model.encoder.repr_dim}, measures={','.join(model.encoder.measures)}")
        return model, train_config
