import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from logic.checkpoint import CHECKPOINT_FORMAT, CheckpointManager, checkpoint_from_dict, checkpoint_to_dict
from logic.encoder import EncoderConfig
from logic.errors import DataFormatError, InputPathError
from logic.synthetic import make_motif_dataset
from logic.train import TrainConfig, train
from utils.logging import LoggingMixin


@pytest.fixture(scope="module")
def trained():
    cfg = TrainConfig(epochs=1, batch_size=4, early_stop=False, encoder=EncoderConfig(n_scales=2, repr_dim=6))
    ds = make_motif_dataset(n=8, d=2, t=24, seed=0)
    return ds, train(ds, cfg).model, cfg


@pytest.fixture
def manager():
    return CheckpointManager(LoggingMixin(console=None))


def test_round_trip_encodes_identically(trained, manager, tmp_path):
    ds, model, cfg = trained
    path = tmp_path / "model" / "checkpoint.json"
    digest = manager.save(path, model, cfg)
    assert len(digest) == 64
    loaded, loaded_cfg = manager.load(path)
    assert_array_equal(loaded.encode(ds), model.encode(ds))
    assert loaded_cfg.to_dict() == cfg.to_dict()


def test_save_is_byte_stable(trained, manager, tmp_path):
    _, model, cfg = trained
    assert manager.save(tmp_path / "a.json", model, cfg) == manager.save(tmp_path / "b.json", model, cfg)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_format_and_version_checked(trained):
    _, model, _ = trained
    data = checkpoint_to_dict(model)
    assert data["format"] == CHECKPOINT_FORMAT
    with pytest.raises(DataFormatError, match="not a checkpoint"):
        checkpoint_from_dict({**data, "format": "pickle"})
    with pytest.raises(DataFormatError, match="version"):
        checkpoint_from_dict({**data, "version": 99})


def test_shape_mismatch_rejected(trained):
    _, model, _ = trained
    data = checkpoint_to_dict(model)
    data["shapelets"][1][0] = np.zeros((2, 2, 3)).tolist()
    with pytest.raises(DataFormatError, match="shape"):
        checkpoint_from_dict(data)
    data = checkpoint_to_dict(model)
    data["batchnorm"]["running_mean"] = [0.0]
    with pytest.raises(DataFormatError):
        checkpoint_from_dict(data)
    data = checkpoint_to_dict(model)
    del data["shapelets"]
    with pytest.raises(DataFormatError, match="missing"):
        checkpoint_from_dict(data)


def test_training_config_optional(trained):
    _, model, _ = trained
    _, cfg = checkpoint_from_dict(json.loads(json.dumps(checkpoint_to_dict(model))))
    assert cfg is None


def test_invalid_json_reports_line(manager, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n "format": "csl-checkpoint",\n oops\n}\n', encoding="utf-8")
    with pytest.raises(DataFormatError) as info:
        manager.load(path)
    assert info.value.line == 3


def test_missing_file(manager, tmp_path):
    with pytest.raises(InputPathError):
        manager.load(tmp_path / "absent.json")
