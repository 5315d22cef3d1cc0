import numpy as np
import pytest

from qdetect.checkpoint import CheckpointError, load_checkpoint, read_header, save_checkpoint
from qdetect.corpus import TaskMode
from qdetect.model import QuestionDetector

from helpers import tiny_detector, toy_records


def test_roundtrip_tensors(tmp_path):
    tensors = {"b": np.arange(6.0).reshape(2, 3), "a": np.array([np.pi, -0.0, 1e-300])}
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, "test", tensors, {"note": "hi"})
    header, back = load_checkpoint(path)
    assert header["kind"] == "test" and header["note"] == "hi"
    for k, v in tensors.items():
        assert back[k].dtype == np.float64 and np.array_equal(back[k], v)
    assert read_header(path)["kind"] == "test"


def test_save_is_byte_deterministic(tmp_path):
    tensors = {"w": np.linspace(0, 1, 7)}
    save_checkpoint(tmp_path / "1", "k", tensors, {"z": 1, "a": 2})
    save_checkpoint(tmp_path / "2", "k", dict(tensors), {"a": 2, "z": 1})
    assert (tmp_path / "1").read_bytes() == (tmp_path / "2").read_bytes()


def test_truncated_and_garbage(tmp_path):
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, "k", {"w": np.ones(10)})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_bytes(b"not a checkpoint\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


@pytest.mark.parametrize("task", [TaskMode.TWO_WAY, TaskMode.MULTI_WAY])
def test_detector_roundtrip(tmp_path, task):
    recs = toy_records()
    model = tiny_detector(recs, task)
    model.save(tmp_path / "m.ckpt")
    loaded = QuestionDetector.load(tmp_path / "m.ckpt")
    texts = [r.text for r in recs] + ["never seen words"]
    assert np.array_equal(model.predict_proba(texts), loaded.predict_proba(texts))
    assert loaded.vocab.to_json() == model.vocab.to_json()
    assert loaded.config == model.config


def test_wrong_kind_rejected(tmp_path):
    save_checkpoint(tmp_path / "x", "lr", {"w": np.ones(1)})
    with pytest.raises(CheckpointError):
        QuestionDetector.load(tmp_path / "x")
