"""检查点读写测试"""

import struct

import numpy as np
import pytest

from models.nn import ParamSet, snapshot
from utils.checkpoint import MAGIC, decode_tensors, encode_tensors, load_checkpoint, save_checkpoint
from utils.exceptions import CheckpointError


class TestCheckpoint:
    """检查点测试类"""

    def setup_method(self):
        rng = np.random.default_rng(11)
        self.params = ParamSet()
        self.params.add("embedding", rng.normal(size=(4, 3)))
        self.params.add("bias", np.array([0.1 + 0.2]))
        self.params.add("scalar_like", np.array(np.pi))

    def test_save_and_load(self, tmp_path):
        path = save_checkpoint(tmp_path / "nested" / "model.ckpt", self.params)
        loaded = load_checkpoint(path)
        assert loaded == snapshot(self.params)
        assert list(loaded) == ["embedding", "bias", "scalar_like"]
        assert loaded["scalar_like"].shape == ()

    def test_identical_content_identical_bytes(self, tmp_path):
        first = save_checkpoint(tmp_path / "a.ckpt", self.params)
        second = save_checkpoint(tmp_path / "b.ckpt", snapshot(self.params))
        assert first.read_bytes() == second.read_bytes()

    def test_bad_magic(self):
        data = encode_tensors(snapshot(self.params))
        with pytest.raises(CheckpointError):
            decode_tensors(b"XXXX" + data[4:])

    def test_unsupported_version(self):
        data = encode_tensors(snapshot(self.params))
        with pytest.raises(CheckpointError):
            decode_tensors(MAGIC + struct.pack("<I", 2) + data[8:])

    def test_truncated(self):
        data = encode_tensors(snapshot(self.params))
        with pytest.raises(CheckpointError):
            decode_tensors(data[:-3])

    def test_trailing_bytes(self):
        data = encode_tensors(snapshot(self.params))
        with pytest.raises(CheckpointError):
            decode_tensors(data + b"\x00")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")
