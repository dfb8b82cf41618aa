import struct

import numpy as np
import pytest

from mindmerger_lab.core import CheckpointChecksumError, CheckpointError, CheckpointVersionError
from mindmerger_lab.pipeline.checkpoint import (
    Checkpoint,
    checkpoint_roundtrip,
    dumps,
    load_checkpoint,
    loads,
    save_checkpoint,
)
from mindmerger_lab.tensorcore.tensor import Parameter, ParameterCollection


@pytest.fixture
def checkpoint():
    params = ParameterCollection(
        [
            Parameter("bridge/map0/weight", np.arange(6, dtype=np.float32).reshape(2, 3) / 7),
            Parameter("bridge/sep", [0.5, -1.25, 3.0], trainable=False),
        ]
    )
    return Checkpoint(params, ("mapping",), "abc123", {"mapping_variant": "linear", "in_dim": 2})


@pytest.mark.unit
class TestCheckpointUnit:
    def test_round_trip_is_bitwise(self, checkpoint):
        loaded = checkpoint_roundtrip(checkpoint)

        assert list(loaded.params) == list(checkpoint.params)
        assert loaded.params.snapshot() == checkpoint.params.snapshot()
        assert [p.trainable for p in loaded.params.values()] == [True, False]
        assert loaded.provenance == ("mapping",)
        assert loaded.fingerprint == "abc123"
        assert loaded.meta == {"mapping_variant": "linear", "in_dim": 2}

    def test_serialization_is_deterministic(self, checkpoint):
        assert dumps(checkpoint) == dumps(checkpoint_roundtrip(checkpoint))

    def test_file_round_trip(self, tmp_path, checkpoint):
        path = save_checkpoint(tmp_path / "nested" / "mapping.mmlb", checkpoint)
        assert path.is_file()
        assert not path.with_suffix(".mmlb.tmp").exists()
        assert load_checkpoint(path).params.snapshot() == checkpoint.params.snapshot()

    def test_wrong_magic(self, checkpoint):
        blob = b"XXXX" + dumps(checkpoint)[4:]
        with pytest.raises(CheckpointError, match="Not a checkpoint"):
            loads(blob)

    def test_unsupported_version(self, checkpoint):
        blob = bytearray(dumps(checkpoint))
        blob[4:6] = struct.pack("<H", 2)
        with pytest.raises(CheckpointVersionError, match="version 2"):
            loads(bytes(blob))

    def test_corrupted_payload(self, checkpoint):
        blob = bytearray(dumps(checkpoint))
        blob[-40] ^= 0xFF
        with pytest.raises(CheckpointChecksumError):
            loads(bytes(blob))

    def test_truncated(self):
        with pytest.raises(CheckpointError, match="truncated"):
            loads(b"MMLB")
