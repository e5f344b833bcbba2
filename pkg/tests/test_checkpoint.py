import numpy as np
import pytest

from nikud_tagger import checkpoint
from nikud_tagger.checkpoint import ChecksumMismatch, VersionMismatch
from nikud_tagger.model import TrainingConfig, forward, init
from nikud_tagger.vocab import CharVocab


@pytest.fixture
def params():
    cfg = TrainingConfig(embedding_dim=4, hidden_size=5, max_length=16)
    return init(cfg, CharVocab.default(), seed=11)


def test_round_trip_bitwise(tmp_path, params):
    path = tmp_path / "m.ckpt"
    checkpoint.save(params, path, extra={"m/x": np.arange(3.0)}, state={"epoch": 2})
    ck = checkpoint.load(path)
    assert ck.params.config == params.config
    assert list(ck.params.weights) == list(params.weights)
    for k, w in params.weights.items():
        assert np.array_equal(ck.params.weights[k], w) and ck.params.weights[k].dtype == w.dtype
    x = np.random.default_rng(0).integers(0, 34, size=(2, 16))
    a, b = forward(params, x), forward(ck.params, x)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    assert ck.state == {"epoch": 2}
    assert np.array_equal(ck.extra["m/x"], np.arange(3.0))


def test_float32_round_trip(tmp_path):
    cfg = TrainingConfig(embedding_dim=3, hidden_size=2, dtype="float32")
    p = init(cfg, CharVocab.default())
    checkpoint.save(p, tmp_path / "f.ckpt")
    ck = checkpoint.load(tmp_path / "f.ckpt")
    assert ck.params.weights["dense_W"].dtype == np.float32


@pytest.mark.parametrize("keep", [0, 10, 100, -1])
def test_truncated(tmp_path, params, keep):
    path = tmp_path / "m.ckpt"
    checkpoint.save(params, path)
    data = path.read_bytes()
    path.write_bytes(data[:keep])
    with pytest.raises(ChecksumMismatch):
        checkpoint.load(path)


def test_flipped_byte(tmp_path, params):
    path = tmp_path / "m.ckpt"
    checkpoint.save(params, path)
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(ChecksumMismatch):
        checkpoint.load(path)


def test_different_vocab(tmp_path, params):
    path = tmp_path / "m.ckpt"
    checkpoint.save(params, path)
    other = CharVocab(CharVocab.default().symbols + ("x",))
    with pytest.raises(VersionMismatch):
        checkpoint.load(path, vocab=other)


def test_save_is_atomic(tmp_path, params):
    path = tmp_path / "m.ckpt"
    checkpoint.save(params, path)
    assert [p.name for p in tmp_path.iterdir()] == ["m.ckpt"]
