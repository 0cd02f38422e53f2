import numpy as np
import pytest

from seegraph.autodiff import Tape, backward, mul, sum_
from seegraph.errors import FormatError, ValidationError
from seegraph.params import ParameterStore, load_checkpoint, save_checkpoint


def test_duplicate_names_rejected():
    store = ParameterStore()
    store.add("w", np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        store.add("w", np.zeros((2, 2)))


def test_dense_init_bounds_and_determinism():
    a = ParameterStore().add_dense("layer.w", (64, 32), 64, seed=5)
    b = ParameterStore().add_dense("layer.w", (64, 32), 64, seed=5)
    c = ParameterStore().add_dense("layer.w", (64, 32), 64, seed=6)
    bound = 1.0 / np.sqrt(64)
    assert np.abs(a.data).max() <= bound
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_adam_moves_toward_minimum():
    store = ParameterStore()
    x = store.add("x", np.array([[4.0]]))
    for _ in range(400):
        with Tape() as tape:
            loss = sum_(mul(x, x))
        grads = backward(tape, loss)
        store.adam_step(grads, lr=0.05)
    assert abs(x.data.item()) < 1e-2


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "model.sgwt"
    rng = np.random.default_rng(3)
    arrays = {
        "a.w": rng.standard_normal((3, 4)),
        "b.bias": rng.standard_normal((1, 7)),
        "scalar": np.array(2.5),
    }
    save_checkpoint(path, arrays)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(arrays)
    for name, values in arrays.items():
        assert np.array_equal(loaded[name], values)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.sgwt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_checkpoint_truncation(tmp_path):
    path = tmp_path / "model.sgwt"
    save_checkpoint(path, {"w": np.ones((4, 4))})
    blob = path.read_bytes()
    path.write_bytes(blob[:-9])
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_store_load_shape_mismatch(tmp_path):
    path = tmp_path / "model.sgwt"
    donor = ParameterStore()
    donor.add("w", np.ones((2, 2)))
    donor.save(path)

    target = ParameterStore()
    target.add("w", np.ones((3, 3)))
    with pytest.raises(FormatError):
        target.load(path)

    other = ParameterStore()
    other.add("v", np.ones((2, 2)))
    with pytest.raises(FormatError):
        other.load(path)


def test_store_save_load_round_trip(tmp_path):
    path = tmp_path / "model.sgwt"
    source = ParameterStore()
    source.add_dense("enc.w", (5, 3), 5, seed=1)
    source.add_zeros("enc.b", (1, 3))
    source.save(path)

    target = ParameterStore()
    target.add_dense("enc.w", (5, 3), 5, seed=99)
    target.add_zeros("enc.b", (1, 3))
    target.load(path)
    assert np.array_equal(target["enc.w"].data, source["enc.w"].data)
