import json

import numpy as np
import pytest

from ppba.attack import cw_loss
from ppba.projection import TensorShape
from ppba.tensorfile import read_tensor, write_tensor
from ppba.victims import (
    CountingVictim,
    QueryCounter,
    ToyVictim,
    ToyVictimSpec,
    generate_toy_victim,
    load_victim,
    save_victim,
    toy_gradient,
    toy_predict,
)


def test_zero_weights_uniform_scores():
    shape = TensorShape(1, 2, 2)
    spec = ToyVictimSpec("linear_softmax", shape, 3, [np.zeros((3, 4))], [np.zeros(3)])
    np.testing.assert_allclose(toy_predict(spec, np.zeros((1, 2, 2))), np.full(3, 1 / 3))


def test_bias_only_scores():
    shape = TensorShape(1, 2, 2)
    spec = ToyVictimSpec("linear_softmax", shape, 2, [np.zeros((2, 4))], [np.array([1.0, 0.0])])
    e = np.e
    np.testing.assert_allclose(
        toy_predict(spec, np.zeros((1, 2, 2))), [e / (e + 1), 1 / (e + 1)], atol=1e-12
    )


@pytest.mark.parametrize("kind", ["linear_softmax", "mlp1"])
def test_scores_sum_to_one(kind):
    shape = TensorShape(3, 8, 8)
    spec = generate_toy_victim(0, kind, shape, 7)
    rng = np.random.default_rng(1)
    for _ in range(5):
        p = toy_predict(spec, rng.random(shape.as_tuple()))
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(p >= 0)


def test_predict_rejects_shape_mismatch():
    spec = generate_toy_victim(0, "linear_softmax", TensorShape(3, 8, 8), 5)
    with pytest.raises(ValueError):
        toy_predict(spec, np.zeros((1, 8, 8)))


def test_gradient_zero_when_clamped():
    shape = TensorShape(1, 2, 2)
    spec = ToyVictimSpec("linear_softmax", shape, 2, [np.zeros((2, 4))], [np.array([0.0, 5.0])])
    g = toy_gradient(spec, np.full((1, 2, 2), 0.5), 0)  # class 0 loses: loss = 0
    assert np.all(g == 0)


@pytest.mark.parametrize("kind", ["linear_softmax", "mlp1"])
def test_gradient_matches_finite_differences(kind):
    shape = TensorShape(1, 4, 4)
    spec = generate_toy_victim(5, kind, shape, 4, hidden_units=8)
    rng = np.random.default_rng(2)
    x = rng.random(shape.as_tuple())
    t = int(np.argmax(toy_predict(spec, x)))
    g = toy_gradient(spec, x, t)
    h = 1e-5
    fd = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd[idx] = (cw_loss(toy_predict(spec, xp), t) - cw_loss(toy_predict(spec, xm), t)) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_linear_gradient_in_row_space():
    shape = TensorShape(1, 4, 4)
    spec = generate_toy_victim(6, "linear_softmax", shape, 4)
    rng = np.random.default_rng(3)
    x = rng.random(shape.as_tuple())
    t = int(np.argmax(toy_predict(spec, x)))
    g = toy_gradient(spec, x, t).ravel()
    W = spec.weights[0]
    coef, residual, *_ = np.linalg.lstsq(W.T, g, rcond=None)
    assert np.linalg.norm(W.T @ coef - g) < 1e-10


def test_generate_reproducible_weights_file(tmp_path):
    shape = TensorShape(3, 8, 8)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_victim(generate_toy_victim(7, "linear_softmax", shape, 5), a)
    save_victim(generate_toy_victim(7, "linear_softmax", shape, 5), b)
    assert a.read_bytes() == b.read_bytes()


def test_generated_victim_non_degenerate():
    shape = TensorShape(3, 32, 32)
    vic = ToyVictim(generate_toy_victim(0, "linear_softmax", shape, 10))
    rng = np.random.default_rng(4)
    labels = {int(np.argmax(vic(rng.random(shape.as_tuple())))) for _ in range(100)}
    assert len(labels) >= 2


def test_weights_finite():
    spec = generate_toy_victim(8, "mlp1", TensorShape(3, 8, 8), 5)
    assert all(np.all(np.isfinite(w)) for w in spec.weights + spec.biases)


def test_victim_file_round_trip(tmp_path):
    shape = TensorShape(3, 8, 8)
    spec = generate_toy_victim(9, "mlp1", shape, 5, hidden_units=16)
    path = tmp_path / "victim.json"
    save_victim(spec, path)
    loaded = load_victim(path)
    assert loaded.kind == "mlp1"
    assert loaded.input_shape == shape
    assert loaded.hidden_units == 16
    for w1, w2 in zip(spec.weights, loaded.weights):
        np.testing.assert_array_equal(w1, w2)
    doc = json.loads(path.read_text())
    assert set(doc) == {"kind", "input_shape", "num_classes", "weights", "biases", "hidden_units"}


def test_query_counter():
    counter = QueryCounter()
    vic = CountingVictim(ToyVictim(generate_toy_victim(0, "linear_softmax", TensorShape(1, 2, 2), 2)),
                         counter)
    x = np.full((1, 2, 2), 0.5)
    for _ in range(7):
        vic(x)
    assert counter.count == 7


def test_tensor_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    x = rng.random((3, 4, 5)).astype(np.float32)
    path = tmp_path / "x.tnsr"
    write_tensor(path, x)
    y = read_tensor(path)
    np.testing.assert_array_equal(y, x.astype(np.float64))
    raw = path.read_bytes()
    assert raw[:4] == b"TNSR"
    assert int.from_bytes(raw[4:8], "little") == 3


def test_tensor_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.tnsr"
    path.write_bytes(b"JUNK" + b"\x00" * 8)
    with pytest.raises(ValueError):
        read_tensor(path)
