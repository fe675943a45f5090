import struct

import numpy as np
import pytest

from hierkick.coach import CommandLimits, Variant, init_params
from hierkick.nn import MAGIC, ParamsFormatError, PolicyParams, load_params, save_params


@pytest.fixture
def params(rng):
    return init_params(Variant.END_TO_END, (5, 4), (6,), rng, CommandLimits())


def test_container_round_trip(params, tmp_path):
    path = tmp_path / "p.bin"
    save_params(params, path)
    back = load_params(path)
    assert back.equals(params) and back.head == "absolute"


def test_container_layout_is_byte_exact(params):
    data = params.to_bytes()
    assert data[:4] == MAGIC
    assert struct.unpack_from("<IIII", data, 4) == (1, 3, 2, 1)
    rows, cols = struct.unpack_from("<II", data, 20)
    assert (rows, cols) == (12, 5)
    first = np.frombuffer(data[28:28 + 8 * rows * cols], dtype="<f8").reshape(rows, cols)
    assert np.array_equal(first, params.actor.weights[0])
    sizes = [t.size for t in params.tensors()]
    n_layers = len(params.actor.weights) + len(params.critic.weights)
    assert len(data) == 4 + 16 + 8 * n_layers + 4 + 8 * sum(sizes)


def test_bad_magic_and_truncation(params):
    data = params.to_bytes()
    with pytest.raises(ParamsFormatError):
        PolicyParams.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ParamsFormatError):
        PolicyParams.from_bytes(data[:-3])
    with pytest.raises(ParamsFormatError):
        PolicyParams.from_bytes(data + b"\0")


def test_non_finite_rejected(params):
    bad = params.copy()
    bad.log_std[0] = np.nan
    with pytest.raises(ParamsFormatError):
        PolicyParams.from_bytes(bad.to_bytes())


def test_shape_mismatch_rejected(params):
    with pytest.raises(ParamsFormatError):
        PolicyParams(params.actor, params.critic, np.zeros(2), "increment")
    with pytest.raises(ParamsFormatError):
        params.actor.forward(np.zeros(11))


def test_flat_round_trip(params):
    assert params.from_flat(params.flat()).equals(params)
