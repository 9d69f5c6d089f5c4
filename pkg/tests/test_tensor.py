import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dilconv.errors import ShapeError, TensorIndexError
from dilconv.tensor import Shape4, as_tensor, elementwise, reduce_sum, tensor_index, tensor_new


@pytest.mark.parametrize("shape, fill, expected", [
    ([2, 3], 0.0, [0.0] * 6),
    ([1], 5.0, [5.0]),
    ([2, 2, 2], 1.0, [1.0] * 8),
])
def test_tensor_new(shape, fill, expected):
    t = tensor_new(shape, fill)
    assert t.shape == tuple(shape)
    assert t.dtype == np.float64
    assert t.reshape(-1).tolist() == expected


@pytest.mark.parametrize("shape", [[0], [2, 0], [-1, 3], []])
def test_tensor_new_rejects_bad_extents(shape):
    with pytest.raises(ShapeError):
        tensor_new(shape, 0.0)


def test_tensor_index():
    t = as_tensor(range(6), [2, 3])
    assert tensor_index(t, [1, 2]) == 5.0
    assert tensor_index(t, [0, 0]) == 0.0
    with pytest.raises(TensorIndexError):
        tensor_index(as_tensor(range(4)), [4])
    with pytest.raises(TensorIndexError):
        tensor_index(t, [0])


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_index_round_trip_is_row_major(shape):
    n = int(np.prod(shape))
    t = as_tensor(np.arange(n, dtype=float), shape)
    seen = [tensor_index(t, c) for c in itertools.product(*(range(s) for s in shape))]
    assert seen == list(range(n))


def test_elementwise():
    assert elementwise(as_tensor([1, 2]), as_tensor([3, 4]), "add").tolist() == [4, 6]
    assert elementwise(as_tensor([2, 2]), as_tensor([0, 0]), "mul").tolist() == [0, 0]
    assert elementwise(as_tensor([1]), as_tensor([1]), "sub").tolist() == [0]
    with pytest.raises(ShapeError):
        elementwise(as_tensor([1, 2]), as_tensor([1, 2, 3]), "add")


dyadic = st.integers(-2**20, 2**20).map(lambda k: k / 1024)


@given(st.lists(st.tuples(dyadic, dyadic, dyadic), min_size=1, max_size=16))
def test_add_commutative_associative_on_dyadics(triples):
    a, b, c = (as_tensor([t[i] for t in triples]) for i in range(3))
    assert np.array_equal(elementwise(a, b, "add"), elementwise(b, a, "add"))
    left = elementwise(elementwise(a, b, "add"), c, "add")
    right = elementwise(a, elementwise(b, c, "add"), "add")
    assert np.array_equal(left, right)


def test_reduce_sum():
    assert reduce_sum(as_tensor([1, 2, 3])) == 6
    assert reduce_sum(tensor_new([2, 2])) == 0
    assert reduce_sum(as_tensor([-1, 1])) == 0


def test_shape4():
    s = Shape4(1, 1, 3, 200)
    assert s.as_tuple() == (1, 1, 3, 200)
    assert Shape4.of(np.zeros((2, 1, 3, 5))) == Shape4(2, 1, 3, 5)
    with pytest.raises(ShapeError):
        Shape4(1, 0, 3, 3)
