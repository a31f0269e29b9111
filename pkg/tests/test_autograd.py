import numpy as np
import pytest
import scipy.sparse as sp

from gradcheck import check_function
from relgraph.pna import autograd as ag
from relgraph.pna.autograd import Tensor

rng = np.random.default_rng(0)


def param(*shape, positive=False):
    x = rng.normal(size=shape)
    return Tensor(np.abs(x) + 0.5 if positive else x, requires_grad=True)


@pytest.mark.parametrize(
    "name, build, shapes",
    [
        ("add broadcast", lambda a, b: ag.add(a, b), [(4, 3), (3,)]),
        ("sub broadcast", lambda a, b: ag.sub(a, b), [(4, 3), (1, 3)]),
        ("mul", lambda a, b: ag.mul(a, b), [(4, 3), (4, 3)]),
        ("affine", lambda x, W, b: ag.affine(x, W, b), [(5, 3), (3, 2), (2,)]),
        ("affine 3d", lambda x, W: ag.affine(x, W), [(2, 5, 3), (3, 4)]),
        ("reshape", lambda x: ag.reshape(x, (6, 2)), [(3, 4)]),
        ("transpose", lambda x: ag.transpose(x, (2, 0, 1)), [(2, 3, 4)]),
        ("concat", lambda a, b: ag.concat([a, b], axis=1), [(3, 2), (3, 4)]),
        ("total", lambda x: ag.total(x), [(3, 4)]),
    ],
)
def test_op_gradients(name, build, shapes):
    tensors = [param(*s) for s in shapes]
    assert check_function(build, tensors) < 1e-6, name


def test_relu_and_sqrt():
    x = Tensor(np.array([[-1.0, 0.3], [2.0, -0.2]]), requires_grad=True)
    assert check_function(ag.relu, [x]) < 1e-6
    assert check_function(ag.sqrt, [param(3, 3, positive=True)]) < 1e-6


def test_spmm():
    A = sp.csr_matrix(rng.normal(size=(2, 5)) * (rng.random((2, 5)) < 0.6))
    assert check_function(lambda x: ag.spmm(A, x), [param(5, 3)]) < 1e-6


def test_batch_norm():
    build = lambda x, g, b: ag.batch_norm_train(x, g, b, 1e-5)[0]  # noqa: E731
    assert check_function(build, [param(6, 3), param(3), param(3)]) < 1e-5


def test_mean_abs_error():
    pred = param(7)
    target = pred.data + rng.choice([-1.0, 1.0], size=7) * 0.3
    loss = ag.mean_abs_error(pred, target)
    assert loss.data == pytest.approx(0.3)
    loss.backward()
    assert np.allclose(pred.grad, np.sign(pred.data - target) / 7)


def test_shared_input_accumulates():
    x = param(3)
    y = ag.total(ag.add(ag.mul(x, x), x))
    y.backward()
    assert np.allclose(x.grad, 2 * x.data + 1)


def test_no_grad_through_constants():
    c = Tensor(np.ones(3))
    out = ag.mul(c, 2.0)
    assert not out.requires_grad
    with pytest.raises(ValueError):
        param(3).backward()
