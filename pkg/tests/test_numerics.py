import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaspr import autodiff as ad
from qaspr import checkpoint
from qaspr.gradcheck import grad_check
from qaspr.optim import ParamStore, adam_step
from qaspr.toy import toy_closure


def _closure(build, params):
    """Wrap ``build(P) -> scalar Tensor`` as a grad_check closure over ``params``."""

    def closure():
        tape = ad.Tape()
        P = {k: tape.param(k, v) for k, v in params.items()}
        loss = build(P)
        return float(loss.data), ad.backward(tape, loss)

    return closure


def test_dot_backward():
    w, x = np.array([0.5, -1.0, 2.0]), np.array([1.0, 2.0, 3.0])
    tape = ad.Tape()
    W, X = tape.param("w", w), tape.param("x", x)
    grads = ad.backward(tape, ad.dot(W, X))
    assert np.array_equal(grads["w"], x)
    assert np.array_equal(grads["x"], w)


def test_logsumexp_uniform():
    assert float(ad.logsumexp(ad.constant(np.zeros(4))).data) == pytest.approx(math.log(4), abs=1e-15)


def test_linear_finite_differences():
    rng = np.random.default_rng(0)
    params = {"W": rng.normal(size=(3, 5)), "x": rng.normal(size=5), "c": rng.normal(size=3)}
    report = grad_check(_closure(lambda P: ad.dot(P["c"], ad.linear(P["W"], P["x"])), params), params)
    assert report.worst() < 1e-6


def test_linear_model_is_near_exact():
    params = {"w": np.array([0.3, -0.7, 1.1])}
    x = ad.constant([1.0, 2.0, 3.0])
    report = grad_check(_closure(lambda P: ad.dot(P["w"], x), params), params)
    assert report.worst() < 1e-9


@pytest.mark.parametrize("relu", [False, True])
def test_every_op_against_finite_differences(relu):
    rng = np.random.default_rng(1)
    params = {
        "A": rng.normal(size=(4, 6)),
        "B": rng.normal(size=(5, 3)),
        "u": rng.normal(size=3),
        "v": rng.normal(size=4),
    }

    def build(P):
        rows = ad.gather(P["B"], np.array([0, 2, 2, 4]))  # (4, 3)
        x = ad.concat(rows, ad.gather(P["B"], np.array([1, 1, 3, 0])))  # (4, 6)
        h = ad.linear(P["A"], x)  # (4, 4)
        h = ad.add(h, ad.scale(0.5, ad.gather(h, np.array([1, 0, 3, 2]))))
        if relu:
            h = ad.relu(h)
        pooled = ad.index_add(h, np.array([0, 1, 0, 2]), 3)  # (3, 4)
        s = ad.dot(P["v"], pooled)  # (3,)
        terms = [ad.logsumexp(s), ad.neg_logsoftmax_pick(s, 1), ad.dot(P["u"], s)]
        return ad.sum_list(terms)

    report = grad_check(_closure(build, params), params)
    assert report.worst() < 1e-6, report.to_json()


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_linear_random_shapes(m, n, seed):
    rng = np.random.default_rng(seed)
    params = {"W": rng.normal(size=(m, n)), "x": rng.normal(size=(2, n))}
    w = ad.constant(rng.normal(size=m))
    build = lambda P: ad.logsumexp(ad.dot(w, ad.linear(P["W"], P["x"])))
    report = grad_check(_closure(build, params), params)
    # tiny gradients are dominated by difference round-off; accept either bound
    for name in params:
        assert report.max_rel_error[name] < 1e-5 or report.max_abs_error[name] < 1e-8


def test_corrupted_backward_is_caught():
    def bad_dot(w, x):
        out = ad.Tensor(w.data @ x.data)

        def backward(g):
            ad._accum(w, 1.5 * g * x.data)  # wrong by 50%
            ad._accum(x, g * w.data)

        return ad._record((w, x), out.data, backward)

    params = {"w": np.array([0.2, -0.4]), "x": np.array([1.0, 3.0])}
    report = grad_check(_closure(lambda P: bad_dot(P["w"], P["x"]), params), params)
    assert report.max_rel_error["w"] > 1e-2


def test_toy_model_gradients():
    closure, params = toy_closure()
    report = grad_check(closure, params)
    assert set(report.max_rel_error) == set(params)
    assert report.passed(1e-4), report.to_json()


def test_loss_independent_of_param_has_zero_grad():
    tape = ad.Tape()
    a = tape.param("a", np.ones(3))
    b = tape.param("b", np.array([1.0, 2.0]))
    grads = ad.backward(tape, ad.logsumexp(b))
    assert np.array_equal(grads["a"], np.zeros(3))


def test_shape_errors_name_the_op():
    with pytest.raises(ad.ShapeError, match="linear"):
        ad.linear(ad.constant(np.ones((2, 3))), ad.constant(np.ones(4)))
    with pytest.raises(ad.ShapeError, match="dot"):
        ad.dot(ad.constant(np.ones(2)), ad.constant(np.ones(3)))
    with pytest.raises(ad.ShapeError, match="add"):
        ad.add(ad.constant(np.ones(2)), ad.constant(np.ones(3)))


def test_backward_rejects_non_scalar_and_double_use():
    tape = ad.Tape()
    x = tape.param("x", np.ones(3))
    with pytest.raises(ad.ShapeError):
        ad.backward(tape, ad.scale(2.0, x))
    tape = ad.Tape()
    x = tape.param("x", np.ones(3))
    loss = ad.logsumexp(x)
    ad.backward(tape, loss)
    with pytest.raises(RuntimeError):
        ad.backward(tape, loss)


def test_adam_first_step_closed_form():
    store = ParamStore({"theta": np.zeros(())})
    store.accumulate({"theta": np.ones(())})
    adam_step(store, lr=0.1)
    assert float(store["theta"]) == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-15)


def test_adam_zero_grad_and_zero_lr_are_identity():
    rng = np.random.default_rng(0)
    p = {"a": rng.normal(size=(3, 2))}
    store = ParamStore(p)
    for _ in range(5):
        adam_step(store, lr=0.1)
    assert np.array_equal(store["a"], p["a"])
    for _ in range(5):
        store.accumulate({"a": rng.normal(size=(3, 2))})
        adam_step(store, lr=0.0)
    assert np.array_equal(store["a"], p["a"])


def test_adam_non_finite_fails_fast():
    store = ParamStore({"a": np.zeros(2)})
    store.accumulate({"a": np.array([1.0, np.nan])})
    with pytest.raises(FloatingPointError):
        adam_step(store, lr=0.1)


def test_adam_frozen():
    store = ParamStore({"a": np.zeros(2), "b": np.zeros(2)})
    store.accumulate({"a": np.ones(2), "b": np.ones(2)})
    adam_step(store, lr=0.1, frozen=frozenset({"b"}))
    assert np.all(store["a"] < 0) and np.all(store["b"] == 0)


# --- checkpoint -----------------------------------------------------------

META = {"d": 2, "L": 2, "K": 5, "relation_count": 4, "seed": 1, "config": {"shared_transform": False}}


def _params():
    rng = np.random.default_rng(2)
    return {
        "rel_emb": rng.normal(size=(4, 2)),
        "query_transform": rng.normal(size=(4, 2, 4)),
        "score_vec": rng.normal(size=2),
    }


def test_checkpoint_roundtrip(tmp_path):
    params = _params()
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, params, META)
    loaded, meta = checkpoint.load(path)
    assert meta == META
    for k in params:
        assert np.array_equal(loaded[k], params[k])
    assert checkpoint.dumps(loaded, meta) == path.read_bytes()


def test_checkpoint_layout():
    blob = checkpoint.dumps({"score_vec": np.array([1.0, 2.0])}, {"x": 1})
    assert blob.startswith(b"QASPR\x01")
    (n,) = struct.unpack_from("<I", blob, 6)
    pos = 10 + n
    assert struct.unpack_from("<I", blob, pos) == (1,)
    assert blob.endswith(np.array([1.0, 2.0], dtype="<f8").tobytes())


def test_checkpoint_rejects_bad_input(tmp_path):
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"NOPE")
    blob = checkpoint.dumps(_params(), META)
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob[:-3])
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, _params(), {**META, "d": 3})
    with pytest.raises(checkpoint.CheckpointError, match="shapes"):
        checkpoint.load(path)
