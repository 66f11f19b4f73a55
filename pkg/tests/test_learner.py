import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from energon.core import Trace, TraceMeta, registry_lookup
from energon.learner import (
    AdamConfig,
    AdamState,
    CheckpointError,
    CnnModel,
    CnnSpec,
    ShapeError,
    TrainConfig,
    TrainingError,
    adam_step,
    cross_entropy,
    cross_validate,
    forward,
    load_checkpoint,
    loss_and_gradients,
    predict_proba,
    save_checkpoint,
    softmax,
    stratified_kfold,
    train,
)
from energon.learner.gradcheck import check_gradients, perturbed_model, random_tiny_spec
from energon.learner.kernels import conv1d_backward, conv1d_forward
from energon.learner.training import init_seed
from energon.core.taxonomy import build_taxonomy


def naive_conv(x, w, b):
    n, c_in, length = x.shape
    c_out, _, k = w.shape
    out = np.empty((n, c_out, length - k + 1))
    for i in range(n):
        for o in range(c_out):
            for l in range(length - k + 1):
                acc = b[o]
                for c in range(c_in):
                    for j in range(k):
                        acc += w[o, c, j] * x[i, c, l + j]
                out[i, o, l] = acc
    return out


def tiny_spec(**kw):
    base = dict(n_classes=2, conv_filters=(3, 2), kernel_size=3, pool_after=(True, False),
                fc_hidden=4, input_channels=2, input_length=12)
    base.update(kw)
    return CnnSpec(**base)


# -- convolution --------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 4), st.integers(1, 6),
       st.integers(6, 32), st.integers(0, 2**31))
def test_conv_equals_naive_loop_exactly(n, c_in, c_out, k, length, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, c_in, length))
    w = rng.normal(size=(c_out, c_in, k))
    b = rng.normal(size=c_out)
    assert np.array_equal(conv1d_forward(x, w, b), naive_conv(x, w, b))


def test_conv_backward_matches_linearity(rng):
    x = rng.normal(size=(2, 3, 15))
    w = rng.normal(size=(4, 3, 5))
    g = rng.normal(size=(2, 4, 11))
    dx, dw, db = conv1d_backward(g, x, w)
    # <g, conv(x)> is bilinear, so its gradients are exact adjoints
    dx_ref = np.zeros_like(x)
    dw_ref = np.zeros_like(w)
    for l in range(11):
        dx_ref[:, :, l:l + 5] += np.einsum("nf,fck->nck", g[:, :, l], w)
        dw_ref += np.einsum("nf,nck->fck", g[:, :, l], x[:, :, l:l + 5])
    assert np.allclose(dx, dx_ref) and np.allclose(dw, dw_ref)
    assert np.allclose(db, g.sum(axis=(0, 2)))


# -- forward ------------------------------------------------------------------

def test_spec_rejects_collapsing_lengths():
    with pytest.raises(ShapeError, match="collapses"):
        CnnSpec(n_classes=2, input_length=10)
    assert CnnSpec(n_classes=3).layer_lengths() == [(832, 416), (408, 204), (196, 196)]
    assert CnnSpec(n_classes=3).flat_dim == 8 * 196


def test_zero_output_layer_gives_uniform(rng):
    model = CnnModel.initialize(CnnSpec(n_classes=5), seed=0)
    model.params["fc2.weight"][:] = 0.0
    probs = forward(model, rng.normal(size=(3, 2, 840)))
    assert np.allclose(probs, 0.2, rtol=0, atol=1e-15)


def test_identity_network_reproduces_pooled_input():
    spec = CnnSpec(n_classes=2, conv_filters=(1,), kernel_size=1, pool_after=(True,), fc_hidden=2,
                   input_channels=1, input_length=4, bn_eps=0.0)
    model = CnnModel.initialize(spec, seed=0)
    model.params["conv1.weight"][:] = 1.0
    model.params["fc1.weight"][:] = np.eye(2)
    model.params["fc2.weight"][:] = np.eye(2)
    x = np.array([[[1.0, 3.0, 2.0, 5.0]]])
    assert model.eval().logits(x).tolist() == [[3.0, 5.0]]


def test_identical_inputs_give_identical_rows(rng):
    model = CnnModel.initialize(CnnSpec(n_classes=4), seed=3)
    x = np.repeat(rng.normal(size=(1, 2, 840)), 2, axis=0)
    p = forward(model, x)
    assert np.array_equal(p[0], p[1])


def test_shape_mismatch_is_rejected(rng):
    with pytest.raises(ShapeError):
        forward(CnnModel.initialize(CnnSpec(n_classes=2), 0), rng.normal(size=(2, 2, 839)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 10), st.floats(0.1, 500), st.integers(0, 2**31))
def test_softmax_rows_are_distributions(n, k, scale, seed):
    z = np.random.default_rng(seed).normal(0, scale, (n, k))
    p = softmax(z)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)


def test_batch_norm_modes_differ_and_eval_ignores_batch(rng):
    model = CnnModel.initialize(tiny_spec(), 0)
    x = rng.normal(size=(6, 2, 12))
    model.train()
    assert not np.allclose(forward(model, x[:3])[0], forward(model, x)[0])
    model.eval()
    assert np.array_equal(forward(model, x[:1])[0], forward(model, x)[0])


# -- loss and gradients -------------------------------------------------------

def test_cross_entropy_examples():
    assert cross_entropy(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1]) < 1e-6
    assert cross_entropy(np.full((3, 4), 0.25), [0, 1, 3]) == pytest.approx(math.log(4), abs=1e-12)
    assert cross_entropy(np.array([[1.0, 0.0]]), [1]) == pytest.approx(-math.log(1e-12))


def test_uniform_model_loss_is_log_classes(rng):
    model = CnnModel.initialize(tiny_spec(n_classes=4), 0)
    model.params["fc2.weight"][:] = 0.0
    loss, _ = loss_and_gradients(model, rng.normal(size=(3, 2, 12)), [0, 2, 3])
    assert loss == pytest.approx(1.3862943611198906, abs=1e-12)


def test_labels_out_of_range(rng):
    with pytest.raises(ShapeError):
        loss_and_gradients(CnnModel.initialize(tiny_spec(), 0), rng.normal(size=(2, 2, 12)), [0, 2])


@pytest.mark.parametrize("training", [True, False])
def test_gradients_match_finite_differences(rng, training):
    model = perturbed_model(tiny_spec(), rng, training)
    x = rng.normal(size=(5, 2, 12))
    report = check_gradients(model, x, rng.integers(0, 2, 5))
    assert report.checked > 0 and report.mismatches == []


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2**31))
def test_gradients_on_random_specs(seed):
    rng = np.random.default_rng(seed)
    spec = random_tiny_spec(rng)
    model = perturbed_model(spec, rng, training=True)
    x = rng.normal(size=(3, spec.input_channels, spec.input_length))
    report = check_gradients(model, x, rng.integers(0, spec.n_classes, 3))
    assert report.mismatches == []


# -- Adam ---------------------------------------------------------------------

def test_adam_zero_gradient_is_noop():
    params = {"w": np.array([1.0, -2.0])}
    adam_step(params, {"w": np.zeros(2)}, AdamState(), AdamConfig(lr=0.1), 1)
    assert params["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_is_sign_times_lr():
    params = {"w": np.array([0.0])}
    adam_step(params, {"w": np.array([2.0])}, AdamState(), AdamConfig(lr=0.1), 1)
    # m_hat = 2, v_hat = 4: step = -0.1 * 2 / (2 + 1e-8)
    assert params["w"][0] == pytest.approx(-0.1 * 2 / (2 + 1e-8), rel=1e-15)
    assert params["w"][0] == pytest.approx(-0.1, abs=1e-9)


def test_adam_equal_gradients_equal_updates():
    params = {"a": np.array([0.5]), "b": np.array([0.5])}
    state = AdamState()
    for t in range(1, 4):
        adam_step(params, {"a": np.array([0.3]), "b": np.array([0.3])}, state, AdamConfig(lr=0.01), t)
    assert params["a"][0] == params["b"][0]


def test_adam_rejects_step_zero():
    with pytest.raises(ValueError):
        adam_step({}, {}, AdamState(), AdamConfig(), 0)


# -- folds --------------------------------------------------------------------

def test_kfold_protocol_arithmetic():
    labels = np.repeat(np.arange(8), 100)
    folds = stratified_kfold(labels, 5, seed=0)
    for _, val in folds:
        assert np.bincount(labels[val]).tolist() == [20] * 8


def test_kfold_small_classes():
    labels = np.repeat(np.arange(3), 7)
    for _, val in stratified_kfold(labels, 5, seed=1):
        assert set(np.bincount(labels[val], minlength=3)) <= {1, 2}


def test_kfold_deterministic_and_rejects_small_class():
    labels = np.repeat(np.arange(4), 9)
    a, b = stratified_kfold(labels, 3, 7), stratified_kfold(labels, 3, 7)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    with pytest.raises(ValueError, match="need at least"):
        stratified_kfold([0, 0, 1], 2, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=4, max_size=80), st.integers(2, 5), st.integers(0, 1000))
def test_kfold_partitions_and_balances(labels, k, seed):
    labels = np.array(labels)
    if np.bincount(labels)[np.unique(labels)].min() < k:
        with pytest.raises(ValueError):
            stratified_kfold(labels, k, seed)
        return
    folds = stratified_kfold(labels, k, seed)
    vals = np.concatenate([v for _, v in folds])
    assert sorted(vals.tolist()) == list(range(len(labels)))
    for tr, va in folds:
        assert not set(tr) & set(va) and len(tr) + len(va) == len(labels)
    for c in np.unique(labels):
        per_fold = [int(np.sum(labels[v] == c)) for _, v in folds]
        assert max(per_fold) - min(per_fold) <= 1


# -- training -----------------------------------------------------------------

def two_class_data(n_per=20, length=64, seed=0):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, length)
    a = np.stack([np.stack([np.sin(6 * t), t]) + rng.normal(0, 0.1, (2, length)) for _ in range(n_per)])
    b = np.stack([np.stack([np.sign(np.sin(20 * t)), -t]) + rng.normal(0, 0.1, (2, length)) for _ in range(n_per)])
    return np.concatenate([a, b]), np.repeat([0, 1], n_per)


def small_spec(n_classes=2, length=64):
    return CnnSpec(n_classes=n_classes, conv_filters=(8, 4, 4), kernel_size=5, fc_hidden=16,
                   input_length=length)


def test_training_zero_lr_keeps_initialization():
    x, y = two_class_data()
    cfg = TrainConfig(lr=0.0, epochs=1, seed=5)
    model, _ = train(x, y, small_spec(), cfg)
    init = CnnModel.initialize(small_spec(), init_seed(5))
    for name, v in init.params.items():
        assert np.array_equal(v, model.params[name])


def test_training_is_deterministic():
    x, y = two_class_data()
    cfg = TrainConfig(lr=1e-3, epochs=3, seed=9)
    m1, c1 = train(x, y, small_spec(), cfg)
    m2, c2 = train(x, y, small_spec(), cfg)
    assert c1 == c2
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(m1.state(), m2.state()))


def test_training_separates_simulated_families():
    from energon.features import batch_features
    from energon.simulator import synthesize_trace

    traces = [synthesize_trace(registry_lookup(n), seed=s)
              for n in ("t5-small", "google/madlad400-3b-mt") for s in range(20)]
    x = np.stack([f.values for f in batch_features(traces)])
    y = np.repeat([0, 1], 20)
    model, curve = train(x, y, CnnSpec(n_classes=2), TrainConfig(lr=1e-3, epochs=50, seed=0))
    assert np.mean(model.predict(x) == y) == 1.0
    assert curve[-1] < curve[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_guard():
    x, y = two_class_data()
    x[0, 0, :] = 1e308
    with pytest.raises(TrainingError, match="diverged"):
        train(x, y, small_spec(), TrainConfig(lr=1e-3, epochs=1))


def test_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(k_folds=1)


# -- cross-validation ---------------------------------------------------------

def copies_dataset(per_class=10):
    traces = []
    rng = np.random.default_rng(0)
    for name in ("t5-small", "t5-base", "t5-large"):
        p = rng.uniform(5, 50, 840)
        temp = np.linspace(28, 30, 840) + rng.uniform(0, 1, 840)
        lab = registry_lookup(name).label()
        traces += [Trace(p, temp, TraceMeta(label=lab, seed=0)) for _ in range(per_class)]
    from energon.core import TraceDataset

    return TraceDataset(tuple(traces))


def test_cross_validate_identical_copies():
    d = copies_dataset()
    stage = build_taxonomy("t", [registry_lookup(n) for n in ("t5-small", "t5-base", "t5-large")],
                           lambda c: c.name, {}).root
    report = cross_validate(d, stage, None, TrainConfig(lr=1e-3, epochs=4, seed=0))
    assert report.fold_accuracies == [1.0] * 5
    assert np.array_equal(report.confusion, np.diag([10, 10, 10]))
    assert report.confusion.sum(axis=1).tolist() == [10, 10, 10]
    assert report.mean_accuracy == sum(report.fold_accuracies) / 5
    assert report.precision.tolist() == [1.0] * 3 and report.recall.tolist() == [1.0] * 3


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, rng):
    model = perturbed_model(tiny_spec(), rng, training=False)
    path = save_checkpoint(model, tmp_path / "m.ckpt", ["a", "b"], {"stage": "s"})
    back, classes, meta = load_checkpoint(path)
    assert classes == ["a", "b"] and meta == {"stage": "s"}
    assert back.spec == model.spec
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(model.state(), back.state()))
    x = rng.normal(size=(3, 2, 12))
    assert np.array_equal(predict_proba(model, x), predict_proba(back, x))


def test_checkpoint_layout(tmp_path, rng):
    model = perturbed_model(tiny_spec(), rng)
    raw = save_checkpoint(model, tmp_path / "m.ckpt").read_bytes()
    body = raw[raw.index(b"\n") + 1:-32]
    first_name, first = model.state()[0]
    assert first_name == "conv1.weight"
    assert np.array_equal(np.frombuffer(body[:first.size * 8], "<f8"), first.ravel())
    import hashlib

    assert hashlib.sha256(body).digest() == raw[-32:]


def test_checkpoint_detects_corruption(tmp_path, rng):
    path = save_checkpoint(perturbed_model(tiny_spec(), rng), tmp_path / "m.ckpt")
    raw = bytearray(path.read_bytes())
    raw[-40] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)
