import numpy as np
import pytest

from detmon.features import NormStats, WindowFeature
from detmon.tensornet import (
    CascadeConfig,
    MonitorModel,
    cascade_forward,
    coral_encode,
    coral_loss,
    coral_loss_grad,
    init_params,
    load_model,
    predict,
    rank_probabilities,
    save_model,
    train_monitor,
)
from detmon.tensornet.io import ModelFileError
from detmon.tensornet.model import (
    _backward,
    _forward,
    class_from_rank_probs,
    expected_param_shapes,
    ordered_biases,
)

from oracles import finite_difference_grad

TOY_SHAPES = ((8, 28, 28), (16, 14, 14), (32, 7, 7))


def make_config(**kwargs):
    defaults = dict(window_size=10, layer_shapes=TOY_SHAPES)
    defaults.update(kwargs)
    return CascadeConfig(**defaults)


def identity_stats(p):
    return NormStats((0.0,) * p, (1.0,) * p)


def random_wf(rng, config):
    return WindowFeature(
        tuple(
            rng.standard_normal((config.window_size, h, w)).astype(np.float32)
            for _, h, w in config.layer_shapes
        )
    )


def make_model(config, seed=0, randomize=False):
    rng = np.random.default_rng(seed)
    params = init_params(config, rng)
    if randomize:
        for name in params:
            params[name] = rng.standard_normal(params[name].shape).astype(np.float32)
    return MonitorModel(config, params, identity_stats(config.num_layers), seed)


# --- architecture shapes ------------------------------------------------------------


def test_shape_walkthrough_pooled_20_logits_4():
    config = make_config(filter_out_channels=10)
    assert config.pooled_length() == 20
    model = make_model(config)
    wf = random_wf(np.random.default_rng(1), config)
    logits = cascade_forward(wf, model)
    assert logits.shape == (4,)
    assert expected_param_shapes(config)["dense0.weight"] == (64, 20)


def test_single_layer_degenerate_cascade():
    config = make_config(layer_shapes=((4, 6, 6),))
    assert config.pooled_length() == config.window_size
    model = make_model(config)
    wf = random_wf(np.random.default_rng(2), config)
    assert cascade_forward(wf, model).shape == (4,)


def test_zero_head_logits_equal_biases():
    config = make_config()
    model = make_model(config)  # default init: zero head
    wf = random_wf(np.random.default_rng(3), config)
    logits = cascade_forward(wf, model)
    np.testing.assert_array_equal(logits, model.biases().astype(np.float64))


def test_input_shape_mismatch_rejected():
    config = make_config()
    model = make_model(config)
    bad = WindowFeature(
        (
            np.zeros((10, 28, 28), np.float32),
            np.zeros((10, 14, 14), np.float32),
            np.zeros((10, 3, 3), np.float32),
        )
    )
    with pytest.raises(ValueError, match="layer 2"):
        cascade_forward(bad, model)


def test_non_integer_spatial_ratio_rejected():
    with pytest.raises(ValueError, match="ratio"):
        make_config(layer_shapes=((1, 28, 28), (1, 13, 13)))


def test_pairwise_mode_runs():
    config = make_config(cascade_mode="pairwise")
    model = make_model(config, randomize=True)
    wf = random_wf(np.random.default_rng(4), config)
    assert cascade_forward(wf, model).shape == (4,)


def test_permuting_identical_frames_is_invariant():
    config = make_config()
    model = make_model(config, randomize=True)
    rng = np.random.default_rng(5)
    wf = random_wf(rng, config)
    tensors = []
    for t in wf.tensors:
        t = t.copy()
        t[3] = t[0]  # make two window slices identical, then swap them
        tensors.append(t)
    wf_a = WindowFeature(tuple(tensors))
    swapped = []
    for t in tensors:
        t = t.copy()
        t[[0, 3]] = t[[3, 0]]
        swapped.append(t)
    wf_b = WindowFeature(tuple(swapped))
    np.testing.assert_array_equal(cascade_forward(wf_a, model), cascade_forward(wf_b, model))


# --- ordinal head -------------------------------------------------------------------


def test_coral_encode_examples():
    np.testing.assert_array_equal(coral_encode(3, 5), [1, 1, 1, 0])
    np.testing.assert_array_equal(coral_encode(0, 5), [0, 0, 0, 0])
    np.testing.assert_array_equal(coral_encode(4, 5), [1, 1, 1, 1])


@pytest.mark.parametrize("label", range(5))
def test_coral_encode_sums_to_label(label):
    assert coral_encode(label, 5).sum() == label


def test_coral_encode_out_of_range():
    with pytest.raises(ValueError):
        coral_encode(5, 5)


def test_coral_loss_zero_logits_is_ln2():
    loss = coral_loss(np.zeros(4), coral_encode(0, 5))
    assert loss == pytest.approx(np.log(2.0), rel=1e-12)


def test_coral_loss_saturated_correct_is_tiny():
    logits = np.array([50.0, 50.0, 50.0, -50.0])
    assert coral_loss(logits, coral_encode(3, 5)) < 1e-20


def test_coral_loss_gradient_matches_fd():
    rng = np.random.default_rng(6)
    logits = rng.standard_normal(4)
    encoded = coral_encode(2, 5)
    grad = coral_loss_grad(logits, encoded)
    fd = finite_difference_grad(lambda z: coral_loss(z, encoded), logits)
    assert np.abs(grad - fd).max() < 1e-8


def test_ordered_biases_monotone_for_random_params():
    rng = np.random.default_rng(7)
    for _ in range(200):
        params = {
            "coral.bias1": np.asarray(rng.standard_normal() * 10, dtype=np.float32),
            "coral.delta": (rng.standard_normal(3) * 10).astype(np.float32),
        }
        b = ordered_biases(params)
        assert np.all(np.diff(b) <= 0)


def test_rank_probabilities_monotone_random_models():
    config = make_config(layer_shapes=((2, 4, 4), (2, 2, 2)), window_size=3, hidden_dims=(8,))
    rng = np.random.default_rng(8)
    for _ in range(50):
        model = make_model(config, seed=int(rng.integers(1 << 30)), randomize=True)
        wf = random_wf(rng, config)
        probs = rank_probabilities(wf, model)
        assert np.all(np.diff(probs) <= 0)


# --- prediction rule ------------------------------------------------------------------


def test_class_counting_rule():
    probs = np.array([0.9, 0.7, 0.6, 0.2])
    assert class_from_rank_probs(probs, 0.5) == 3
    assert class_from_rank_probs(probs, 0.65) == 2
    assert class_from_rank_probs(probs, 0.0) == 4


def test_predict_class_non_increasing_in_threshold():
    config = make_config(layer_shapes=((2, 4, 4),), window_size=3, hidden_dims=(8,))
    model = make_model(config, randomize=True)
    wf = random_wf(np.random.default_rng(9), config)
    classes = [predict(wf, model, t)[0] for t in np.linspace(0, 1, 21)]
    assert all(a >= b for a, b in zip(classes, classes[1:]))


# --- full-model gradient ---------------------------------------------------------------


def test_cascade_gradients_match_finite_differences():
    config = CascadeConfig(
        window_size=2,
        layer_shapes=((1, 4, 4), (1, 2, 2)),
        filter_out_channels=2,
        hidden_dims=(3,),
        num_classes=4,
    )
    rng = np.random.default_rng(10)
    params = {
        name: rng.standard_normal(shape) * 0.5
        for name, shape in expected_param_shapes(config).items()
    }
    tensors = [
        rng.standard_normal((2, config.window_size, h, w)) for _, h, w in config.layer_shapes
    ]
    encoded = np.stack([coral_encode(1, 4), coral_encode(3, 4)])

    def loss_with(params_over):
        logits, _ = _forward(tensors, params_over, config)
        return float(
            np.mean(np.logaddexp(0, logits) - encoded * logits)
        )

    logits, cache = _forward(tensors, params, config)
    from detmon.tensornet.layers import sigmoid

    grad_logits = (sigmoid(logits) - encoded) / logits.size
    grads = _backward(grad_logits, cache, params, config)
    for name in params:
        def f(value, name=name):
            trial = dict(params)
            trial[name] = value
            return loss_with(trial)

        fd = finite_difference_grad(f, params[name])
        scale = max(np.abs(grads[name]).max(initial=0), np.abs(fd).max(initial=0), 1e-8)
        assert np.abs(grads[name] - fd).max(initial=0) / scale < 1e-6, name


# --- training ----------------------------------------------------------------------------


def separable_dataset(rng, n=64):
    # Feature level directly encodes the class: trivially separable.
    config = CascadeConfig(
        window_size=2, layer_shapes=((1, 4, 4), (1, 2, 2)), hidden_dims=(8,), num_classes=5
    )
    data = []
    for i in range(n):
        label = i % 5
        base = float(label - 2)
        wf = WindowFeature(
            tuple(
                (base + 0.05 * rng.standard_normal((2, h, w))).astype(np.float32)
                for _, h, w in config.layer_shapes
            )
        )
        data.append((wf, label))
    return config, data


def test_training_overfits_separable_fixture():
    rng = np.random.default_rng(11)
    config, data = separable_dataset(rng)
    # Overfit sanity run: a hotter learning rate to converge in 200 epochs.
    model, losses = train_monitor(data, config, seed=1, epochs=200, learning_rate=0.01)
    assert losses[0] == pytest.approx(np.log(2.0), abs=0.01)
    assert losses[-1] < losses[0]
    predictions = [predict(wf, model)[0] for wf, _ in data]
    zoe = np.mean([p != y for p, (_, y) in zip(predictions, data)])
    assert zoe == 0.0


def test_training_is_deterministic():
    rng = np.random.default_rng(12)
    config, data = separable_dataset(rng, n=16)
    model_a, losses_a = train_monitor(data, config, seed=7, epochs=3)
    model_b, losses_b = train_monitor(data, config, seed=7, epochs=3)
    assert losses_a == losses_b
    assert save_model(model_a) == save_model(model_b)


def test_training_rejects_empty_dataset():
    config = make_config()
    with pytest.raises(ValueError, match="empty"):
        train_monitor([], config, seed=0)


# --- model files ---------------------------------------------------------------------


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    config, data = separable_dataset(rng, n=16)
    model, _ = train_monitor(data, config, seed=3, epochs=2)
    path = str(tmp_path / "model.dmon")
    blob = save_model(model, path)
    assert open(path, "rb").read() == blob
    loaded = load_model(path)
    wf = data[0][0]
    np.testing.assert_array_equal(
        rank_probabilities(wf, loaded), rank_probabilities(wf, model)
    )
    assert save_model(loaded) == blob


def test_load_rejects_bad_magic():
    with pytest.raises(ModelFileError, match="magic"):
        load_model(b"NOTMODEL" + b"\x00" * 32)


def test_load_rejects_shape_tampering():
    rng = np.random.default_rng(14)
    config, data = separable_dataset(rng, n=8)
    model, _ = train_monitor(data, config, seed=3, epochs=1)
    model.params["coral.weight"] = np.zeros(3, dtype=np.float32)  # wrong length
    blob = save_model(model)
    with pytest.raises(ModelFileError, match="coral.weight"):
        load_model(blob)
