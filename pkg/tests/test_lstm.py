import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fatigue_seq.errors import InputError
from fatigue_seq.lstm import (
    LstmModel, TrainConfig, class_weights, evaluate, load_checkpoint, lstm_cell_forward, predict_proba,
    save_checkpoint, sequence_forward, split_dataset, stream_infer, train,
)
from fatigue_seq.sequence import FeatureWindow, SequenceDataset, slide_dataset
from fatigue_seq.synthetic import Event, EventTimeline, ScenarioConfig, generate_timeline, render_frames
from fatigue_seq.features import extract_features

from oracles import scalar_lstm_step


def random_model(seed, H=5, scale=0.7):
    rng = np.random.default_rng(seed)
    m = LstmModel.init(H, seed=seed)
    for v in m.params.values():
        v[...] = rng.normal(scale=scale, size=v.shape)
    return m


def make_ds(X, y, groups=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    g = np.zeros(len(y), dtype=np.int64) if groups is None else np.asarray(groups)
    return SequenceDataset(X, y, g, X.shape[2], 0, 1, 30.0, np.arange(len(y)))


# cell


def test_zero_model_zero_state():
    m = LstmModel.zeros(4)
    h, c = lstm_cell_forward(np.ones(4), np.zeros(4), np.zeros(4), m)
    assert np.all(h == 0) and np.all(c == 0)


def test_saturated_gates_keep_memory():
    m = LstmModel.zeros(3)
    m.params["b_f"][:] = 50.0
    m.params["b_i"][:] = -50.0
    c = np.array([0.3, -1.2, 2.0])
    _, c2 = lstm_cell_forward(np.array([1.0, 0.0, 1.0, 0.2]), np.array([0.1, 0.2, 0.3]), c, m)
    np.testing.assert_array_equal(c2, c)


@pytest.mark.parametrize("seed", range(10))
def test_cell_matches_scalar_oracle(seed):
    m = random_model(seed)
    rng = np.random.default_rng(100 + seed)
    x, h, c = rng.normal(size=4), rng.normal(size=5), rng.normal(size=5)
    h2, c2 = lstm_cell_forward(x, h, c, m)
    P = m.params
    h_ref, c_ref = scalar_lstm_step(x, h, c, P["W_i"], P["W_f"], P["W_o"], P["W_g"],
                                    P["b_i"], P["b_f"], P["b_o"], P["b_g"])
    np.testing.assert_allclose(h2, h_ref, atol=1e-12)
    np.testing.assert_allclose(c2, c_ref, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 20))
def test_hidden_state_bounded(seed, scale):
    m = random_model(seed % 1000, scale=scale)
    rng = np.random.default_rng(seed)
    h, c = np.zeros(5), np.zeros(5)
    for _ in range(10):
        h, c = lstm_cell_forward(rng.normal(scale=scale, size=4), h, c, m)
        assert np.all(np.abs(h) <= 1.0)


def test_cell_shape_mismatch_rejected():
    with pytest.raises(InputError):
        lstm_cell_forward(np.zeros(3), np.zeros(5), np.zeros(5), random_model(0))


# sequences


def test_sequence_matches_cell_unroll():
    m = random_model(1)
    X = np.random.default_rng(2).normal(size=(4, 12))
    h, c = np.zeros(5), np.zeros(5)
    for t in range(12):
        h, c = lstm_cell_forward(X[:, t], h, c, m)
    logit = h @ m.params["w_head"] + m.params["b_head"][0]
    assert sequence_forward(X, m) == pytest.approx(1 / (1 + np.exp(-logit)), abs=1e-12)


def test_sequence_output_range_and_bias():
    X = np.random.default_rng(3).normal(size=(4, 8))
    assert 0.0 < sequence_forward(X, random_model(4)) < 1.0
    z = LstmModel.zeros(6)
    assert sequence_forward(X, z) == 0.5
    z.params["b_head"][0] = 1.3
    assert sequence_forward(X, z) == pytest.approx(1 / (1 + np.exp(-1.3)), abs=1e-15)


def test_sequence_forward_deterministic():
    m = random_model(5)
    X = np.random.default_rng(6).normal(size=(4, 20))
    p = sequence_forward(X, m)
    assert sequence_forward(X.copy(), m) == p
    batch = predict_proba(np.stack([X, X]), m)
    assert batch[0] == batch[1]


def test_empty_matrix_rejected():
    with pytest.raises(InputError):
        sequence_forward(np.zeros((4, 0)), random_model(0))
    with pytest.raises(InputError):
        sequence_forward(np.zeros((3, 5)), random_model(0))


# training


def toy_dataset(n=256, L=10, seed=0):
    """Fatigue samples contain one column with both eyes closed."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, 4, L))
    X[:, 0:2] = 1.0
    X[:, 2] = rng.uniform(0.02, 0.15, size=(n, L))
    X[:, 3] = rng.uniform(-0.1, 0.1, size=(n, L))
    y = (np.arange(n) % 2).astype(np.int64)
    cols = rng.integers(0, L, size=n)
    for i in np.nonzero(y)[0]:
        X[i, 0:2, cols[i]] = 0.0
    return make_ds(X, y)


def test_train_separable_toy():
    ds = toy_dataset()
    _, hist = train(ds, TrainConfig(epochs=50, hidden_size=8, seed=0))
    assert min(h["train_loss"] for h in hist[-5:]) < 0.1


def test_train_zero_epochs_unchanged():
    ds = toy_dataset(64)
    m0 = LstmModel.init(8, seed=3)
    m, hist = train(ds, TrainConfig(epochs=0, hidden_size=8), model=m0)
    assert hist == []
    for k in m0.params:
        np.testing.assert_array_equal(m.params[k], m0.params[k])


def test_train_zero_lr_unchanged():
    ds = toy_dataset(64)
    m0 = LstmModel.init(8, seed=3)
    m, _ = train(ds, TrainConfig(epochs=3, learning_rate=0.0, hidden_size=8), model=m0)
    for k in m0.params:
        np.testing.assert_array_equal(m.params[k], m0.params[k])


def test_train_deterministic_checkpoints(tmp_path):
    ds = toy_dataset(96)
    for name in ("a.json", "b.json"):
        m, _ = train(ds, TrainConfig(epochs=3, hidden_size=8, seed=11))
        save_checkpoint(m, tmp_path / name)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_train_single_class_rejected():
    ds = toy_dataset(32)
    with pytest.raises(InputError):
        train(ds.subset(ds.y == 0), TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(InputError):
        TrainConfig(val_fraction=1.0)
    with pytest.raises(InputError):
        TrainConfig(batch_size=0)


def test_class_weights_mean_one():
    y = np.array([1] * 10 + [0] * 30)
    w = class_weights(y)
    assert w.mean() == pytest.approx(1.0)
    assert w[y == 1].sum() == pytest.approx(w[y == 0].sum())


def test_split_keeps_groups_apart():
    X = np.zeros((50, 4, 3))
    ds = make_ds(X, np.arange(50) % 2, groups=np.arange(50) // 10)
    tr, va = split_dataset(ds, 0.2, seed=0)
    assert set(tr.groups).isdisjoint(va.groups)
    assert len(tr) + len(va) == 50


def test_split_single_stream_drops_overlap():
    n = 40
    ds = SequenceDataset(np.zeros((n, 4, 5)), np.arange(n) % 2, np.zeros(n, dtype=np.int64), 60, 0, 30, 30.0,
                         np.arange(n) * 30)
    tr, va = split_dataset(ds, 0.25)
    assert tr.starts.max() + 60 <= va.starts.min()


# evaluation


def test_evaluate_constant_models():
    ds = make_ds(np.zeros((8, 4, 3)), np.ones(8))
    assert evaluate(lambda X: np.full(len(X), 0.9), ds)["accuracy"] == 1.0
    ds = make_ds(np.zeros((8, 4, 3)), [1, 0, 0, 0, 1, 0, 0, 0])
    ev = evaluate(lambda X: np.full(len(X), 0.1), ds)
    assert ev["accuracy"] == 0.75
    assert (ev["true_negative"], ev["false_negative"]) == (6, 2)


# streaming


def test_stream_infer_warmup_and_equivalence():
    m = random_model(7)
    rng = np.random.default_rng(8)
    vectors = rng.normal(size=(50, 4))
    out = list(stream_infer(m, vectors, window_len=20, skip=1))
    assert out[:19] == [None] * 19
    w = FeatureWindow(20)
    for t, v in enumerate(vectors):
        w.push(v)
        if w.is_full:
            assert out[t] == sequence_forward(w.as_matrix(1), m)


def test_stream_infer_constant_input_is_constant():
    m = random_model(9)
    out = list(stream_infer(m, np.tile([1.0, 1.0, 0.05, 0.02], (40, 1)), window_len=10, skip=0))
    assert len(set(out[9:])) == 1


def test_stream_infer_matches_training_sample():
    m = random_model(10)
    stream = np.random.default_rng(11).normal(size=(30, 4))
    s = slide_dataset(stream, np.zeros(30), 30, 2, 30)[0]
    assert list(stream_infer(m, stream, 30, 2))[-1] == sequence_forward(s.matrix, m)


@pytest.mark.slow
def test_stream_probability_crosses_after_fatigue_onset(trained_n60):
    model = trained_n60["model"]
    fps, onset, N = 30.0, 20.0, 60
    cfg = ScenarioConfig(duration=40.0, fatigue_prior=0.0, seed=41)
    alert = [e for e in generate_timeline(cfg).events if e.end < onset]
    events = alert + [Event("yawn", onset, 4.0, True, {"peak": 0.85}),
                      Event("long_closure", onset + 4.3, 2.5, True),
                      Event("yawn", onset + 7.1, 4.0, True, {"peak": 0.8}),
                      Event("long_closure", onset + 11.4, 2.0, True)]
    t = np.arange(cfg.n_frames) / fps
    labels = ((t >= onset) & (t < onset + 13.4)).astype(np.int64)
    stream = render_frames(EventTimeline(events, labels, cfg.duration, fps), cfg)
    probs = list(stream_infer(model, extract_features(stream.points, stream.pitch), N, 1))
    start = int(onset * fps)
    assert all(p < 0.5 for p in probs[N - 1:start])
    assert any(p > 0.5 for p in probs[start:start + N])


# checkpoints


def test_checkpoint_round_trip_bit_exact(tmp_path):
    m = random_model(12, H=7)
    m.window_len, m.skip = 60, 1
    for v in m.params.values():
        v *= np.pi
    save_checkpoint(m, tmp_path / "m.json")
    back = load_checkpoint(tmp_path / "m.json")
    assert (back.hidden_size, back.window_len, back.skip) == (7, 60, 1)
    for k, v in m.params.items():
        assert back.params[k].tobytes() == v.tobytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"format": "other"}))
    with pytest.raises(InputError):
        load_checkpoint(p)


def test_checkpoint_rejects_bad_shapes(tmp_path):
    m = random_model(13)
    save_checkpoint(m, tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["hyperparameters"]["hidden_size"] = 6
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(InputError):
        load_checkpoint(tmp_path / "m.json")
