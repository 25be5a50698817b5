import numpy as np
import pytest

from prosoda import nn
from prosoda.emotion import EMBED_DIM, build_network, EmotionConfig, EmotionModel, accuracy, classify, embed, train_emotion

FAST = EmotionConfig(hidden=8, epochs=15, batch_size=4, lr=5e-3)


def toy_set(n_per_class, seed, classes=(0, 1, 2, 3), offsets=None, dim=6):
    """Noise sequences whose mean level and slope depend on the class."""
    rng = np.random.default_rng(seed)
    offsets = offsets or {c: c for c in classes}
    out = []
    for c in classes:
        for _ in range(n_per_class):
            t = int(rng.integers(20, 40))
            ramp = np.linspace(0, 1, t)[:, None] * (offsets[c] - 1.5)
            out.append((rng.standard_normal((t, dim)) + offsets[c] + ramp, c, "xx"))
    return out


@pytest.fixture(scope="module")
def model():
    return train_emotion(toy_set(10, 0), FAST, eval_set=toy_set(5, 1))


def test_separable_classes_learned(model):
    assert model.meta["eval_accuracy"] >= 0.9
    assert model.meta["class_balance"] == {"neutral": 10, "angry": 10, "happy": 10, "sad": 10}
    assert len(model.meta["loss_curve"]) == FAST.epochs


def test_identical_classes_near_chance():
    data = toy_set(12, 2, classes=(0, 1), offsets={0: 1.0, 1: 1.0})
    held = toy_set(30, 3, classes=(0, 1), offsets={0: 1.0, 1: 1.0})
    m = train_emotion(data, FAST)
    assert 0.3 <= accuracy(m, held) <= 0.7


def test_training_deterministic(model):
    again = train_emotion(toy_set(10, 0), FAST, eval_set=toy_set(5, 1))
    assert again.meta == model.meta
    assert again.to_bytes() == model.to_bytes()


def test_training_errors():
    with pytest.raises(ValueError):
        train_emotion([], FAST)
    with pytest.raises(ValueError):
        train_emotion(toy_set(3, 0, classes=(2,)), FAST)


def test_classify_probabilities(model):
    for f, _, _ in toy_set(2, 9):
        p = classify(model, f)
        assert p.shape == (4,)
        assert abs(p.sum() - 1.0) <= 1e-9


def test_argmax_matches_reported_training_accuracy(model):
    data = toy_set(10, 0)
    hits = np.mean([np.argmax(classify(model, f)) == c for f, c, _ in data])
    assert hits >= model.meta["train_accuracy"]


def test_reversal_changes_output(model):
    f = toy_set(1, 4)[2][0]
    assert not np.array_equal(classify(model, f), classify(model, f[::-1]))


def test_classify_errors(model):
    with pytest.raises(ValueError):
        classify(model, np.zeros((10, 3)))
    with pytest.raises(ValueError):
        embed(model, np.zeros((0, 6)))


def test_embedding_dim_and_purity(model):
    for t in (1, 5, 200):
        e = embed(model, np.ones((t, 6)))
        assert e.shape == (EMBED_DIM,) and np.all(np.isfinite(e))
    f = toy_set(1, 5)[0][0]
    assert np.array_equal(embed(model, f), embed(model, f))


def test_embedding_pooling_identity():
    # kernel-1 convolutions make bottleneck rows time-invariant on constant input
    cfg = EmotionConfig(hidden=8, kernel=1, seed=3)
    m = EmotionModel(build_network(6, cfg), np.zeros(6), np.ones(6))
    f = np.full((7, 6), 0.7)
    rows = nn.forward(m.network, f, stop=m.pool_layer)
    assert np.array_equal(rows, np.broadcast_to(rows[0], rows.shape))
    np.testing.assert_allclose(embed(m, f), rows[0], rtol=1e-15)
    np.testing.assert_allclose(embed(m, np.concatenate([f, f])), embed(m, f), rtol=1e-15)


def test_serialization_round_trip(model):
    back = EmotionModel.from_bytes(model.to_bytes())
    f = toy_set(1, 6)[1][0]
    assert np.array_equal(embed(back, f), embed(model, f))
    assert back.meta == model.meta and back.labels == model.labels
