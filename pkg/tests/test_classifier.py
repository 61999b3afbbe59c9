import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paramball import toyworld
from paramball.classifier import (
    INJECT_PER_EPOCH,
    RANDOM_LIGHT_RANGE,
    ToyClassifier,
    TrainConfig,
    accuracy,
    augment_images,
    softmax,
    train_toy,
)

SHAPE = (6, 5, 3)


def make(seed=0, hidden=7, k=4, scale=2.0):
    return ToyClassifier.init(SHAPE, hidden, k, np.random.default_rng(seed), scale=scale)


def test_zero_weights_give_uniform():
    clf = ToyClassifier.zeros(SHAPE, 5, 4)
    np.testing.assert_array_equal(clf.forward(np.random.default_rng(0).uniform(size=SHAPE)), 0.25)


@given(st.integers(0, 2**31 - 1))
def test_softmax_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    clf = make(seed % 7, scale=rng.uniform(0.1, 20))
    p = clf.forward(rng.uniform(-1, 2, size=(3,) + SHAPE))
    assert p.shape == (3, 4)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(p >= 0)


@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_softmax_shift_invariance(seed, c):
    z = np.random.default_rng(seed).normal(size=6)
    np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-15)


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        make().forward(np.zeros((5, 6, 3)))
    with pytest.raises(ValueError):
        make().input_grad(np.zeros((6, 5, 4)), 0)


def test_bad_weights_rejected():
    clf = make()
    W1, b1, W2, b2 = clf.params()
    with pytest.raises(ValueError):
        ToyClassifier(W1, b1, W2[:, :-1], b2, SHAPE)
    bad = W1.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        ToyClassifier(bad, b1, W2, b2, SHAPE)


def test_weights_are_read_only():
    with pytest.raises(ValueError):
        make().W1[0, 0] = 1.0


@pytest.mark.parametrize("target", [None, 2])
def test_input_grad_matches_finite_differences(target):
    rng = np.random.default_rng(11)
    clf = make(3)
    img = rng.uniform(size=SHAPE)
    label = 1
    g = clf.input_grad(img, label, target)
    h = 1e-5

    def C(im):
        p = clf.forward(im)
        return np.log(p[label]) - (0.0 if target is None else np.log(p[target]))

    flat = rng.choice(img.size, size=50, replace=False) if img.size >= 50 else np.arange(img.size)
    worst = 0.0
    for i in flat:
        e = np.zeros(img.size)
        e[i] = h
        e = e.reshape(SHAPE)
        fd = (C(img + e) - C(img - e)) / (2 * h)
        worst = max(worst, abs(fd - g.flat[i]) / max(abs(fd), abs(g.flat[i]), 1e-8))
    assert worst <= 1e-5


def test_same_label_and_target_gives_zero_gradient():
    img = np.random.default_rng(0).uniform(size=SHAPE)
    np.testing.assert_array_equal(make().input_grad(img, 2, 2), 0.0)


def test_descending_the_cost_lowers_true_label_confidence():
    clf = toyworld.bundled_classifier()
    for s in toyworld.attack_suite(clf, per_class=2):
        img = s.render()
        p0 = clf.forward(img)[s.label]
        g = clf.input_grad(img, s.label)
        p1 = clf.forward(img - 1e-3 * g / np.abs(g).max())[s.label]
        assert p1 < p0


def test_zero_epochs_leave_classifier_unchanged():
    clf = make()
    X = np.random.default_rng(0).uniform(size=(4,) + SHAPE)
    out, history = train_toy(clf, X, [0, 1, 2, 3], 0)
    assert history == []
    for a, b in zip(out.params(), clf.params()):
        np.testing.assert_array_equal(a, b)


def test_training_reduces_loss():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(20,) + SHAPE)
    y = rng.integers(0, 4, size=20)
    out, history = train_toy(make(), X, y, 30, config=TrainConfig(lr=0.5, batch=8))
    assert history[-1]["loss"] < history[0]["loss"]
    assert accuracy(out, X, y) == history[-1]["train_acc"]


def test_training_errors():
    with pytest.raises(ValueError):
        train_toy(make(), np.zeros((0,) + SHAPE), [], 1)
    X = np.zeros((2,) + SHAPE)
    with pytest.raises(ValueError):
        train_toy(make(), X, [0, 1], 1, augmentation="random")
    with pytest.raises(ValueError):
        train_toy(make(), X, [0, 1], 1, augmentation="mixup")


@pytest.fixture(scope="module")
def small_bank():
    return toyworld.scene_bank(detail=2, backgrounds=(0.5,))[::5]


def test_random_mode_offsets_are_uniform_in_half_unit(small_bank):
    clf = toyworld.bundled_classifier()
    rng = np.random.default_rng(0)
    X, y, lights = augment_images(clf, small_bank, "random", 40, rng)
    assert RANDOM_LIGHT_RANGE == 0.5
    offsets = np.array([U - small_bank[0].lighting for U in lights])
    assert np.abs(offsets).max() <= 0.5
    # spread over the whole interval, not a narrower one
    assert offsets.min() < -0.45 and offsets.max() > 0.45
    assert X.shape == (40,) + clf.image_shape and len(y) == 40


def test_adversarial_mode_injects_default_count(small_bank, monkeypatch):
    from paramball import classifier

    assert INJECT_PER_EPOCH == 100 and TrainConfig().inject == 100
    counts = []
    real = classifier.augment_images

    def spy(clf, bank, mode, count, rng, config=None):
        counts.append((mode, count))
        return real(clf, bank, "random", 2, rng, config)

    monkeypatch.setattr(classifier, "augment_images", spy)
    X, y = toyworld.render_bank(small_bank)
    clf = ToyClassifier.init(X.shape[1:], 4, 4, np.random.default_rng(0))
    train_toy(clf, X, y, 3, "adversarial", small_bank)
    assert counts == [("adversarial", 100)] * 3


def test_adversarial_images_stay_in_lighting_ball(small_bank):
    clf = toyworld.bundled_classifier()
    cfg = TrainConfig(adv_iter=3)
    _, _, lights = augment_images(clf, small_bank, "adversarial", 3, np.random.default_rng(2), cfg)
    for U in lights:
        assert np.abs(U - small_bank[0].lighting).max() <= cfg.adv_eps + 1e-12


def test_save_load_round_trip(tmp_path):
    clf = make()
    clf.save(tmp_path / "c.npz")
    back = ToyClassifier.load(tmp_path / "c.npz")
    assert back.image_shape == SHAPE
    for a, b in zip(back.params(), clf.params()):
        np.testing.assert_array_equal(a, b)
