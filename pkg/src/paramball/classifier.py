"""A small differentiable image classifier and its training loop.

The toy classifier is a one-hidden-layer perceptron on the flattened linear
image::

    x = I.ravel() - 0.5
    h = tanh(W1 x + b1)
    f = softmax(W2 h + b2)

tanh keeps the map smooth so finite differences agree with the analytic
input gradient everywhere.  It stands in for a real network: attacks only
need ``f`` and ``dC/dI``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .adversary import AttackConfig, cost_logit_grad, run_attack

log = logging.getLogger(__name__)

INPUT_OFFSET = 0.5
AUGMENTATIONS = ("none", "random", "adversarial")
# coefficient offset range for random augmentation, images injected per epoch
RANDOM_LIGHT_RANGE = 0.5
INJECT_PER_EPOCH = 100


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class ToyClassifier:
    """Weights ``W1`` (hidden, D), ``b1`` (hidden,), ``W2`` (K, hidden), ``b2`` (K,)."""

    def __init__(self, W1, b1, W2, b2, image_shape):
        self.image_shape = tuple(int(s) for s in image_shape)
        self.W1 = np.array(W1, dtype=float)
        self.b1 = np.array(b1, dtype=float)
        self.W2 = np.array(W2, dtype=float)
        self.b2 = np.array(b2, dtype=float)
        d = int(np.prod(self.image_shape))
        hidden = len(self.b1)
        if self.W1.shape != (hidden, d) or self.W2.shape != (len(self.b2), hidden):
            raise ValueError("inconsistent weight shapes")
        if len(self.image_shape) != 3 or self.image_shape[2] != 3:
            raise ValueError("image_shape must be (H, W, 3)")
        for w in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(w)):
                raise ValueError("non-finite weights")
            w.setflags(write=False)

    @classmethod
    def init(cls, image_shape, hidden, n_classes, rng, scale=1.0):
        d = int(np.prod(image_shape))
        W1 = rng.normal(0.0, scale / np.sqrt(d), size=(hidden, d))
        W2 = rng.normal(0.0, scale / np.sqrt(hidden), size=(n_classes, hidden))
        return cls(W1, np.zeros(hidden), W2, np.zeros(n_classes), image_shape)

    @classmethod
    def zeros(cls, image_shape, hidden, n_classes):
        d = int(np.prod(image_shape))
        return cls(np.zeros((hidden, d)), np.zeros(hidden), np.zeros((n_classes, hidden)), np.zeros(n_classes), image_shape)

    @property
    def n_classes(self):
        return len(self.b2)

    @property
    def hidden(self):
        return len(self.b1)

    def params(self):
        return self.W1, self.b1, self.W2, self.b2

    def with_params(self, W1, b1, W2, b2):
        return ToyClassifier(W1, b1, W2, b2, self.image_shape)

    def _inputs(self, images):
        images = np.asarray(images, dtype=float)
        if images.shape[-3:] != self.image_shape:
            raise ValueError(f"image shape {images.shape[-3:]} does not match classifier input {self.image_shape}")
        return images.reshape(images.shape[:-3] + (-1,)) - INPUT_OFFSET

    def _hidden(self, x):
        return np.tanh(x @ self.W1.T + self.b1)

    def logits(self, images):
        return self._hidden(self._inputs(images)) @ self.W2.T + self.b2

    def forward(self, images):
        """Class distribution for one image (K,) or a batch (N, K)."""
        return softmax(self.logits(images))

    def predict(self, images):
        return np.argmax(self.logits(images), axis=-1)

    def input_grad(self, image, label, target=None):
        """dC/dI of ``C = log f_label - log f_target`` (target term optional)."""
        return self.evaluate(image, label, target)[1]

    def evaluate(self, image, label, target=None):
        """Probabilities and dC/dI; the classifier-handle interface used by attacks."""
        x = self._inputs(image)
        h = self._hidden(x)
        probs = softmax(h @ self.W2.T + self.b2)
        gz = cost_logit_grad(probs, label, target)
        gh = (gz @ self.W2) * (1.0 - h * h)
        return probs, (gh @ self.W1).reshape(self.image_shape)

    def save(self, path):
        np.savez(path, W1=self.W1, b1=self.b1, W2=self.W2, b2=self.b2, image_shape=np.array(self.image_shape))

    @classmethod
    def load(cls, path):
        with np.load(path) as d:
            return cls(d["W1"], d["b1"], d["W2"], d["b2"], tuple(d["image_shape"]))


def _ce_grads(clf, X, y, weight_decay):
    """Mean cross-entropy and its parameter gradients on a batch."""
    x = clf._inputs(X)
    h = clf._hidden(x)
    p = softmax(h @ clf.W2.T + clf.b2)
    n = len(y)
    loss = -np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-12)))
    gz = p.copy()
    gz[np.arange(n), y] -= 1.0
    gz /= n
    gW2 = gz.T @ h + weight_decay * clf.W2
    gb2 = gz.sum(axis=0)
    ga = (gz @ clf.W2) * (1.0 - h * h)
    gW1 = ga.T @ x + weight_decay * clf.W1
    gb1 = ga.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


@dataclass
class TrainConfig:
    """Toy-model hyperparameters; tuned for the bundled scene bank, not taken from elsewhere."""

    lr: float = 0.1
    batch: int = 32
    weight_decay: float = 1e-4
    inject: int = INJECT_PER_EPOCH
    random_range: float = RANDOM_LIGHT_RANGE
    adv_eps: float = RANDOM_LIGHT_RANGE
    adv_gamma: float = 0.05
    adv_iter: int = 30


def augment_images(clf, bank, mode, count, rng, config=None):
    """Render ``count`` bank scenes under random or adversarial lighting.

    Returns images, labels and the lighting used for each image.
    """
    config = config or TrainConfig()
    if not bank:
        raise ValueError("augmentation needs a non-empty scene bank")
    picks = rng.integers(0, len(bank), size=count)
    images, labels, lights = [], [], []
    for i in picks:
        scene = bank[i]
        U0 = scene.lighting
        if mode == "random":
            U = U0 + rng.uniform(-config.random_range, config.random_range, size=U0.shape)
        elif mode == "adversarial":
            cfg = AttackConfig(scene.label, None, config.adv_gamma, config.adv_iter, config.adv_eps, "lighting")
            U = run_attack(scene, clf, cfg).final_params
        else:
            raise ValueError(f"unknown augmentation mode {mode!r}")
        images.append(scene.render(0, U))
        labels.append(scene.label)
        lights.append(U)
    return np.array(images), np.array(labels, dtype=np.int64), lights


def train_toy(clf, images, labels, epochs, augmentation="none", bank=None, rng=None, config=None, holdout=None):
    """Minibatch gradient descent on cross-entropy.

    ``augmentation`` is none, random or adversarial; the two augmented modes
    regenerate ``config.inject`` images from ``bank`` every epoch, adversarial
    ones against the current weights.  Returns the trained copy and a history
    of per-epoch (loss, train accuracy[, holdout accuracy]).
    """
    if augmentation not in AUGMENTATIONS:
        raise ValueError(f"augmentation must be one of {AUGMENTATIONS}")
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("training set is empty")
    if augmentation != "none" and not bank:
        raise ValueError(f"{augmentation} augmentation needs a scene bank")
    config = config or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    params = [p.copy() for p in clf.params()]
    history = []
    for epoch in range(epochs):
        cur = clf.with_params(*params)
        X, y = images, labels
        if augmentation != "none":
            Xa, ya, _ = augment_images(cur, bank, augmentation, config.inject, rng, config)
            X, y = np.concatenate([X, Xa]), np.concatenate([y, ya])
        order = rng.permutation(len(X))
        losses = []
        for start in range(0, len(X), config.batch):
            idx = order[start : start + config.batch]
            loss, grads = _ce_grads(cur, X[idx], y[idx], config.weight_decay)
            params = [p - config.lr * g for p, g in zip(params, grads)]
            cur = clf.with_params(*params)
            losses.append(loss)
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "train_acc": accuracy(cur, images, labels)}
        if holdout is not None:
            row["holdout_acc"] = accuracy(cur, *holdout)
        history.append(row)
        log.debug("epoch %d %s", epoch, row)
    return clf.with_params(*params), history


def accuracy(clf, images, labels):
    return float(np.mean(clf.predict(images) == np.asarray(labels)))
