"""The bundled toy world: shape classes, scene banks, a trained toy classifier
and the attack fixtures used by the acceptance suite.

Four shape classes are rendered at 32x32 from a ring of 10 orthographic
cameras at zenith pi/3 over five gray backgrounds.  Meshes are finely
tessellated (tens of thousands of faces) so that sub-pixel vertex
displacements visibly tilt the shading normals.

``python -m paramball.toyworld`` retrains and rewrites the bundled classifier.
"""

import argparse
import logging
from functools import lru_cache
from math import pi

import numpy as np

from . import lighting, shapes
from .classifier import ToyClassifier, TrainConfig, accuracy, train_toy
from .raster import camera_ring
from .scene import Scene

log = logging.getLogger(__name__)

CLASSES = ("sphere", "cube", "cylinder", "cone")
BACKGROUNDS = (0.0, 0.25, 0.5, 0.75, 1.0)
RESOLUTION = (32, 32)
RING_COUNT = 10
ZENITH = pi / 3
RADIUS = 3.0
FOV = 2.0
DETAIL = 4
# held-out views sit halfway between the training azimuths
HELDOUT_PHASE = pi / RING_COUNT

HIDDEN = 32
TRAIN_EPOCHS = 100
# epochs per arm of the augmentation comparison
AUGMENT_EPOCHS = 40
TRAIN_CONFIG = TrainConfig(lr=0.1, batch=32, weight_decay=3e-2)
CLASSIFIER_SEED = 0
CLASSIFIER_FILE = lighting.DATA_DIR / "toy_classifier.npz"


@lru_cache(maxsize=None)
def class_mesh(label, detail=DETAIL):
    return shapes.make_shape(CLASSES[label], detail)


def cameras(phase=0.0, resolution=RESOLUTION, count=RING_COUNT):
    return camera_ring(count, ZENITH, RADIUS, fov=FOV, resolution=resolution, phase=phase)


def scene_bank(phase=0.0, detail=DETAIL, U=None, backgrounds=BACKGROUNDS):
    """One single-view scene per (class, camera, background), default lighting."""
    U = lighting.default_lighting() if U is None else U
    bank = []
    for label in range(len(CLASSES)):
        mesh = class_mesh(label, detail)
        for cam in cameras(phase):
            for bg in backgrounds:
                bank.append(Scene.single(mesh, cam, U, bg, label=label))
    _share_normals(bank)
    return bank


def _share_normals(bank):
    cache = {}
    for s in bank:
        key = id(s.mesh)
        if key not in cache:
            cache[key] = s.normals()
        s._normals = cache[key]


def render_bank(bank, U=None):
    X = np.array([s.render(0, U) for s in bank])
    y = np.array([s.label for s in bank], dtype=np.int64)
    return X, y


def random_environment_lighting(rng, bands=lighting.DEFAULT_BANDS, size=(32, 64)):
    """A random outdoor-like environment: colored sky and ground plus one key light.

    Used as the held-out "randomized lighting" distribution; it is a different
    family from the uniform coefficient offsets used for random augmentation.
    """
    h, w = size
    d = lighting.equirect_directions(h, w)
    z = d[..., 2]
    up = 0.5 * (1 + np.tanh(4 * z))[..., None]
    sky = rng.uniform(0.3, 1.0, 3) * rng.uniform(0.5, 1.2)
    ground = rng.uniform(0.1, 0.5, 3)
    key = rng.normal(size=3)
    key[2] = abs(key[2])
    key /= np.linalg.norm(key)
    sharp = rng.uniform(2.0, 10.0)
    color = rng.uniform(0.5, 2.0, 3) * rng.uniform(0.5, 1.5)
    env = up * sky + (1 - up) * ground + np.exp(sharp * (d @ key - 1.0))[..., None] * color
    return lighting.project_environment(lighting.DEFAULT_EXPOSURE * env, bands)


def heldout_set(rng, detail=DETAIL, per_scene=1):
    """Held-out views rendered under randomized environment lighting."""
    bank = scene_bank(HELDOUT_PHASE, detail)
    X, y = [], []
    for s in bank:
        for _ in range(per_scene):
            X.append(s.render(0, random_environment_lighting(rng)))
            y.append(s.label)
    return np.array(X), np.array(y, dtype=np.int64)


def train_classifier(seed=CLASSIFIER_SEED, bank=None, augmentation="none", epochs=TRAIN_EPOCHS, config=TRAIN_CONFIG):
    """Train a fresh toy classifier on the default-lighting bank."""
    bank = scene_bank() if bank is None else bank
    X, y = render_bank(bank)
    rng = np.random.default_rng(seed)
    clf = ToyClassifier.init(RESOLUTION[::-1] + (3,), HIDDEN, len(CLASSES), rng)
    clf, history = train_toy(clf, X, y, epochs, augmentation, bank, rng, config)
    return clf, history


def bundled_classifier():
    return ToyClassifier.load(CLASSIFIER_FILE)


def attack_suite(clf, per_class=6, detail=DETAIL):
    """Held-out single-view scenes, spread over classes, azimuths and backgrounds,
    kept only if ``clf`` classifies them correctly."""
    cams = cameras(HELDOUT_PHASE)
    suite = []
    for label in range(len(CLASSES)):
        mesh = class_mesh(label, detail)
        for j in range(per_class):
            cam = cams[(2 * j + label) % len(cams)]
            bg = BACKGROUNDS[j % len(BACKGROUNDS)]
            s = Scene.single(mesh, cam, lighting.default_lighting(), bg, label=label)
            if clf.predict(s.render()) == label:
                suite.append(s)
    return suite


# per-view targets and displacement bound for the two-view illusion
ILLUSION_VIEWS = (0, 5)
ILLUSION_TARGETS = (1, 2)
ILLUSION_EPS = 0.005


def illusion_fixture(detail=DETAIL, views=ILLUSION_VIEWS, background=0.5):
    """Two opposite views of one sphere, for per-view targeted geometry attacks."""
    cams = cameras()
    mesh = class_mesh(0, detail)
    return Scene(mesh, [cams[v] for v in views], [background] * len(views), lighting.default_lighting(), label=0)


def main(argv=None):
    parser = argparse.ArgumentParser(description="Retrain the bundled toy classifier")
    parser.add_argument("--out", default=str(CLASSIFIER_FILE))
    parser.add_argument("--seed", type=int, default=CLASSIFIER_SEED)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    clf, history = train_classifier(args.seed)
    Xh, yh = heldout_set(np.random.default_rng(args.seed))
    log.info("train acc %.3f, held-out randomized-lighting acc %.3f", history[-1]["train_acc"], accuracy(clf, Xh, yh))
    clf.save(args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
