import os

import pytest

import synth
from senseline import dataset, system, trainer

# Real MNIST IDX files, if the user has placed them locally. Tests that
# assert MNIST-specific accuracy targets skip without them.
MNIST_DIR = os.environ.get(
    "SENSELINE_MNIST_DIR",
    os.path.normpath(os.path.join(os.path.dirname(__file__), "..", "data")))

MNIST_FILES = {
    "train_images": ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"),
    "train_labels": ("train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"),
    "test_images": ("t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"),
    "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz"),
}


def mnist_paths() -> dict | None:
    found = {}
    for key, names in MNIST_FILES.items():
        for name in names:
            path = os.path.join(MNIST_DIR, name)
            if os.path.exists(path):
                found[key] = path
                break
        else:
            return None
    return found


requires_mnist = pytest.mark.skipif(
    mnist_paths() is None,
    reason=f"real MNIST IDX files not found under {MNIST_DIR} "
           "(set SENSELINE_MNIST_DIR); this sandbox has no dataset network access",
)


@pytest.fixture(scope="session")
def mnist_features():
    """Full MNIST split at both resolutions: {'784': trio, '64': trio}."""
    paths = mnist_paths()
    if paths is None:
        pytest.skip("real MNIST not available in this environment")
    train_pool = dataset.load_idx(paths["train_images"], paths["train_labels"])
    test_pool = dataset.load_idx(paths["test_images"], paths["test_labels"])
    splits = dataset.split(train_pool, test_pool, dataset.SplitSpec())

    def both(s):
        x784 = dataset.normalize(s)
        return x784, dataset.downsample(x784), s.labels.astype(int)

    tr784, tr64, ty = both(splits.train)
    va784, va64, vy = both(splits.val)
    te784, te64, sy = both(splits.test)
    return {
        "784": ((tr784, ty), (va784, vy), (te784, sy)),
        "64": ((tr64, ty), (va64, vy), (te64, sy)),
    }


@pytest.fixture(scope="session")
def synth_splits():
    """Synthetic digit corpus split 7000/2000/1500, session-cached."""
    images, labels = synth.make_corpus(10_500, seed=7)
    train = dataset.LabeledImageSet(images[:9000], labels[:9000])
    test = dataset.LabeledImageSet(images[9000:], labels[9000:])
    return dataset.split(train, test, dataset.SplitSpec(7000, 2000, 1500, shuffle_seed=42))


def _features64(s: dataset.LabeledImageSet):
    return dataset.downsample(dataset.normalize(s)), s.labels.astype(int)


@pytest.fixture(scope="session")
def synth_features(synth_splits):
    """(train_x, train_y), (val_x, val_y), (test_x, test_y) at 64 features."""
    return tuple(_features64(s) for s in (synth_splits.train, synth_splits.val, synth_splits.test))


@pytest.fixture(scope="session")
def synth_model(synth_features) -> trainer.OvOModel:
    """All-64-feature ensemble trained on the synthetic corpus."""
    (tx, ty), (vx, vy), _ = synth_features
    return trainer.build_ovo(tx, ty, vx, vy, trainer.TrainHyper(), sbs=None)


@pytest.fixture(scope="session")
def synth_system(synth_model) -> system.SystemConfig:
    return system.assemble(synth_model)


@pytest.fixture()
def idx_dir(tmp_path):
    """Small synthetic IDX file pair on disk (train + test, mixed gzip)."""
    images, labels = synth.make_corpus(600, seed=3)
    train_paths = synth.write_idx_pair(tmp_path, images[:500], labels[:500], "train")
    test_paths = synth.write_idx_pair(tmp_path, images[500:], labels[500:], "t10k",
                                      compress=True)
    return {"dir": tmp_path, "train": train_paths, "test": test_paths}
