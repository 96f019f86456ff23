import numpy as np
import pytest

from mrselect.data import LabeledDataset
from mrselect.model import Layer, MlpModel


def tiny_model(seed=0, input_dim=9, hidden=(6,), num_classes=3, dropout=0.0):
    """Small random MLP for unit tests."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden, num_classes]
    layers = []
    for i in range(len(dims) - 1):
        w = rng.normal(0, 0.8, size=(dims[i + 1], dims[i]))
        b = rng.normal(0, 0.1, size=dims[i + 1])
        act = "softmax" if i == len(dims) - 2 else "relu"
        layers.append(Layer(w, b, act))
    return MlpModel(layers, [dropout] * len(hidden))


def hand_2_2_2_model():
    """2-2-2 network with weights chosen for hand computation."""
    l1 = Layer(np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([0.1, -0.2]), "relu")
    l2 = Layer(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 0.0]), "softmax")
    return MlpModel([l1, l2], [0.0])


def small_dataset(n=20, seed=0, shape=(3, 3, 1), num_classes=3):
    rng = np.random.default_rng(seed)
    images = rng.random((n, *shape))
    labels = rng.integers(0, num_classes, size=n)
    return LabeledDataset(images, labels, num_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
