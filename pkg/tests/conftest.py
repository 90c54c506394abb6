import numpy as np
import pytest

from radsynth.grid import ImageGrid
from radsynth.toydata import make_corpus


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(0))


@pytest.fixture
def small_corpus():
    # 16 wide, 8 high keeps torch paths fast
    return make_corpus(6, 8, 16, seed=0)


@pytest.fixture
def gradient_image():
    h, w = 12, 20
    ramp = np.linspace(0.0, 1.0, w)[None, :] * np.ones((h, 1))
    return ImageGrid(ramp)
