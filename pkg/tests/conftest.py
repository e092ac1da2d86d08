import os
import sys

import pytest

# IMPORTANT: tests import the package from the project root.
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from hsnc.models import SynthConfig, VaeConfig  # noqa: E402
from hsnc.pipeline import Pipeline  # noqa: E402
from hsnc.tensor.rng import RngState  # noqa: E402

SMALL_SYNTH = SynthConfig(channels=8, tile=8, n_tiles=24, seed=7, field_smoothness=1.5, cloud_smoothness=1.5)


@pytest.fixture
def rng():
    return RngState(1234)


@pytest.fixture
def tiny_cfg():
    return VaeConfig.tiny()


@pytest.fixture
def small_cfg():
    """Tiny model sized for the SMALL_SYNTH dataset (8 channels, 8×8 tiles)."""
    return VaeConfig(in_channels=8, tile=8, enc_channels=[8, 8, 8], latent_channels=2,
                     attn_heads=2, groups=4)


@pytest.fixture
def synth_dir(tmp_path):
    """A small synthetic dataset with radiance stats and L2 normalizers next to it."""
    root = tmp_path / "data"
    pipe = Pipeline()
    pipe.synth(SMALL_SYNTH, root)
    pipe.stats(root, root)
    return root
