import numpy as np
import pytest

from engines.channel import gen_rayleigh, planar_array
from engines.txchain import OFDMConfig, PAConfig

TINY_TOML = """
[experiment]
seed = {seed}
output_dir = "{out}"
n_symbols = 10

[array]
rows = 2
cols = 2

[scenario]
n_x = 4
n_y = 3
resolution = 4.0

[sdr]
ibo_db = [0.0, 3.0]
scheduled_ue = 4

[dataset]
train_ibo_db = [0.0, 6.0]
test_ibo_db = [3.0]

[cnn]
stages = [[1, 2], [1, 2]]
dense = [4]

[train]
epochs = 2
batch_size = 8

[prune]
sparsity = 0.4
fine_tune_epochs = 1

[allocation]
ibo_candidates_db = [1.0, 3.0, 6.0, 9.0]
baseline_ibo_db = 6.0
"""


@pytest.fixture
def ofdm():
    return OFDMConfig(N=64, N_U=12, N_CP=16, subcarrier_spacing=360e3)


@pytest.fixture
def geometry16():
    return planar_array(4, 4)


@pytest.fixture
def soft_limiter16():
    return PAConfig.uniform('soft_limiter', 1.0, 16)


@pytest.fixture
def rayleigh16():
    return gen_rayleigh(1.0, 12, 16, seed=11)


@pytest.fixture
def gaussian_rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config(tmp_path):
    """Write a small experiment TOML (seed=None leaves the seed out); returns (config path, output dir)."""
    def make(seed=7, extra=''):
        out = tmp_path / f"out-{seed}"
        path = tmp_path / f"tiny-{seed}.toml"
        text = TINY_TOML.format(seed=0 if seed is None else seed, out=out.as_posix())
        if seed is None:
            text = text.replace('seed = 0\n', '')
        path.write_text(text + extra, encoding='utf-8')
        return str(path), out
    return make
