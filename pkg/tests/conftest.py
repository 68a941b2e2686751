import numpy as np
import pytest
import torch

# tiny convolutions run fastest and fully deterministically on one thread
torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
