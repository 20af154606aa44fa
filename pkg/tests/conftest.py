import pytest
import torch


@pytest.fixture(autouse=True, scope="session")
def single_thread():
    # keeps float64 reductions deterministic across runs
    torch.set_num_threads(1)
