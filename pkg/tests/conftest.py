import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture(autouse=True)
def _f64_default():
    # all package code passes explicit dtypes; this guards test-local tensors
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


def mc_se_mean(samples: np.ndarray) -> float:
    return float(samples.std(ddof=1) / np.sqrt(len(samples)))


def mc_se_var(samples: np.ndarray) -> float:
    v = samples.var(ddof=1)
    mu4 = np.mean((samples - samples.mean()) ** 4)
    return float(np.sqrt(max(mu4 - v * v, 0.0) / len(samples)))
