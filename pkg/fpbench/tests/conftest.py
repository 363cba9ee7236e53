import numpy as np
import pytest

from fpbench import FpSample


def small_record(seed: int, users: int = 2, antennas: int = 3,
                 qos: float = 0.1) -> dict:
    """A compact scenario record keeping the SDP subproblems tiny."""
    rng = np.random.default_rng(seed)
    h = (rng.standard_normal((users, antennas))
         + 1j * rng.standard_normal((users, antennas))) * 0.3
    alpha = rng.uniform(0.2, 1.0, size=users)
    alpha = alpha / alpha.sum()
    return {
        "users": users,
        "antennas": antennas,
        "h_re": h.real.tolist(),
        "h_im": h.imag.tolist(),
        "alpha": alpha.tolist(),
        "r": [qos] * users,
        "sigma2": 1e-2,
        "p_max_w": 2.0,
        "p_c_w": 1.0,
    }


def random_beams(rng: np.random.Generator, sample: FpSample,
                 scale: float = 0.3) -> np.ndarray:
    u, m = sample.num_users, sample.num_antennas
    return scale * (rng.standard_normal((u + 1, m))
                    + 1j * rng.standard_normal((u + 1, m)))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
