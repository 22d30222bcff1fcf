import numpy as np
import pytest

from protocad.tensor import default_dtype, set_default_dtype


@pytest.fixture(autouse=True)
def float64_default():
    """Tests run in double precision unless they opt out explicitly."""
    prev = default_dtype()
    set_default_dtype(np.float64)
    yield
    set_default_dtype(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
