import numpy as np
import pytest

import finitecollapse as fc


@pytest.fixture
def desk_system():
    """Two-level system with weights (0.3, 0.7) on energies (0, 1)."""
    return fc.build_system([0.0, 1.0], [np.sqrt(0.3), np.sqrt(0.7)])


@pytest.fixture
def desk_schedule():
    return fc.ReductionSchedule(horizon=1.0, volatility=1.0)


@pytest.fixture
def single_level_system():
    return fc.build_system([5.0], [1.0])
