from __future__ import annotations

import numpy as np
import pytest

from icsim.quad_core import make_instance


@pytest.fixture
def inst_a():
    """M=2, d=2: A1=diag(2,1), A2=diag(1,2), x1*=(1,0), x2*=(0,1)."""
    return make_instance([np.diag([2.0, 1.0]), np.diag([1.0, 2.0])], [[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def homogeneous():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    return make_instance([A, A, A], [[1.0, 2.0], [-1.0, 0.5], [0.0, -3.0]])
