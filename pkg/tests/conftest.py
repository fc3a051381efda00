import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sentikit import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure compute, not JIT."""
    kernels.warmup()
