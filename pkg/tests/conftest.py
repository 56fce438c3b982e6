import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session", autouse=True)
def warm_kernel():
    """Load (or build) the compiled stepper once so timed tests are fair."""
    from tipcascade import CascadeConfig, integrate_cascade

    integrate_cascade(CascadeConfig())
