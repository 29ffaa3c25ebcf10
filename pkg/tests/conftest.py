import numpy as np
import pytest

from agsam.data import Batch
from agsam.models import MlpSpec, init_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_mlp():
    spec = MlpSpec((2, 4, 2), "tanh", init_seed=3)
    return spec, init_model(spec)


@pytest.fixture
def tiny_batch(rng):
    x = rng.standard_normal((8, 2))
    y = rng.integers(0, 2, 8)
    return Batch(x, y)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(number, passed, detail)`` collects one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number: int, passed: bool, detail: str) -> None:
        lines.append((number, f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"))
        print(lines[-1][1])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
