import numpy as np
import pytest
from hypothesis import settings

from alf.codec import CodecConfig, train_base
from alf.harness.data import make_images, split_holdout

settings.register_profile("alf", deadline=None, max_examples=40)
settings.load_profile("alf")

TINY = CodecConfig(latent_channels=8, hidden_channels=16, num_downsamples=3, beta=0.008)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_images():
    train, holdout = split_holdout(make_images(3, 120, 32))
    return train, holdout


@pytest.fixture(scope="session")
def tiny_codec(toy_images):
    """A briefly trained small codec; enough for format and plumbing tests."""
    codec, _ = train_base(toy_images[0], TINY, 300, seed=0, lr=2e-3)
    codec.freeze()
    return codec


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; they are printed together at the end of the run."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        lines.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
