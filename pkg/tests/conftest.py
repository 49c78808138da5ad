import os

import numpy as np
import pytest

from aigts.catalog import default_catalog
from aigts.synth import SynthConfig, generate_synthetic

# The library defaults to numba; tests that compare paths pass ``accel`` explicitly.
os.environ.setdefault("AIGTS_THREADS", "1")


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def small_synth():
    cfg = SynthConfig(n_users=6, n_days=7)
    return generate_synthetic(cfg, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return str(path)


DISJOINT_SUPPORTS = ([0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11])


def planted_vectors(seed, n_per=20, supports=DISJOINT_SUPPORTS, n_channels=27):
    """Segment vectors drawn from regimes with the given category supports."""
    from aigts.clustering import segment_to_vector
    from aigts.synth import planted_series

    rng = np.random.default_rng(seed)
    V, truth = [], []
    for r, sup in enumerate(supports):
        for _ in range(n_per):
            n = int(rng.integers(20, 41))
            X, _, _ = planted_series(n, [sup], n_channels, rng=rng, per_bin=2)
            V.append(segment_to_vector(X, (0, n)).v)
            truth.append(r)
    order = rng.permutation(len(V))
    return np.array(V)[order], np.array(truth)[order]


ACCEPTANCE = {}


def record_acceptance(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"ACCEPTANCE {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
