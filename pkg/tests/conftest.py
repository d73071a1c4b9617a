import numpy as np
import pytest

from faceknn.synth import SynthSpec, generate_synthetic, levels_from_scales


def naive_squared_l2(a, b):
    total = 0.0
    for x, y in zip(a, b):
        d = float(x) - float(y)
        total += d * d
    return total


def naive_search(X, ids, query, k, exclude=None):
    """All distances, then a full sort by (distance, id)."""
    scored = [(naive_squared_l2(x, query), i) for x, i in zip(X, ids) if i != exclude]
    scored.sort()
    return scored[:k]


def naive_outcomes(X, ids, labels, k=6, n_scored=5):
    """Leave-one-out identification written without the index."""
    out = {}
    for x, i, lab in zip(X, ids, labels):
        top = naive_search(X, ids, x, k)
        kept = [j for _, j in top if j != i][:n_scored]
        label_of = dict(zip(ids, labels))
        same = [label_of[j] == lab for j in kept]
        out[i] = (bool(same and same[0]), any(same))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def synth_dir(tmp_path):
    spec = SynthSpec(seed=7, n_identities=12, images_per_identity=6, dim=8,
                     intra_spread=1.0, inter_spread=20.0,
                     perturbation_levels=levels_from_scales([0.0, 1.0, 3.0]))
    generate_synthetic(spec, tmp_path / "synth")
    return tmp_path / "synth"


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
