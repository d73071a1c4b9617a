import numpy as np
import pytest

from faceknn import FlatIndex, InvalidArgumentError, SynthSpec, evaluate_accuracy, generate_synthetic, synthesize
from faceknn.index import Variant
from faceknn.synth import PerturbationLevel, _normals, levels_from_scales


def test_same_spec_same_bytes(tmp_path):
    spec = SynthSpec(seed=11, n_identities=4, images_per_identity=3, dim=5,
                     perturbation_levels=levels_from_scales([0.5]))
    generate_synthetic(spec, tmp_path / "a")
    generate_synthetic(spec, tmp_path / "b")
    for name in ("original.emb1", "fawkes.emb1", "manifest.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_zero_noise_copies_originals():
    data = synthesize(SynthSpec(seed=2, n_identities=3, images_per_identity=2, dim=4,
                                perturbation_levels=(PerturbationLevel(Variant.LOWKEY, 0.0),)))
    assert data.variants[Variant.LOWKEY].tobytes() == data.originals.tobytes()


def test_well_separated_is_perfect():
    data = synthesize(SynthSpec(seed=1, n_identities=50, images_per_identity=10, dim=32,
                                intra_spread=1.0, inter_spread=100.0))
    idx = FlatIndex().fit(data.originals, data.identity_ids, item_ids=data.image_ids)
    r = evaluate_accuracy(idx)
    assert (r.top1_accuracy, r.top5_accuracy) == (1.0, 1.0)


def test_box_muller_moments():
    z = _normals(99, 0, (200_000,))
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1) < 0.01


def test_streams_are_independent_of_level_count():
    a = synthesize(SynthSpec(seed=4, n_identities=2, images_per_identity=2, dim=3))
    b = synthesize(SynthSpec(seed=4, n_identities=2, images_per_identity=2, dim=3,
                             perturbation_levels=levels_from_scales([1, 2])))
    assert a.originals.tobytes() == b.originals.tobytes()


@pytest.mark.parametrize("kwargs", [
    {"n_identities": 0}, {"dim": -1}, {"intra_spread": 0.0}, {"inter_spread": -2.0}, {"seed": -1},
    {"perturbation_levels": (PerturbationLevel(Variant.ORIGINAL, 1.0),)},
    {"perturbation_levels": (PerturbationLevel(Variant.FAWKES, -1.0),)},
    {"perturbation_levels": (PerturbationLevel(Variant.FAWKES, 1.0), PerturbationLevel(Variant.FAWKES, 2.0))},
])
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidArgumentError):
        SynthSpec(**kwargs)


def test_too_many_levels():
    with pytest.raises(InvalidArgumentError):
        levels_from_scales([0, 1, 2, 3])
