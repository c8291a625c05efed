import numpy as np
import pytest

from ilrkit import synthgen
from ilrkit.synthgen import SynthConfig
from ilrkit.embedstore import EmbeddingRecord, EmbeddingSet
from ilrkit.errors import DataValidationError

TINY = dict(n_categories=2, clusters_per_category=3, instances_per_cluster=4,
            images_per_instance=3)


def test_counts_and_categories(small_bundle):
    n = 2 * 4 * 5 * 4
    assert len(small_bundle.raw_set.records) == n
    assert len(small_bundle.general_set.records) == n
    assert len(small_bundle.token_maps) == n
    assert len(small_bundle.ground_truth) == n
    cats = {rec.category for rec in small_bundle.raw_set.records}
    assert cats == {"person", "face"}
    assert small_bundle.raw_set.dimension == 64
    assert small_bundle.general_set.dimension == 16
    assert small_bundle.token_maps[0].tokens.shape == (16, 16)


def test_views_share_ids(small_bundle):
    assert small_bundle.raw_set.image_ids == small_bundle.general_set.image_ids
    assert [t.image_id for t in small_bundle.token_maps] == small_bundle.raw_set.image_ids
    for rec in small_bundle.raw_set.records:
        assert small_bundle.ground_truth[rec.image_id] == rec.instance_id


def test_bit_identical_determinism():
    cfg = SynthConfig(seed=3, **TINY)
    a = synthgen.generate(cfg)
    b = synthgen.generate(cfg)
    assert np.array_equal(a.raw_set.matrix(), b.raw_set.matrix())
    assert np.array_equal(a.general_set.matrix(), b.general_set.matrix())
    for ta, tb in zip(a.token_maps, b.token_maps):
        assert np.array_equal(ta.tokens, tb.tokens)


def test_seed_changes_data():
    a = synthgen.generate(SynthConfig(seed=3, **TINY))
    b = synthgen.generate(SynthConfig(seed=4, **TINY))
    assert not np.array_equal(a.raw_set.matrix(), b.raw_set.matrix())


def test_entity_substreams_stable_under_growth():
    # Adding a category must not perturb records of the existing ones.
    small = synthgen.generate(SynthConfig(seed=3, **TINY))
    grown = synthgen.generate(SynthConfig(seed=3, **{**TINY, "n_categories": 3}))
    for rec in small.raw_set.records:
        assert np.array_equal(rec.vector, grown.raw_set.vector(rec.image_id))


def test_sigma_zero_collapses_instances():
    bundle = synthgen.generate(SynthConfig(seed=3, sigma=0.0, **TINY))
    for image_ids in bundle.raw_set.instance_index.values():
        first = bundle.raw_set.vector(image_ids[0])
        for other in image_ids[1:]:
            assert np.array_equal(first, bundle.raw_set.vector(other))
    assert synthgen.recall_at_1(bundle.raw_set) == 1.0


def test_large_alpha_makes_general_view_easy():
    bundle = synthgen.generate(SynthConfig(seed=3, alpha=4.0, sigma=0.02, **TINY))
    assert synthgen.recall_at_1(bundle.general_set) >= 0.95


def test_general_recall_increases_with_alpha():
    low = synthgen.generate(SynthConfig(seed=3, alpha=0.2, **TINY))
    high = synthgen.generate(SynthConfig(seed=3, alpha=2.5, **TINY))
    assert synthgen.recall_at_1(high.general_set) > synthgen.recall_at_1(low.general_set)


def test_default_bundle_difficulty_band(default_bundle):
    raw = synthgen.recall_at_1(default_bundle.raw_set)
    general = synthgen.recall_at_1(default_bundle.general_set)
    assert raw >= 0.95
    assert 0.40 <= general <= 0.75


def test_recall_rejects_singleton_instance():
    records = [
        EmbeddingRecord("a", "x", "pet", np.ones(3)),
        EmbeddingRecord("b", "x", "pet", np.ones(3)),
        EmbeddingRecord("c", "lonely", "pet", np.ones(3)),
    ]
    with pytest.raises(DataValidationError, match="single image"):
        synthgen.recall_at_1(EmbeddingSet.from_records("t", records))


def test_recall_shuffled_labels_near_chance():
    bundle = synthgen.generate(SynthConfig(seed=3, **TINY))
    rng = np.random.default_rng(0)
    records = list(bundle.raw_set.records)
    perm = rng.permutation(len(records))
    shuffled = [
        EmbeddingRecord(rec.image_id, f"fake{rank // 3:03d}", rec.category, rec.vector)
        for rec, rank in zip(records, np.argsort(perm))
    ]
    r = synthgen.recall_at_1(EmbeddingSet.from_records("t", shuffled))
    # 71 other images, 2 sharing the (shuffled) label on average
    assert r < 0.25


@pytest.mark.parametrize(
    "overrides",
    [
        {"alpha": 0.0},
        {"sigma": -0.1},
        {"n_categories": 0},
        {"dim_general": 128},
    ],
)
def test_config_validation(overrides):
    with pytest.raises(DataValidationError):
        synthgen.generate(SynthConfig(**{**TINY, **overrides}))


def test_category_names_extend_beyond_defaults():
    cfg = SynthConfig(n_categories=6)
    names = cfg.category_names()
    assert names[:4] == list(synthgen.DEFAULT_CATEGORIES)
    assert names[4:] == ["cat4", "cat5"]


def test_general_vectors_are_unit_norm(small_bundle):
    norms = np.linalg.norm(small_bundle.general_set.matrix(), axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)
