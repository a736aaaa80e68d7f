# tests/test_data.py
import json

import numpy as np
import pytest
from pydantic import ValidationError

from csmil.core.errors import DataFormatError, InvalidBagError, PreconditionError
from csmil.data.schemas import Dataset, SynthConfig
from csmil.data.service import (
    load_dataset,
    load_folds,
    load_ground_truth,
    read_embeddings,
    save_bag,
    save_dataset,
    save_folds,
    save_ground_truth,
    split_folds,
)
from csmil.data.synthetic import component_centroids, generate_synthetic

from .helpers import make_bag


def test_bag_file_round_trip(tmp_path, rng):
    bag = make_bag("b0", 1, rng.normal(size=(5, 3)).astype(np.float32))
    save_bag(bag, tmp_path / "b0.emb")
    assert np.array_equal(read_embeddings(tmp_path / "b0.emb"), bag.embeddings)


def test_single_value_bag_is_twenty_bytes(tmp_path):
    save_bag(make_bag("z", 0, [[0.0]]), tmp_path / "z.emb")
    assert (tmp_path / "z.emb").stat().st_size == 20


def test_bag_rejects_non_finite():
    with pytest.raises(InvalidBagError):
        make_bag("bad", 0, [[1.0, np.nan]])


def test_bag_invariants():
    with pytest.raises(InvalidBagError):
        make_bag("empty", 0, np.zeros((0, 3)))
    with pytest.raises(InvalidBagError):
        make_bag("label", 2, [[1.0]])
    with pytest.raises(InvalidBagError):
        make_bag("flat", 1, [1.0, 2.0])


def test_read_rejects_truncated_and_bad_magic(tmp_path):
    save_bag(make_bag("t", 0, np.ones((2, 2))), tmp_path / "t.emb")
    payload = (tmp_path / "t.emb").read_bytes()
    (tmp_path / "short.emb").write_bytes(payload[:-2])
    (tmp_path / "magic.emb").write_bytes(b"NOTMAGIC" + payload[8:])
    with pytest.raises(DataFormatError):
        read_embeddings(tmp_path / "short.emb")
    with pytest.raises(DataFormatError):
        read_embeddings(tmp_path / "magic.emb")
    with pytest.raises(DataFormatError):
        read_embeddings(tmp_path / "missing.emb")


def test_manifest_round_trip(tmp_path):
    dataset = Dataset(
        bags=(make_bag("a", 1, np.ones((3, 4))), make_bag("b", 0, np.zeros((5, 4)))),
        dim=4,
        name="two",
    )
    manifest = save_dataset(dataset, tmp_path)
    loaded = load_dataset(manifest)
    assert len(loaded) == 2
    assert loaded.dim == 4
    assert loaded.ids == ["a", "b"]
    assert [bag.n for bag in loaded.bags] == [3, 5]


def test_dimension_mismatch(tmp_path):
    save_bag(make_bag("a", 1, np.ones((2, 4))), tmp_path / "a.emb")
    (tmp_path / "manifest.json").write_text(
        json.dumps({"name": "x", "dim": 8, "bags": [{"id": "a", "label": 1, "path": "a.emb"}]})
    )
    with pytest.raises(DataFormatError, match="dimension"):
        load_dataset(tmp_path / "manifest.json")


def test_empty_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"name": "x", "dim": 4, "bags": []}))
    with pytest.raises(DataFormatError, match="dataset has no bags"):
        load_dataset(tmp_path / "manifest.json")


def test_duplicate_ids_rejected():
    with pytest.raises(InvalidBagError):
        Dataset(bags=(make_bag("a", 1, [[1.0]]), make_bag("a", 0, [[2.0]])), dim=1)


def test_synthetic_is_deterministic():
    cfg = SynthConfig(K_latent=4, s_informative=1, d=6, bags_per_class=5, seed=11)
    first, truth_a = generate_synthetic(cfg)
    second, truth_b = generate_synthetic(cfg)
    assert first.ids == second.ids
    for a, b in zip(first.bags, second.bags):
        assert a.label == b.label
        assert np.array_equal(a.embeddings, b.embeddings)
    assert truth_a == truth_b


def test_synthetic_bookkeeping(small_synth):
    dataset, truth = small_synth
    assert truth.informative_components == (0,)
    for bag in dataset.bags:
        components = truth.component_of_instance[bag.id]
        assert len(components) == bag.n
        informative = [c for c in components if truth.is_informative(c)]
        if bag.label == 0:
            assert informative == []
        else:
            assert len(informative) >= 1


def test_synthetic_informative_instances_sit_near_their_centroid():
    cfg = SynthConfig(K_latent=3, s_informative=1, d=4, bags_per_class=20, noise_sigma=0.1, seed=5)
    dataset, truth = generate_synthetic(cfg)
    rows = [
        bag.embeddings[j]
        for bag in dataset.bags
        for j, c in enumerate(truth.component_of_instance[bag.id])
        if c == 0
    ]
    rows = np.array(rows)
    centroid = rows.mean(axis=0)
    assert np.linalg.norm(centroid) == pytest.approx(cfg.component_separation, rel=0.05)
    # every informative instance is far closer to its centroid than the centroid spacing
    assert np.max(np.linalg.norm(rows - centroid, axis=1)) < cfg.component_separation / 2


def test_synthetic_centroids_are_separated(rng):
    cfg = SynthConfig(K_latent=8, s_informative=2, d=16, component_separation=3.0)
    centroids = component_centroids(cfg, rng)
    assert centroids.shape == (8, 16)
    gaps = [np.linalg.norm(a - b) for i, a in enumerate(centroids) for b in centroids[i + 1 :]]
    assert min(gaps) >= cfg.component_separation
    np.testing.assert_allclose(gaps, cfg.component_separation * np.sqrt(2.0), rtol=1e-12)


def test_synthetic_components_are_separated_in_the_data():
    cfg = SynthConfig(K_latent=4, s_informative=1, d=6, bags_per_class=20, noise_sigma=0.1, seed=2)
    dataset, truth = generate_synthetic(cfg)
    rows = np.concatenate([bag.embeddings for bag in dataset.bags])
    components = np.concatenate([truth.component_of_instance[bag.id] for bag in dataset.bags])
    means = np.array([rows[components == c].mean(axis=0) for c in range(cfg.K_latent)])
    gaps = [np.linalg.norm(a - b) for i, a in enumerate(means) for b in means[i + 1 :]]
    assert min(gaps) >= cfg.component_separation


def test_synth_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(K_latent=4, s_informative=4, d=8)
    with pytest.raises(ValidationError):
        SynthConfig(K_latent=10, s_informative=2, d=8)
    with pytest.raises(ValidationError):
        SynthConfig(instances_per_bag=(5, 2))


def _labelled(n_pos, n_neg):
    bags = [make_bag(f"p{i}", 1, [[float(i)]]) for i in range(n_pos)]
    bags += [make_bag(f"n{i}", 0, [[float(i)]]) for i in range(n_neg)]
    return Dataset(bags=tuple(bags), dim=1)


def test_split_folds_stratified():
    dataset = _labelled(5, 5)
    folds = split_folds(dataset, 5, seed=0)
    labels = dict(zip(dataset.ids, dataset.labels))
    for f in range(5):
        test = folds.test_ids(f)
        assert sorted(labels[i] for i in test) == [0, 1]


def test_split_folds_sizes():
    folds = split_folds(_labelled(50, 50), 5, seed=7)
    assert [len(folds.test_ids(f)) for f in range(5)] == [20] * 5


def test_split_folds_uneven_sizes_differ_by_one():
    dataset = _labelled(7, 6)
    folds = split_folds(dataset, 5, seed=3)
    sizes = [len(folds.test_ids(f)) for f in range(5)]
    assert sum(sizes) == 13
    assert max(sizes) - min(sizes) <= 1
    labels = dict(zip(dataset.ids, dataset.labels))
    for label in (0, 1):
        per_fold = [sum(labels[i] == label for i in folds.test_ids(f)) for f in range(5)]
        assert max(per_fold) - min(per_fold) <= 1


def test_split_folds_too_few_bags():
    with pytest.raises(PreconditionError):
        split_folds(_labelled(2, 2), 5, seed=0)
    with pytest.raises(PreconditionError):
        split_folds(_labelled(5, 5), 1, seed=0)


def test_split_folds_deterministic_and_order_free():
    dataset = _labelled(6, 6)
    reversed_dataset = Dataset(bags=tuple(reversed(dataset.bags)), dim=1)
    assert split_folds(dataset, 3, seed=2).fold_of_bag == split_folds(reversed_dataset, 3, seed=2).fold_of_bag


def test_sidecars_round_trip(tmp_path, small_synth):
    dataset, truth = small_synth
    save_ground_truth(truth, tmp_path / "gt.json")
    assert load_ground_truth(tmp_path / "gt.json") == truth
    folds = split_folds(dataset, 5, seed=0)
    save_folds(folds, tmp_path / "folds.json")
    assert load_folds(tmp_path / "folds.json", dataset).fold_of_bag == folds.fold_of_bag


@pytest.mark.parametrize("bag_id", ["../escape", "nested/bag", "back\\slash", ".."])
def test_save_dataset_rejects_path_like_ids(tmp_path, bag_id):
    dataset = Dataset(bags=(make_bag(bag_id, 1, [[1.0]]),), dim=1)
    with pytest.raises(InvalidBagError):
        save_dataset(dataset, tmp_path / "data")
    assert not (tmp_path / "escape.emb").exists()
    assert not list((tmp_path / "data").glob("**/*.emb"))
