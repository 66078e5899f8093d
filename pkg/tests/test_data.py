import json

import numpy as np
import pytest

from mvret.data import (Dataset, DatasetManifest, FeatureFormatError,
                        GenreTaxonomy, MusicVideoItem, SamplingError,
                        SyntheticConfig, TaxonomyError, balanced_batch,
                        condense_labels, epoch_batches, generate_synthetic,
                        read_features, stratified_split, write_features)

ORIGINAL_LABELS = [
    "Blues", "Classical music", "Country", "Disco", "Electronic music", "Funk",
    "Hip hop music", "Jazz", "Middle Eastern music", "Music of Africa",
    "Music of Asia", "Music of Latin America", "Pop music", "Reggae",
    "Rhythm and blues", "Rock music", "Soul music", "Traditional music",
    "Vocal music",
]


# ---------------------------------------------------------------------------
# Taxonomy
# ---------------------------------------------------------------------------

def test_taxonomy_has_eleven_classes():
    tax = GenreTaxonomy.load()
    assert len(tax.classes) == 11
    assert len(set(tax.classes)) == 11


def test_taxonomy_maps_every_original_label():
    tax = GenreTaxonomy.load()
    for label in ORIGINAL_LABELS:
        assert condense_labels([label], tax) in tax.classes
    assert set(tax.mapping) == set(ORIGINAL_LABELS)


def test_condensation_examples():
    tax = GenreTaxonomy.load()
    assert condense_labels(["Blues"], tax) == "R&B"
    assert condense_labels(["Soul music"], tax) == "R&B"
    assert condense_labels(["Country"], tax) == "Country"
    assert condense_labels(["Music of Asia"], tax) == "Non-Western"


def test_multi_and_zero_label_items_rejected():
    tax = GenreTaxonomy.load()
    assert condense_labels(["Jazz", "Rock music"], tax) is None
    assert condense_labels([], tax) is None


def test_unknown_label_raises():
    tax = GenreTaxonomy.load()
    with pytest.raises(TaxonomyError):
        condense_labels(["Polka"], tax)


# ---------------------------------------------------------------------------
# Feature binary format
# ---------------------------------------------------------------------------

def test_feature_round_trip_bit_exact(tmp_path):
    rng = np.random.Generator(np.random.PCG64(0))
    matrix = rng.standard_normal((17, 9)).astype(np.float32)
    path = tmp_path / "x.fvec"
    write_features(path, matrix)
    back = read_features(path, expect_cols=9)
    assert back.tobytes() == matrix.tobytes()


def test_feature_bad_magic(tmp_path):
    path = tmp_path / "x.fvec"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(FeatureFormatError, match="byte 0"):
        read_features(path)


def test_feature_truncated_data(tmp_path):
    path = tmp_path / "x.fvec"
    write_features(path, np.ones((4, 3), dtype=np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(FeatureFormatError, match="truncated"):
        read_features(path)


def test_feature_dimension_conflict(tmp_path):
    path = tmp_path / "x.fvec"
    write_features(path, np.ones((4, 3), dtype=np.float32))
    with pytest.raises(FeatureFormatError, match="3 columns"):
        read_features(path, expect_cols=5)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def _items(counts: dict[str, int]) -> list[MusicVideoItem]:
    items = []
    row = 0
    for genre, n in counts.items():
        for _ in range(n):
            items.append(MusicVideoItem(f"mv{row:06d}", genre, "train", row))
            row += 1
    return items


def test_manifest_save_load_round_trip(tmp_path):
    manifest = DatasetManifest(8, 4, 0, ["Rock", "Jazz"], _items({"Rock": 3, "Jazz": 2}))
    manifest.save(tmp_path)
    loaded = DatasetManifest.load(tmp_path)
    assert loaded == manifest
    # resaving a loaded manifest is byte-identical (canonical JSON)
    before = ((tmp_path / "manifest.json").read_bytes(),
              (tmp_path / "items.jsonl").read_bytes())
    loaded.save(tmp_path)
    after = ((tmp_path / "manifest.json").read_bytes(),
             (tmp_path / "items.jsonl").read_bytes())
    assert before == after


def test_manifest_item_count_validation(tmp_path):
    manifest = DatasetManifest(8, 4, 0, ["Rock"], _items({"Rock": 3}))
    manifest.save(tmp_path)
    header = json.loads((tmp_path / "manifest.json").read_text())
    header["num_items"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(header))
    with pytest.raises(ValueError):
        DatasetManifest.load(tmp_path)


# ---------------------------------------------------------------------------
# Stratified splitting
# ---------------------------------------------------------------------------

def test_split_partitions_each_class_within_one():
    items = _items({"Rock": 100, "Jazz": 57, "Pop": 10})
    stratified_split(items, (0.8, 0.1, 0.1), seed=0)
    for genre, n in (("Rock", 100), ("Jazz", 57), ("Pop", 10)):
        members = [item for item in items if item.genre == genre]
        counts = {s: sum(1 for m in members if m.split == s)
                  for s in ("train", "val", "test")}
        assert sum(counts.values()) == n
        for split, frac in zip(("train", "val", "test"), (0.8, 0.1, 0.1)):
            assert abs(counts[split] - n * frac) <= 1


def test_split_exact_when_fractions_divide():
    items = _items({"Rock": 50, "Jazz": 50})
    stratified_split(items, (0.8, 0.1, 0.1), seed=1)
    for genre in ("Rock", "Jazz"):
        members = [item for item in items if item.genre == genre]
        assert sum(1 for m in members if m.split == "train") == 40
        assert sum(1 for m in members if m.split == "val") == 5
        assert sum(1 for m in members if m.split == "test") == 5


def test_split_deterministic_under_seed():
    def run(seed):
        items = _items({"Rock": 33, "Jazz": 21})
        stratified_split(items, (0.8, 0.1, 0.1), seed)
        return [item.split for item in items]

    assert run(5) == run(5)
    assert run(5) != run(6)


def test_split_warns_on_tiny_class():
    items = _items({"Rock": 30, "Jazz": 2})
    with pytest.warns(UserWarning, match="Jazz"):
        stratified_split(items, (0.8, 0.1, 0.1), seed=0)


def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        stratified_split(_items({"Rock": 10}), (0.5, 0.2, 0.2), seed=0)


# ---------------------------------------------------------------------------
# Balanced sampling
# ---------------------------------------------------------------------------

def _manifest(counts):
    return DatasetManifest(8, 4, 0, sorted(counts), _items(counts))


def test_balanced_batch_uniform_over_classes():
    # heavily imbalanced corpus: 900 Rock vs 50 Jazz vs 50 Pop
    manifest = _manifest({"Rock": 900, "Jazz": 50, "Pop": 50})
    rng = np.random.Generator(np.random.PCG64(0))
    draws = 100_000
    ids = balanced_batch(manifest, "train", draws, rng)
    genre_of = {item.id: item.genre for item in manifest.items}
    observed = np.array([sum(1 for i in ids if genre_of[i] == g)
                         for g in manifest.class_names], dtype=np.float64)
    expected = draws / len(manifest.class_names)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    # 0.999 chi-square quantile with 2 degrees of freedom
    assert chi2 < 13.816


def test_balanced_batch_deterministic():
    manifest = _manifest({"Rock": 20, "Jazz": 20})
    a = balanced_batch(manifest, "train", 64, np.random.Generator(np.random.PCG64(3)))
    b = balanced_batch(manifest, "train", 64, np.random.Generator(np.random.PCG64(3)))
    assert a == b


def test_balanced_batch_empty_class_raises():
    manifest = _manifest({"Rock": 20, "Jazz": 20})
    for item in manifest.items:
        if item.genre == "Jazz":
            item.split = "test"
    with pytest.raises(SamplingError, match="Jazz"):
        balanced_batch(manifest, "train", 8, np.random.Generator(np.random.PCG64(0)))


def test_epoch_batches_count_is_ceil():
    manifest = _manifest({"Rock": 50, "Jazz": 51})
    rng = np.random.Generator(np.random.PCG64(0))
    batches = epoch_batches(manifest, "train", 32, rng)
    assert len(batches) == 4  # ceil(101 / 32)
    assert all(len(b) == 32 for b in batches)


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

def test_synthetic_deterministic_and_well_formed():
    config = SyntheticConfig(num_classes=3, items_per_class=20, audio_dim=12,
                             video_dim=8, seed=11)
    a = generate_synthetic(config)
    b = generate_synthetic(config)
    assert a.audio.tobytes() == b.audio.tobytes()
    assert a.video.tobytes() == b.video.tobytes()
    assert [i.record() for i in a.manifest.items] == [i.record() for i in b.manifest.items]
    assert len(a.manifest.items) == 60
    assert a.audio.shape == (60, 12)
    assert a.video.shape == (60, 8)
    assert len(a.manifest.class_names) == 3
    # every class appears in every split at these sizes
    for split in ("train", "val", "test"):
        genres = {item.genre for item in a.manifest.in_split(split)}
        assert genres == set(a.manifest.class_names)


def test_synthetic_layered_audio_shape():
    config = SyntheticConfig(num_classes=2, items_per_class=10, audio_dim=12,
                             video_dim=8, num_audio_layers=3, seed=0)
    dataset = generate_synthetic(config)
    assert dataset.audio.shape == (20, 3, 12)
    batch = dataset.audio_batch([0, 5, 7])
    assert isinstance(batch, list) and len(batch) == 3
    assert batch[0].shape == (3, 12)


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticConfig(pair_correlation=1.5)
    with pytest.raises(ValueError):
        SyntheticConfig(class_separation=-0.1)


def test_dataset_save_load_round_trip(tmp_path):
    config = SyntheticConfig(num_classes=2, items_per_class=15, audio_dim=10,
                             video_dim=6, seed=4)
    dataset = generate_synthetic(config)
    dataset.save(tmp_path)
    loaded = Dataset.load(tmp_path)
    assert loaded.audio.tobytes() == dataset.audio.tobytes()
    assert loaded.video.tobytes() == dataset.video.tobytes()
    assert loaded.manifest == dataset.manifest
    # a second save of the loaded dataset is byte-identical
    loaded.save(tmp_path)
    assert Dataset.load(tmp_path).audio.tobytes() == dataset.audio.tobytes()
