"""Dataset model: taxonomy, manifests, feature files, splits, sampling, synthesis.

On-disk layout of a dataset directory::

    manifest.json   header: dims, layer count, class names, split counts
    items.jsonl     one record per clip: id, genre, split, row index
    audio.fvec      feature binary, rows = num_items * max(1, num_audio_layers)
    video.fvec      feature binary, rows = num_items

Feature binary format (documented bit-exactly): magic ``MVRF`` (4 bytes),
then three little-endian uint32 fields (version=1, rows, cols), then
rows*cols little-endian float32 values, row-major. Features are stored at
32-bit and promoted to 64-bit for all numerics.

All JSON is serialized canonically (sorted keys, compact separators) so a
load -> save round trip is byte-identical.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

FEATURE_MAGIC = b"MVRF"
FEATURE_VERSION = 1
SPLITS = ("train", "val", "test")


class TaxonomyError(ValueError):
    """An original label string has no entry in the taxonomy."""


class FeatureFormatError(ValueError):
    """A feature file failed validation; message includes the byte offset."""


class SamplingError(ValueError):
    """A class required by the balanced sampler is empty in the split."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Genre taxonomy
# ---------------------------------------------------------------------------

@dataclass
class GenreTaxonomy:
    """Condensed genre classes and the original-label -> class mapping."""

    classes: list[str]
    mapping: dict[str, str]

    @classmethod
    def load(cls, path: str | Path | None = None) -> "GenreTaxonomy":
        """Load from a JSON file, or the bundled 11-class music genre taxonomy."""
        if path is None:
            text = resources.files("mvret").joinpath("taxonomy.json").read_text()
        else:
            text = Path(path).read_text()
        doc = json.loads(text)
        tax = cls(classes=list(doc["classes"]), mapping=dict(doc["mapping"]))
        for original, condensed in tax.mapping.items():
            if condensed not in tax.classes:
                raise TaxonomyError(f"'{original}' maps to unknown class '{condensed}'")
        return tax

    def class_index(self, name: str) -> int:
        return self.classes.index(name)


def condense_labels(original_labels: list[str], taxonomy: GenreTaxonomy) -> str | None:
    """Condensed class for a single-label item; None rejects multi/zero-label items."""
    for label in original_labels:
        if label not in taxonomy.mapping:
            raise TaxonomyError(f"unknown original label: '{label}'")
    if len(original_labels) != 1:
        return None
    return taxonomy.mapping[original_labels[0]]


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class MusicVideoItem:
    id: str
    genre: str
    split: str
    row: int

    def record(self) -> dict:
        return {"genre": self.genre, "id": self.id, "row": self.row, "split": self.split}


@dataclass
class DatasetManifest:
    audio_dim: int
    video_dim: int
    num_audio_layers: int
    class_names: list[str]
    items: list[MusicVideoItem] = field(default_factory=list)

    def header(self) -> dict:
        counts = {split: 0 for split in SPLITS}
        for item in self.items:
            counts[item.split] += 1
        return {
            "audio_dim": self.audio_dim,
            "class_names": self.class_names,
            "num_audio_layers": self.num_audio_layers,
            "num_items": len(self.items),
            "split_counts": counts,
            "version": 1,
            "video_dim": self.video_dim,
        }

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "manifest.json").write_text(canonical_json(self.header()) + "\n")
        with open(directory / "items.jsonl", "w") as fh:
            for item in self.items:
                fh.write(canonical_json(item.record()) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "DatasetManifest":
        directory = Path(directory)
        header = json.loads((directory / "manifest.json").read_text())
        items = []
        with open(directory / "items.jsonl") as fh:
            for line in fh:
                rec = json.loads(line)
                items.append(MusicVideoItem(rec["id"], rec["genre"], rec["split"], rec["row"]))
        manifest = cls(header["audio_dim"], header["video_dim"],
                       header["num_audio_layers"], list(header["class_names"]), items)
        if header["num_items"] != len(items):
            raise ValueError(f"header claims {header['num_items']} items, found {len(items)}")
        return manifest

    def in_split(self, split: str) -> list[MusicVideoItem]:
        return [item for item in self.items if item.split == split]

    def by_id(self, item_id: str) -> MusicVideoItem:
        for item in self.items:
            if item.id == item_id:
                return item
        raise KeyError(f"unknown item id: {item_id}")

    def class_index(self, genre: str) -> int:
        return self.class_names.index(genre)


# ---------------------------------------------------------------------------
# Feature binary format
# ---------------------------------------------------------------------------

def write_features(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise FeatureFormatError(f"features must be 2-D, got shape {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())


def read_features(path: str | Path, expect_cols: int | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise FeatureFormatError(f"bad magic at byte 0: {raw[:4]!r}")
    if len(raw) < 16:
        raise FeatureFormatError(f"truncated header: file ends at byte {len(raw)}, need 16")
    version, rows, cols = struct.unpack("<III", raw[4:16])
    if version != FEATURE_VERSION:
        raise FeatureFormatError(f"unsupported version {version} at byte 4")
    expected = 16 + rows * cols * 4
    if len(raw) != expected:
        raise FeatureFormatError(
            f"truncated data: file ends at byte {len(raw)}, expected {expected}")
    if expect_cols is not None and cols != expect_cols:
        raise FeatureFormatError(
            f"dimension conflict at byte 12: file has {cols} columns, manifest says {expect_cols}")
    return np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=16).reshape(rows, cols)


# ---------------------------------------------------------------------------
# Dataset = manifest + feature arrays
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    manifest: DatasetManifest
    audio: np.ndarray  # (N, audio_dim) or (N, L, audio_dim) float64
    video: np.ndarray  # (N, video_dim) float64

    @classmethod
    def load(cls, directory: str | Path) -> "Dataset":
        manifest = DatasetManifest.load(directory)
        directory = Path(directory)
        audio = read_features(directory / "audio.fvec", manifest.audio_dim).astype(np.float64)
        video = read_features(directory / "video.fvec", manifest.video_dim).astype(np.float64)
        n = len(manifest.items)
        layers = manifest.num_audio_layers
        if layers > 0:
            if audio.shape[0] != n * layers:
                raise FeatureFormatError(
                    f"audio rows {audio.shape[0]} != items {n} x layers {layers}")
            audio = audio.reshape(n, layers, manifest.audio_dim)
        elif audio.shape[0] != n or video.shape[0] != n:
            raise FeatureFormatError(
                f"feature rows ({audio.shape[0]} audio, {video.shape[0]} video) != {n} items")
        return cls(manifest, audio, video)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        self.manifest.save(directory)
        audio = self.audio
        if audio.ndim == 3:
            audio = audio.reshape(-1, audio.shape[-1])
        write_features(directory / "audio.fvec", audio)
        write_features(directory / "video.fvec", self.video)

    def audio_batch(self, rows: list[int]):
        """Audio features for item rows; a list of per-layer matrices when layered."""
        if self.audio.ndim == 3:
            sub = self.audio[rows]
            return [sub[:, l, :] for l in range(sub.shape[1])]
        return self.audio[rows]

    def video_batch(self, rows: list[int]) -> np.ndarray:
        return self.video[rows]


# ---------------------------------------------------------------------------
# Stratified splitting
# ---------------------------------------------------------------------------

def stratified_split(items: list[MusicVideoItem], fractions: tuple[float, float, float],
                     seed: int) -> list[MusicVideoItem]:
    """Assign train/val/test splits class by class, deterministic under seed.

    Within each class the item order is shuffled and counts are allocated by
    largest remainder, so per-class counts deviate from the ideal fraction
    by at most one item.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    rng = np.random.Generator(np.random.PCG64(seed))
    by_class: dict[str, list[MusicVideoItem]] = {}
    for item in items:
        by_class.setdefault(item.genre, []).append(item)
    for genre in sorted(by_class):
        members = by_class[genre]
        if len(members) < len(SPLITS):
            warnings.warn(f"class '{genre}' has only {len(members)} items; "
                          "cannot populate every split")
        order = rng.permutation(len(members))
        ideal = [len(members) * f for f in fractions]
        counts = [int(np.floor(x)) for x in ideal]
        remainders = sorted(range(len(SPLITS)),
                            key=lambda i: (-(ideal[i] - counts[i]), i))
        for i in remainders[: len(members) - sum(counts)]:
            counts[i] += 1
        cursor = 0
        for split, count in zip(SPLITS, counts):
            for idx in order[cursor:cursor + count]:
                members[idx].split = split
            cursor += count
    return items


# ---------------------------------------------------------------------------
# Class-balanced sampling
# ---------------------------------------------------------------------------

def balanced_batch(manifest: DatasetManifest, split: str, batch_size: int,
                   rng: np.random.Generator) -> list[str]:
    """One batch of item ids: per slot, uniform class draw then uniform item draw."""
    by_class: dict[str, list[str]] = {name: [] for name in manifest.class_names}
    for item in manifest.in_split(split):
        by_class[item.genre].append(item.id)
    for name, members in by_class.items():
        if not members:
            raise SamplingError(f"class '{name}' has no items in split '{split}'")
    names = manifest.class_names
    ids = []
    for _ in range(batch_size):
        members = by_class[names[rng.integers(len(names))]]
        ids.append(members[rng.integers(len(members))])
    return ids


def epoch_batches(manifest: DatasetManifest, split: str, batch_size: int,
                  rng: np.random.Generator) -> list[list[str]]:
    """ceil(|split| / batch_size) balanced batches (sampling with replacement)."""
    n = len(manifest.in_split(split))
    n_batches = (n + batch_size - 1) // batch_size
    return [balanced_batch(manifest, split, batch_size, rng) for _ in range(n_batches)]


# ---------------------------------------------------------------------------
# Synthetic dataset generator
# ---------------------------------------------------------------------------

@dataclass
class SyntheticConfig:
    """Knobs for the synthetic feature generator.

    ``pair_correlation`` scales a latent identity vector shared between the
    two modalities of a pair (how identifiable the exact pair is);
    ``class_separation`` scales per-class center offsets (how identifiable
    the class is); ``noise_level`` scales independent per-modality noise.
    """

    num_classes: int = 8
    items_per_class: int = 250
    audio_dim: int = 64
    video_dim: int = 32
    pair_correlation: float = 0.9
    class_separation: float = 1.0
    noise_level: float = 0.5
    num_audio_layers: int = 0
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.pair_correlation <= 1.0:
            raise ValueError("pair_correlation must be in [0, 1]")
        if self.class_separation < 0.0:
            raise ValueError("class_separation must be >= 0")
        if self.audio_dim <= 0 or self.video_dim <= 0:
            raise ValueError("feature dims must be positive")


def _synthetic_class_names(num_classes: int) -> list[str]:
    taxonomy = GenreTaxonomy.load()
    if num_classes <= len(taxonomy.classes):
        return taxonomy.classes[:num_classes]
    return [f"class{c:02d}" for c in range(num_classes)]


# Unit conventions of the generator: pair_correlation and class_separation are
# multiplied by these fixed amplitudes so that at (0.9, 1.0) the pair signal
# dominates in-batch discrimination while the class signal stays learnable.
PAIR_AMPLITUDE = 1.5
CLASS_AMPLITUDE = 3.0


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Deterministic synthetic dataset with controllable pair and class signal."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    names = _synthetic_class_names(config.num_classes)
    latent_dim = min(config.audio_dim, config.video_dim)
    proj_a = rng.standard_normal((latent_dim, config.audio_dim)) / np.sqrt(latent_dim)
    proj_v = rng.standard_normal((latent_dim, config.video_dim)) / np.sqrt(latent_dim)
    centers_a = rng.standard_normal((config.num_classes, config.audio_dim))
    centers_v = rng.standard_normal((config.num_classes, config.video_dim))
    centers_a /= np.linalg.norm(centers_a, axis=1, keepdims=True)
    centers_v /= np.linalg.norm(centers_v, axis=1, keepdims=True)

    items: list[MusicVideoItem] = []
    audio_rows = []
    video_rows = []
    row = 0
    for c in range(config.num_classes):
        for i in range(config.items_per_class):
            latent = rng.standard_normal(latent_dim)
            a = (PAIR_AMPLITUDE * config.pair_correlation * (latent @ proj_a)
                 + CLASS_AMPLITUDE * config.class_separation * centers_a[c]
                 + config.noise_level * rng.standard_normal(config.audio_dim))
            v = (PAIR_AMPLITUDE * config.pair_correlation * (latent @ proj_v)
                 + CLASS_AMPLITUDE * config.class_separation * centers_v[c]
                 + config.noise_level * rng.standard_normal(config.video_dim))
            if config.num_audio_layers > 0:
                stack = np.stack([a + 0.1 * rng.standard_normal(config.audio_dim)
                                  for _ in range(config.num_audio_layers)])
                audio_rows.append(stack)
            else:
                audio_rows.append(a)
            video_rows.append(v)
            items.append(MusicVideoItem(f"mv{row:06d}", names[c], "train", row))
            row += 1

    stratified_split(items, config.fractions, config.seed + 1)
    manifest = DatasetManifest(config.audio_dim, config.video_dim,
                               config.num_audio_layers, names, items)
    audio = np.stack(audio_rows).astype(np.float32).astype(np.float64)
    video = np.stack(video_rows).astype(np.float32).astype(np.float64)
    return Dataset(manifest, audio, video)
