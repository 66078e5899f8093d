"""Training loop: balanced batches -> forward -> four-part loss -> AdamW.

After every epoch the validation split is scored sequentially (no class
balancing, eval mode) and the parameters with the lowest validation total
loss are kept. Three independent RNG streams (sampler, dropout, init) are
derived from one master seed so runs are reproducible and changing the
batch size does not perturb dropout masks.

Checkpoints use a purpose-built binary format (no timestamps, canonical
key order) so identical runs produce byte-identical files:
magic ``MVCK``, uint32 version, uint64 metadata length, canonical-JSON
metadata (model config, training settings, epoch, array index), then the
indexed float64 arrays concatenated little-endian in index order.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamWConfig, AdamWState, Tape
from .data import Dataset, canonical_json
from .losses import LossBreakdown, LossWeights, total_loss
from .model import ModelConfig, forward_full, init_params

CHECKPOINT_MAGIC = b"MVCK"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 0.001
    weight_decay: float = 0.01
    train_alpha: float = 0.5
    temperature: float = 0.1
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.train_alpha <= 1.0:
            raise ValueError("train_alpha must be in [0, 1]")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # {"train": {...}, "val": {...}} per epoch
    best_epoch: int = -1
    wall_clock: list = field(default_factory=list)

    def canonical(self) -> str:
        """Deterministic log document; wall-clock timings deliberately excluded."""
        return canonical_json({"best_epoch": self.best_epoch, "epochs": self.epochs}) + "\n"


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    opt_state: AdamWState
    epoch: int
    seed: int
    train_alpha: float
    temperature: float


class TrainingDiverged(RuntimeError):
    pass


def _rng_streams(seed: int):
    children = np.random.SeedSequence(seed).spawn(3)
    return (np.random.Generator(np.random.PCG64(children[0])),  # sampler
            np.random.Generator(np.random.PCG64(children[1])),  # dropout
            int(children[2].generate_state(1)[0]))               # init seed


def _batch_loss(dataset: Dataset, rows: list[int], labels: np.ndarray,
                params: dict[str, np.ndarray], config: ModelConfig, alpha: float,
                tau: float, weights: LossWeights, mode: str, rng):
    tape = Tape()
    leaves = {name: tape.leaf(arr) for name, arr in sorted(params.items())}
    embeddings = forward_full(tape, dataset.audio_batch(rows), dataset.video_batch(rows),
                              leaves, config, alpha, mode, rng)
    total, breakdown = total_loss(embeddings, labels, tau, weights)
    return tape, leaves, total, breakdown


def evaluate_split(params: dict[str, np.ndarray], config: ModelConfig, dataset: Dataset,
                   split: str, alpha: float, tau: float, batch_size: int,
                   weights: LossWeights | None = None) -> LossBreakdown:
    """Eval-mode loss over sequential batches, item-weighted across batches."""
    items = dataset.manifest.in_split(split)
    if not items:
        raise ValueError(f"split '{split}' is empty")
    weights = weights or LossWeights()
    sums = np.zeros(5)
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        rows = [item.row for item in chunk]
        labels = np.array([dataset.manifest.class_index(item.genre) for item in chunk])
        _, _, _, breakdown = _batch_loss(dataset, rows, labels, params, config,
                                         alpha, tau, weights, "eval", None)
        vec = np.array([breakdown.l_ssl_z, breakdown.l_sup_z, breakdown.l_ssl_h,
                        breakdown.l_sup_h, breakdown.total])
        sums += len(chunk) * vec
    sums /= len(items)
    return LossBreakdown(*sums)


def train(dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig,
          log_progress=None) -> tuple[Checkpoint, TrainLog]:
    """Run the full loop and return the best-validation checkpoint plus the log."""
    from .data import epoch_batches

    manifest = dataset.manifest
    for split in ("train", "val"):
        if not manifest.in_split(split):
            raise ValueError(f"split '{split}' is empty")

    sampler_rng, dropout_rng, init_seed = _rng_streams(train_config.seed)
    params = init_params(model_config, init_seed)
    opt = AdamWState(AdamWConfig(lr=train_config.learning_rate,
                                 weight_decay=train_config.weight_decay))
    log = TrainLog()
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_opt = AdamWState(opt.config, 0, {}, {})
    best_epoch = -1

    for epoch in range(train_config.epochs):
        tic = time.monotonic()
        train_sums = np.zeros(5)
        n_train = 0
        batches = epoch_batches(manifest, "train", train_config.batch_size, sampler_rng)
        for batch_idx, ids in enumerate(batches):
            items = [manifest.by_id(i) for i in ids]
            rows = [item.row for item in items]
            labels = np.array([manifest.class_index(item.genre) for item in items])
            tape, leaves, total, breakdown = _batch_loss(
                dataset, rows, labels, params, model_config, train_config.train_alpha,
                train_config.temperature, train_config.loss_weights, "train", dropout_rng)
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}: "
                    f"{breakdown.as_dict()}")
            tape.backward(total)
            grads = {name: leaves[name].grad for name in params}
            ad.adamw_step(params, grads, opt)
            train_sums += len(ids) * np.array([breakdown.l_ssl_z, breakdown.l_sup_z,
                                               breakdown.l_ssl_h, breakdown.l_sup_h,
                                               breakdown.total])
            n_train += len(ids)

        train_breakdown = LossBreakdown(*(train_sums / n_train))
        val_breakdown = evaluate_split(params, model_config, dataset, "val",
                                       train_config.train_alpha, train_config.temperature,
                                       train_config.batch_size, train_config.loss_weights)
        log.epochs.append({"train": train_breakdown.as_dict(),
                           "val": val_breakdown.as_dict()})
        log.wall_clock.append(time.monotonic() - tic)
        if val_breakdown.total < best_val:
            best_val = val_breakdown.total
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            best_opt = AdamWState(opt.config, opt.step_count,
                                  {k: v.copy() for k, v in opt.m.items()},
                                  {k: v.copy() for k, v in opt.v.items()})
        if log_progress is not None:
            log_progress(epoch, train_breakdown, val_breakdown)

    log.best_epoch = best_epoch
    checkpoint = Checkpoint(model_config, best_params, best_opt, best_epoch,
                            train_config.seed, train_config.train_alpha,
                            train_config.temperature)
    return checkpoint, log


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def _opt_arrays(state: AdamWState) -> dict[str, np.ndarray]:
    out = {}
    for name, arr in state.m.items():
        out[f"opt.m/{name}"] = arr
    for name, arr in state.v.items():
        out[f"opt.v/{name}"] = arr
    return out


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> None:
    arrays = {f"param/{k}": v for k, v in checkpoint.params.items()}
    arrays.update(_opt_arrays(checkpoint.opt_state))
    index = [{"name": k, "shape": list(arrays[k].shape)} for k in sorted(arrays)]
    meta = {
        "arrays": index,
        "epoch": checkpoint.epoch,
        "model_config": asdict(checkpoint.model_config),
        "opt": asdict(checkpoint.opt_state.config) | {"step_count": checkpoint.opt_state.step_count},
        "seed": checkpoint.seed,
        "temperature": checkpoint.temperature,
        "train_alpha": checkpoint.train_alpha,
        "version": CHECKPOINT_VERSION,
    }
    meta_bytes = canonical_json(meta).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        for entry in index:
            fh.write(np.ascontiguousarray(arrays[entry["name"]], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: bad magic {raw[:4]!r}")
    version, meta_len = struct.unpack("<IQ", raw[4:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    meta = json.loads(raw[16:16 + meta_len])
    offset = 16 + meta_len
    arrays = {}
    for entry in meta["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = np.frombuffer(
            raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += count * 8
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    opt_cfg = dict(meta["opt"])
    step_count = opt_cfg.pop("step_count")
    opt = AdamWState(AdamWConfig(**opt_cfg), step_count,
                     {k[len("opt.m/"):]: v for k, v in arrays.items() if k.startswith("opt.m/")},
                     {k[len("opt.v/"):]: v for k, v in arrays.items() if k.startswith("opt.v/")})
    return Checkpoint(ModelConfig(**meta["model_config"]), params, opt, meta["epoch"],
                      meta["seed"], meta["train_alpha"], meta["temperature"])
