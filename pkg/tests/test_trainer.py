import numpy as np
import pytest

from mvret import autodiff as ad
from mvret.autodiff import AdamWConfig, AdamWState
from mvret.data import generate_synthetic
from mvret.losses import LossWeights
from mvret.model import ModelConfig, init_params, param_groups
from mvret.trainer import (Checkpoint, TrainConfig, evaluate_split,
                           load_checkpoint, save_checkpoint, train, _batch_loss)

from .conftest import TINY_MODEL, TINY_SYNTH, TINY_TRAIN


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(train_alpha=1.5)
    with pytest.raises(ValueError):
        TrainConfig(temperature=0.0)


def test_train_config_accepts_weights_dict():
    config = TrainConfig(loss_weights={"ssl_z": 1.0, "sup_z": 0.0,
                                       "ssl_h": 1.0, "sup_h": 0.0})
    assert config.loss_weights == LossWeights(1.0, 0.0, 1.0, 0.0)


def test_zero_learning_rate_is_a_fixed_point(tiny_dataset):
    config = TrainConfig(epochs=2, batch_size=32, learning_rate=0.0,
                         weight_decay=0.0, seed=9)
    checkpoint, log = train(tiny_dataset, TINY_MODEL, config)
    reference = init_params(TINY_MODEL, seed=_init_seed(9))
    for name in reference:
        assert np.array_equal(checkpoint.params[name], reference[name])
    # validation loss cannot move if parameters never move
    vals = [epoch["val"]["total"] for epoch in log.epochs]
    assert vals[0] == vals[1]


def _init_seed(seed):
    children = np.random.SeedSequence(seed).spawn(3)
    return int(children[2].generate_state(1)[0])


def test_single_small_step_decreases_batch_loss(tiny_dataset):
    """One AdamW step at lr=1e-5 on a fixed batch lowers that batch's loss."""
    manifest = tiny_dataset.manifest
    items = manifest.in_split("train")[:16]
    rows = [item.row for item in items]
    labels = np.array([manifest.class_index(item.genre) for item in items])
    decreased = 0
    for seed in range(20):
        params = init_params(TINY_MODEL, seed=seed)

        def loss_at(p):
            _, _, _, b = _batch_loss(tiny_dataset, rows, labels, p, TINY_MODEL,
                                     0.5, 0.1, LossWeights(), "eval", None)
            return b.total

        before = loss_at(params)
        tape, leaves, total, _ = _batch_loss(tiny_dataset, rows, labels, params,
                                             TINY_MODEL, 0.5, 0.1, LossWeights(),
                                             "eval", None)
        tape.backward(total)
        grads = {name: leaves[name].grad for name in params}
        state = AdamWState(AdamWConfig(lr=1e-5, weight_decay=0.0))
        ad.adamw_step(params, grads, state)
        decreased += loss_at(params) < before
    assert decreased == 20


def test_one_step_touches_every_parameter_group(tiny_dataset):
    manifest = tiny_dataset.manifest
    items = manifest.in_split("train")[:32]
    rows = [item.row for item in items]
    labels = np.array([manifest.class_index(item.genre) for item in items])
    params = init_params(TINY_MODEL, seed=1)
    before = {k: v.copy() for k, v in params.items()}
    tape, leaves, total, _ = _batch_loss(tiny_dataset, rows, labels, params,
                                         TINY_MODEL, 0.5, 0.1, LossWeights(),
                                         "eval", None)
    tape.backward(total)
    grads = {name: leaves[name].grad for name in params}
    state = AdamWState(AdamWConfig())
    ad.adamw_step(params, grads, state)
    for group, names in param_groups(params).items():
        assert any(not np.array_equal(params[n], before[n]) for n in names), group


def test_evaluate_split_is_deterministic(tiny_dataset):
    params = init_params(TINY_MODEL, seed=2)
    a = evaluate_split(params, TINY_MODEL, tiny_dataset, "val", 0.5, 0.1, 32)
    b = evaluate_split(params, TINY_MODEL, tiny_dataset, "val", 0.5, 0.1, 32)
    assert a == b
    assert all(v >= 0.0 for v in a.as_dict().values())


def test_evaluate_split_empty_raises(tiny_dataset):
    params = init_params(TINY_MODEL, seed=0)
    with pytest.raises(ValueError):
        evaluate_split(params, TINY_MODEL, tiny_dataset, "nosuch", 0.5, 0.1, 32)


def test_training_progresses_and_tracks_best_epoch(tiny_dataset):
    checkpoint, log = train(tiny_dataset, TINY_MODEL, TINY_TRAIN)
    assert len(log.epochs) == TINY_TRAIN.epochs
    assert 0 <= log.best_epoch < TINY_TRAIN.epochs
    assert checkpoint.epoch == log.best_epoch
    best_val = min(epoch["val"]["total"] for epoch in log.epochs)
    assert log.epochs[log.best_epoch]["val"]["total"] == best_val
    assert len(log.wall_clock) == TINY_TRAIN.epochs


def test_same_seed_runs_are_identical(tiny_dataset, tmp_path):
    ckpt_a, log_a = train(tiny_dataset, TINY_MODEL, TINY_TRAIN)
    ckpt_b, log_b = train(tiny_dataset, TINY_MODEL, TINY_TRAIN)
    assert log_a.canonical() == log_b.canonical()
    save_checkpoint(tmp_path / "a.mvck", ckpt_a)
    save_checkpoint(tmp_path / "b.mvck", ckpt_b)
    assert (tmp_path / "a.mvck").read_bytes() == (tmp_path / "b.mvck").read_bytes()


def test_different_seeds_differ(tiny_dataset):
    _, log_a = train(tiny_dataset, TINY_MODEL, TINY_TRAIN)
    other = TrainConfig(epochs=TINY_TRAIN.epochs, batch_size=TINY_TRAIN.batch_size,
                        seed=TINY_TRAIN.seed + 1)
    _, log_b = train(tiny_dataset, TINY_MODEL, other)
    assert log_a.canonical() != log_b.canonical()


def test_checkpoint_round_trip_bitwise(tiny_checkpoint, tmp_path):
    path = tmp_path / "ckpt.mvck"
    save_checkpoint(path, tiny_checkpoint)
    loaded = load_checkpoint(path)
    assert loaded.model_config == tiny_checkpoint.model_config
    assert loaded.epoch == tiny_checkpoint.epoch
    assert loaded.seed == tiny_checkpoint.seed
    assert loaded.train_alpha == tiny_checkpoint.train_alpha
    assert loaded.temperature == tiny_checkpoint.temperature
    assert set(loaded.params) == set(tiny_checkpoint.params)
    for name in loaded.params:
        assert loaded.params[name].tobytes() == tiny_checkpoint.params[name].tobytes()
    assert loaded.opt_state.step_count == tiny_checkpoint.opt_state.step_count
    for name in tiny_checkpoint.opt_state.m:
        assert loaded.opt_state.m[name].tobytes() == tiny_checkpoint.opt_state.m[name].tobytes()
        assert loaded.opt_state.v[name].tobytes() == tiny_checkpoint.opt_state.v[name].tobytes()
    # save -> load -> save is byte-identical
    save_checkpoint(tmp_path / "again.mvck", loaded)
    assert (tmp_path / "again.mvck").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.mvck"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_loaded_checkpoint_evaluates_identically(tiny_dataset, tiny_checkpoint, tmp_path):
    path = tmp_path / "ckpt.mvck"
    save_checkpoint(path, tiny_checkpoint)
    loaded = load_checkpoint(path)
    direct = evaluate_split(tiny_checkpoint.params, TINY_MODEL, tiny_dataset,
                            "val", 0.5, 0.1, 32)
    via_disk = evaluate_split(loaded.params, loaded.model_config, tiny_dataset,
                              "val", 0.5, 0.1, 32)
    assert direct == via_disk


def test_zeroed_supervised_weights_drop_supervised_terms(tiny_dataset):
    """With supervised loss weights zero, the objective is the ssl terms only."""
    ssl_only = TrainConfig(epochs=1, batch_size=32, seed=5,
                           loss_weights=LossWeights(1.0, 0.0, 1.0, 0.0))
    _, log = train(tiny_dataset, TINY_MODEL, ssl_only)
    epoch = log.epochs[0]["train"]
    assert epoch["total"] == pytest.approx(epoch["l_ssl_z"] + epoch["l_ssl_h"], abs=1e-12)
    _, full_log = train(tiny_dataset, TINY_MODEL,
                        TrainConfig(epochs=1, batch_size=32, seed=5))
    assert full_log.epochs[0]["train"]["total"] != epoch["total"]


def test_train_requires_populated_splits():
    config = TINY_SYNTH
    dataset = generate_synthetic(config)
    for item in dataset.manifest.items:
        if item.split == "val":
            item.split = "train"
    with pytest.raises(ValueError, match="val"):
        train(dataset, TINY_MODEL, TINY_TRAIN)
