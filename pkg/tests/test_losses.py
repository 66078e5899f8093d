import math

import numpy as np
import pytest

from mvret.autodiff import Tape, check_gradients
from mvret.losses import (LossWeights, infonce_directional, supcon_directional,
                          symmetrize, total_loss)
from mvret.model import EmbeddingSet

from .conftest import random_unit_rows
from .oracles import infonce_scalar, supcon_scalar, total_scalar


def _vars(tape, *arrays):
    return [tape.constant(a) for a in arrays]


def _embedding_set(tape, rng, n, d):
    mats = [random_unit_rows(rng, n, d) for _ in range(6)]
    return EmbeddingSet(*_vars(tape, *mats), alpha=0.5), mats


def test_infonce_single_pair_is_zero():
    tape = Tape()
    a, v = _vars(tape, np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    # N=1: the sole candidate is the positive, so -log softmax == 0
    assert infonce_directional(a, v, 0.1).item() == pytest.approx(0.0, abs=1e-15)


def test_infonce_identical_embeddings_is_log_n():
    tape = Tape()
    x = np.tile([[1.0, 0.0, 0.0]], (4, 1))
    a, v = _vars(tape, x, x)
    assert infonce_directional(a, v, 0.1).item() == pytest.approx(math.log(4.0), abs=1e-9)


def test_infonce_two_item_closed_form():
    # orthogonal unit pairs at tau=1: loss = log(1 + e^-1)
    tape = Tape()
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    a_var, v_var = _vars(tape, a, a)
    expected = math.log(1.0 + math.exp(-1.0))
    assert infonce_directional(a_var, v_var, 1.0).item() == pytest.approx(expected, abs=1e-12)


def test_supcon_distinct_labels_equals_infonce():
    rng = np.random.Generator(np.random.PCG64(5))
    a = random_unit_rows(rng, 5, 6)
    v = random_unit_rows(rng, 5, 6)
    tape = Tape()
    a_var, v_var = _vars(tape, a, v)
    labels = np.arange(5)
    sup = supcon_directional(a_var, v_var, labels, 0.1).item()
    nce = infonce_directional(a_var, v_var, 0.1).item()
    assert sup == nce  # identical weight matrices, identical computation


def test_supcon_matches_scalar_oracle():
    rng = np.random.Generator(np.random.PCG64(1))
    for trial in range(30):
        n = int(rng.integers(2, 9))
        a = random_unit_rows(rng, n, 5)
        v = random_unit_rows(rng, n, 5)
        labels = rng.integers(0, 3, n)
        tape = Tape()
        a_var, v_var = _vars(tape, a, v)
        got = supcon_directional(a_var, v_var, labels, 0.1).item()
        want = supcon_scalar(a.tolist(), v.tolist(), labels.tolist(), 0.1)
        assert got == pytest.approx(want, abs=1e-10)


def test_temperature_must_be_positive():
    tape = Tape()
    a, v = _vars(tape, np.eye(2), np.eye(2))
    for tau in (0.0, -0.1):
        with pytest.raises(ValueError):
            infonce_directional(a, v, tau)
        with pytest.raises(ValueError):
            supcon_directional(a, v, np.zeros(2), tau)


def test_symmetrize_averages_directions():
    tape = Tape()
    x = tape.constant([[3.0]])
    y = tape.constant([[1.0]])
    assert symmetrize(x, y).item() == 2.0


def test_total_loss_matches_scalar_oracle():
    rng = np.random.Generator(np.random.PCG64(2))
    for trial in range(100):
        n = int(rng.integers(1, 9))
        tau = [0.05, 0.1, 1.0][trial % 3]
        tape = Tape()
        embeddings, mats = _embedding_set(tape, rng, n, 4)
        labels = rng.integers(0, 3, n)
        total, breakdown = total_loss(embeddings, labels, tau)
        m = [mat.tolist() for mat in mats]  # EmbeddingSet order: ssl_A, sup_A, ssl_V, sup_V, z_A, z_V
        want = total_scalar(m[0], m[2], m[1], m[3], m[4], m[5], labels.tolist(), tau)
        for key, value in want.items():
            assert breakdown.as_dict()[key] == pytest.approx(value, abs=1e-10), key
        assert total.item() == breakdown.total


def test_total_is_exact_sum_of_components():
    rng = np.random.Generator(np.random.PCG64(3))
    tape = Tape()
    embeddings, _ = _embedding_set(tape, rng, 6, 4)
    labels = rng.integers(0, 2, 6)
    _, b = total_loss(embeddings, labels, 0.1)
    # the graph builds (ssl_z + sup_z) + (ssl_h + sup_h); assert that association
    assert b.total == (b.l_ssl_z + b.l_sup_z) + (b.l_ssl_h + b.l_sup_h)


def test_loss_weights_scale_components():
    rng = np.random.Generator(np.random.PCG64(4))
    tape = Tape()
    embeddings, _ = _embedding_set(tape, rng, 5, 4)
    labels = rng.integers(0, 2, 5)
    _, unweighted = total_loss(embeddings, labels, 0.1)
    _, ssl_only = total_loss(embeddings, labels, 0.1, LossWeights(1.0, 0.0, 1.0, 0.0))
    assert ssl_only.total == unweighted.l_ssl_z + unweighted.l_ssl_h


def test_batch_permutation_invariance():
    rng = np.random.Generator(np.random.PCG64(6))
    n = 7
    mats = [random_unit_rows(rng, n, 5) for _ in range(6)]
    labels = rng.integers(0, 3, n)
    perm = rng.permutation(n)

    def run(order):
        tape = Tape()
        embeddings = EmbeddingSet(*_vars(tape, *[m[order] for m in mats]), alpha=0.5)
        _, b = total_loss(embeddings, labels[order], 0.1)
        return b

    base = run(np.arange(n)).as_dict()
    shuffled = run(perm).as_dict()
    for key in base:
        assert shuffled[key] == pytest.approx(base[key], abs=1e-12)


def test_loss_gradients_match_finite_differences():
    rng = np.random.Generator(np.random.PCG64(7))
    n, d = 4, 3
    labels = rng.integers(0, 2, n)
    init = {name: random_unit_rows(rng, n, d)
            for name in ("q_ssl_A", "q_sup_A", "q_ssl_V", "q_sup_V", "z_A", "z_V")}

    def f(params):
        tape = Tape()
        leaves = {name: tape.leaf(arr) for name, arr in sorted(params.items())}
        embeddings = EmbeddingSet(leaves["q_ssl_A"], leaves["q_sup_A"],
                                  leaves["q_ssl_V"], leaves["q_sup_V"],
                                  leaves["z_A"], leaves["z_V"], alpha=0.5)
        total, _ = total_loss(embeddings, labels, 0.1)
        tape.backward(total)
        return total.item(), {name: leaves[name].grad for name in leaves}

    assert check_gradients(f, init) <= 1e-5
