"""Dual-branch embedding model with a user-controlled mixing weight.

Each modality branch is: shared MLP ``g`` -> task heads ``h_ssl`` / ``h_sup``
producing intermediate embeddings, then linear projectors ``p_ssl`` / ``p_sup``
whose outputs are mixed as ``z = (1 - alpha) * u + alpha * v``. The two
branches are architecturally identical (apart from input width) but hold
independent parameters. Audio inputs may optionally be a per-layer feature
stack combined through learnable softmax layer weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatchError, Tape, Var


@dataclass
class ModelConfig:
    """Network shapes and normalization switches.

    The documented real-data configuration is audio_input_dim=1024,
    video_input_dim=512, embed_dim=256; the defaults here are desk-scale
    for synthetic experiments.
    """

    audio_input_dim: int = 64
    video_input_dim: int = 32
    embed_dim: int = 32
    g_hidden_dims: tuple = (512, 512)
    h_hidden_dims: tuple = (256,)
    dropout_p: float = 0.4
    num_audio_layers: int = 0  # 0 disables layer-weight aggregation
    normalize_q: bool = True
    normalize_z: bool = True

    def __post_init__(self):
        self.g_hidden_dims = tuple(self.g_hidden_dims)
        self.h_hidden_dims = tuple(self.h_hidden_dims)
        dims = (self.audio_input_dim, self.video_input_dim, self.embed_dim,
                *self.g_hidden_dims, *self.h_hidden_dims)
        if any(d <= 0 for d in dims):
            raise ValueError(f"all dimensions must be positive: {dims}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.num_audio_layers < 0:
            raise ValueError("num_audio_layers must be >= 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


@dataclass
class EmbeddingSet:
    """Per-batch embeddings for both modalities at a given alpha."""

    q_ssl_A: Var
    q_sup_A: Var
    q_ssl_V: Var
    q_sup_V: Var
    z_A: Var
    z_V: Var
    alpha: float


def _linear_dims(config: ModelConfig, modality: str):
    """(name, in_dim, out_dim, has_relu_dropout) for every linear in one branch."""
    in_dim = config.audio_input_dim if modality == "A" else config.video_input_dim
    layers = []
    prev = in_dim
    for i, width in enumerate(config.g_hidden_dims):
        layers.append((f"g.{i}", prev, width, True))
        prev = width
    g_out = prev
    for head in ("h_ssl", "h_sup"):
        prev = g_out
        for i, width in enumerate(config.h_hidden_dims):
            layers.append((f"{head}.{i}", prev, width, True))
            prev = width
        layers.append((f"{head}.out", prev, config.embed_dim, False))
    layers.append(("p_ssl", config.embed_dim, config.embed_dim, False))
    layers.append(("p_sup", config.embed_dim, config.embed_dim, False))
    return layers


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Both branches' parameters, keyed e.g. 'A.g.0.W', 'V.p_sup.b'.

    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero,
    all drawn from one seeded stream in a fixed order.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, np.ndarray] = {}
    for modality in ("A", "V"):
        for name, fan_in, fan_out, _ in _linear_dims(config, modality):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            params[f"{modality}.{name}.W"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            params[f"{modality}.{name}.b"] = np.zeros((1, fan_out))
    if config.num_audio_layers > 0:
        params["A.layer_weights"] = np.zeros((1, config.num_audio_layers))
    return params


def _wrap_params(tape: Tape, params: dict[str, np.ndarray]) -> dict[str, Var]:
    return {name: tape.leaf(arr) for name, arr in sorted(params.items())}


def _linear(x: Var, p: dict[str, Var], key: str) -> Var:
    return ad.add(ad.matmul(x, p[f"{key}.W"]), p[f"{key}.b"])


def _mlp(x: Var, p: dict[str, Var], prefix: str, n_blocks: int,
         dropout_p: float, mode: str, rng) -> Var:
    out = x
    for i in range(n_blocks):
        out = _linear(out, p, f"{prefix}.{i}")
        out = ad.relu(out)
        out = ad.dropout(out, dropout_p, mode, rng)
    return out


def aggregate_layers(per_layer: list[Var], layer_weights: Var) -> Var:
    """Softmax-weighted convex combination of per-layer feature matrices."""
    return ad.aggregate_layers(per_layer, layer_weights)


def forward_branch(x: Var, p: dict[str, Var], modality: str, config: ModelConfig,
                   mode: str, rng) -> tuple[Var, Var]:
    """Intermediate (q_ssl, q_sup) for one branch; g output computed once."""
    in_dim = config.audio_input_dim if modality == "A" else config.video_input_dim
    if x.shape[1] != in_dim:
        raise ShapeMismatchError(
            f"branch {modality} expects {in_dim} input columns, got {x.shape[1]}")

    scoped = {name[len(modality) + 1:]: var for name, var in p.items()
              if name.startswith(modality + ".")}
    g_out = _mlp(x, scoped, "g", len(config.g_hidden_dims), config.dropout_p, mode, rng)
    qs = []
    for head in ("h_ssl", "h_sup"):
        h = _mlp(g_out, scoped, head, len(config.h_hidden_dims), config.dropout_p, mode, rng)
        q = _linear(h, scoped, f"{head}.out")
        if config.normalize_q:
            q = ad.l2_normalize_rows(q)
        qs.append(q)
    return qs[0], qs[1]


def project(q_ssl: Var, q_sup: Var, p: dict[str, Var], modality: str,
            config: ModelConfig) -> tuple[Var, Var]:
    """Projector outputs (u, v), normalized per config, before mixing."""
    scoped = {name[len(modality) + 1:]: var for name, var in p.items()
              if name.startswith(modality + ".")}
    u = _linear(q_ssl, scoped, "p_ssl")
    v = _linear(q_sup, scoped, "p_sup")
    if config.normalize_z:
        u = ad.l2_normalize_rows(u)
        v = ad.l2_normalize_rows(v)
    return u, v


def combine(q_ssl: Var, q_sup: Var, p: dict[str, Var], modality: str,
            config: ModelConfig, alpha: float) -> Var:
    """Mixed output embedding (1 - alpha) * u + alpha * v, then optional row norm."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    u, v = project(q_ssl, q_sup, p, modality, config)
    z = ad.add(ad.scale(u, 1.0 - alpha), ad.scale(v, alpha))
    if config.normalize_z:
        z = ad.l2_normalize_rows(z)
    return z


def forward_full(tape: Tape, audio, video, params: dict[str, np.ndarray] | dict[str, Var],
                 config: ModelConfig, alpha: float, mode: str = "eval",
                 rng: np.random.Generator | None = None) -> EmbeddingSet:
    """Full forward pass over an aligned batch of feature rows.

    ``audio`` is a batch x audio_dim array, or a list of num_audio_layers
    arrays when layer aggregation is enabled. Raw ndarray params are wrapped
    as tape leaves; pass pre-wrapped Vars to reuse leaves across calls.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(0))
    p = params if isinstance(next(iter(params.values())), Var) else _wrap_params(tape, params)

    if config.num_audio_layers > 0:
        layers = [tape.constant(a) for a in audio]
        if len(layers) != config.num_audio_layers:
            raise ShapeMismatchError(
                f"expected {config.num_audio_layers} audio layers, got {len(layers)}")
        x_a = aggregate_layers(layers, p["A.layer_weights"])
    else:
        x_a = tape.constant(audio)
    x_v = tape.constant(video)
    if x_a.shape[0] != x_v.shape[0]:
        raise ValueError(
            f"misaligned batches: {x_a.shape[0]} audio rows vs {x_v.shape[0]} video rows")

    q_ssl_a, q_sup_a = forward_branch(x_a, p, "A", config, mode, rng)
    q_ssl_v, q_sup_v = forward_branch(x_v, p, "V", config, mode, rng)
    z_a = combine(q_ssl_a, q_sup_a, p, "A", config, alpha)
    z_v = combine(q_ssl_v, q_sup_v, p, "V", config, alpha)
    return EmbeddingSet(q_ssl_a, q_sup_a, q_ssl_v, q_sup_v, z_a, z_v, alpha)


def param_groups(params: dict[str, np.ndarray]) -> dict[str, list[str]]:
    """Parameter names grouped by (modality, subnetwork), for perturbation tests."""
    groups: dict[str, list[str]] = {}
    for name in sorted(params):
        modality, rest = name.split(".", 1)
        net = rest.split(".")[0]
        groups.setdefault(f"{modality}.{net}", []).append(name)
    return groups
