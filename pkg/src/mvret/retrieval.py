"""Alpha-controlled cross-modal retrieval and the evaluation protocols.

A corpus is embedded once into the two projected task-specific embeddings
``u`` (self-supervised path) and ``v`` (supervised path) per modality;
any alpha can then be served by mixing ``(1 - alpha) u + alpha v`` at
query time without re-running the network.

Two evaluation protocols:

* self-supervised: a retrieval succeeds when it returns the query's exact
  paired clip; scored as R@K and MRR over disjoint fixed-size subsets and
  averaged across subsets.
* genre-supervised: a retrieval succeeds when it returns any clip sharing
  the query's genre label; scored as P@K and MRR on the full corpus,
  macro-averaged over classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .data import Dataset, canonical_json
from .model import forward_branch, project
from .trainer import Checkpoint

DIRECTIONS = ("v2m", "m2v")
DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(11))


class ProtocolError(ValueError):
    """The corpus cannot support the requested evaluation protocol."""


@dataclass
class EmbeddedCorpus:
    ids: list[str]
    genres: list[str]
    labels: np.ndarray  # class indices aligned with ids
    class_names: list[str]
    u_A: np.ndarray
    v_A: np.ndarray
    u_V: np.ndarray
    v_V: np.ndarray
    normalize_z: bool

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, item_id: str) -> int:
        try:
            return self.ids.index(item_id)
        except ValueError:
            raise KeyError(f"unknown item id: {item_id}") from None

    def combined(self, modality: str, alpha: float) -> np.ndarray:
        """Mixed embeddings for one modality at the given alpha."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        u, v = (self.u_A, self.v_A) if modality == "A" else (self.u_V, self.v_V)
        z = (1.0 - alpha) * u + alpha * v
        if self.normalize_z:
            norms = np.linalg.norm(z, axis=1, keepdims=True)
            z = z / np.maximum(norms, 1e-12)
        return z


def embed_corpus(checkpoint: Checkpoint, dataset: Dataset, split: str,
                 batch_size: int = 512) -> EmbeddedCorpus:
    """Eval-mode forward over a split, keeping the pre-mix u and v embeddings."""
    config = checkpoint.model_config
    manifest = dataset.manifest
    if config.audio_input_dim != manifest.audio_dim or config.video_input_dim != manifest.video_dim:
        raise ValueError(
            f"checkpoint dims ({config.audio_input_dim}, {config.video_input_dim}) do not "
            f"match manifest dims ({manifest.audio_dim}, {manifest.video_dim})")
    items = manifest.in_split(split)
    if not items:
        raise ValueError(f"split '{split}' is empty")

    blocks = {"u_A": [], "v_A": [], "u_V": [], "v_V": []}
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        rows = [item.row for item in chunk]
        tape = Tape()
        p = {name: tape.leaf(arr, requires_grad=False)
             for name, arr in sorted(checkpoint.params.items())}
        from .model import forward_full  # reuse the aggregation path for layered audio
        emb = forward_full(tape, dataset.audio_batch(rows), dataset.video_batch(rows),
                           p, config, 0.0, "eval", None)
        u_a, v_a = project(emb.q_ssl_A, emb.q_sup_A, p, "A", config)
        u_v, v_v = project(emb.q_ssl_V, emb.q_sup_V, p, "V", config)
        blocks["u_A"].append(u_a.value)
        blocks["v_A"].append(v_a.value)
        blocks["u_V"].append(u_v.value)
        blocks["v_V"].append(v_v.value)

    labels = np.array([manifest.class_index(item.genre) for item in items])
    return EmbeddedCorpus(
        ids=[item.id for item in items],
        genres=[item.genre for item in items],
        labels=labels,
        class_names=list(manifest.class_names),
        u_A=np.vstack(blocks["u_A"]), v_A=np.vstack(blocks["v_A"]),
        u_V=np.vstack(blocks["u_V"]), v_V=np.vstack(blocks["v_V"]),
        normalize_z=config.normalize_z)


def _cosine(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    qn = queries / np.maximum(np.linalg.norm(queries, axis=1, keepdims=True), 1e-12)
    cn = candidates / np.maximum(np.linalg.norm(candidates, axis=1, keepdims=True), 1e-12)
    return qn @ cn.T


def _modalities(direction: str) -> tuple[str, str]:
    if direction == "v2m":
        return "V", "A"
    if direction == "m2v":
        return "A", "V"
    raise ValueError(f"direction must be one of {DIRECTIONS}, got '{direction}'")


def rank(corpus: EmbeddedCorpus, query_id: str, direction: str, alpha: float,
         k: int | None = None) -> list[tuple[str, float]]:
    """Candidates of the opposite modality ordered by cosine similarity.

    Ties are broken by ascending item id; the query's own paired item stays
    in the candidate pool.
    """
    qmod, cmod = _modalities(direction)
    qi = corpus.index_of(query_id)
    scores = _cosine(corpus.combined(qmod, alpha)[qi:qi + 1],
                     corpus.combined(cmod, alpha))[0]
    order = sorted(range(len(corpus)), key=lambda j: (-scores[j], corpus.ids[j]))
    if k is not None:
        order = order[:max(k, 0)]
    return [(corpus.ids[j], float(scores[j])) for j in order]


def _ranks_of_true_pair(scores: np.ndarray, ids: list[str]) -> np.ndarray:
    """1-based rank of candidate i for query i under (-score, id) ordering."""
    n = scores.shape[0]
    ranks = np.empty(n, dtype=np.int64)
    for i in range(n):
        s = scores[i]
        better = s > s[i]
        tied = (s == s[i]) & np.array([ids[j] < ids[i] for j in range(n)])
        ranks[i] = 1 + int(np.count_nonzero(better | tied))
    return ranks


def eval_self_supervised(corpus: EmbeddedCorpus, alpha: float, ks=(1, 10),
                         subset_size: int | None = None, subset_count: int = 1,
                         seed: int = 0) -> dict[str, dict[str, float]]:
    """Exact-pair retrieval metrics averaged over disjoint seeded subsets."""
    n = len(corpus)
    if subset_size is None:
        subset_size = n
    if subset_size * subset_count > n:
        raise ProtocolError(
            f"need {subset_size * subset_count} items for {subset_count} subsets "
            f"of {subset_size}, corpus has {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    results = {d: {f"R@{k}": 0.0 for k in ks} | {"MRR": 0.0} for d in DIRECTIONS}
    for s in range(subset_count):
        subset = np.sort(order[s * subset_size:(s + 1) * subset_size])
        ids = [corpus.ids[j] for j in subset]
        for direction in DIRECTIONS:
            qmod, cmod = _modalities(direction)
            scores = _cosine(corpus.combined(qmod, alpha)[subset],
                             corpus.combined(cmod, alpha)[subset])
            ranks = _ranks_of_true_pair(scores, ids)
            for k in ks:
                results[direction][f"R@{k}"] += float(np.mean(ranks <= k))
            results[direction]["MRR"] += float(np.mean(1.0 / ranks))
    for direction in DIRECTIONS:
        for key in results[direction]:
            results[direction][key] /= subset_count
    return results


def eval_genre_supervised(corpus: EmbeddedCorpus, alpha: float,
                          ks=(1, 10), exclude_self: bool = False) -> dict[str, dict[str, float]]:
    """Same-label retrieval metrics on the full corpus, macro-averaged by class."""
    present = set(corpus.labels.tolist())
    for ci, name in enumerate(corpus.class_names):
        if ci not in present:
            raise ProtocolError(f"class '{name}' absent from the corpus")
    n = len(corpus)
    results = {}
    for direction in DIRECTIONS:
        qmod, cmod = _modalities(direction)
        scores = _cosine(corpus.combined(qmod, alpha), corpus.combined(cmod, alpha))
        per_class: dict[int, list[dict[str, float]]] = {}
        for i in range(n):
            s = scores[i].copy()
            pool = list(range(n))
            if exclude_self:
                pool.remove(i)
            order = sorted(pool, key=lambda j: (-s[j], corpus.ids[j]))
            same = np.array([corpus.labels[j] == corpus.labels[i] for j in order])
            row = {f"P@{k}": float(np.mean(same[:k])) for k in ks}
            first = int(np.argmax(same)) + 1 if same.any() else None
            row["MRR"] = 0.0 if first is None else 1.0 / first
            per_class.setdefault(int(corpus.labels[i]), []).append(row)
        keys = [f"P@{k}" for k in ks] + ["MRR"]
        macro = {key: float(np.mean([np.mean([r[key] for r in rows])
                                     for rows in per_class.values()]))
                 for key in keys}
        results[direction] = macro
    return results


# ---------------------------------------------------------------------------
# Sweeps and reports
# ---------------------------------------------------------------------------

@dataclass
class RetrievalReport:
    """Per-protocol, per-direction, per-alpha metric rows plus protocol settings."""

    rows: list[dict] = field(default_factory=list)
    corpus_size: int = 0
    subset_size: int | None = None
    subset_count: int = 1

    def series(self, protocol: str, direction: str, metric: str) -> list[tuple[float, float]]:
        points = [(row["alpha"], row["metrics"][metric]) for row in self.rows
                  if row["protocol"] == protocol and row["direction"] == direction]
        return sorted(points)

    def to_json(self) -> str:
        return canonical_json({"corpus_size": self.corpus_size, "rows": self.rows,
                               "subset_count": self.subset_count,
                               "subset_size": self.subset_size}) + "\n"

    def to_csv(self) -> str:
        metric_keys = sorted({key for row in self.rows for key in row["metrics"]})
        lines = [",".join(["protocol", "direction", "alpha"] + metric_keys)]
        for row in self.rows:
            cells = [row["protocol"], row["direction"], f"{row['alpha']:.1f}"]
            cells += [f"{row['metrics'].get(key, float('nan')):.6f}" for key in metric_keys]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def alpha_sweep(corpus: EmbeddedCorpus, alphas=DEFAULT_ALPHAS,
                protocols=("ssl", "genre"), ks=(1, 10),
                subset_size: int | None = None, subset_count: int = 1,
                seed: int = 0) -> RetrievalReport:
    """Run the chosen protocols at every alpha and collect a report."""
    report = RetrievalReport(corpus_size=len(corpus), subset_size=subset_size,
                             subset_count=subset_count)
    for alpha in alphas:
        if "ssl" in protocols:
            ssl = eval_self_supervised(corpus, alpha, ks, subset_size, subset_count, seed)
            for direction in DIRECTIONS:
                report.rows.append({"alpha": float(alpha), "direction": direction,
                                    "metrics": ssl[direction], "protocol": "ssl"})
        if "genre" in protocols:
            genre = eval_genre_supervised(corpus, alpha, ks)
            for direction in DIRECTIONS:
                report.rows.append({"alpha": float(alpha), "direction": direction,
                                    "metrics": genre[direction], "protocol": "genre"})
    return report


def select_optimal_alpha(report: RetrievalReport, protocol: str, metric: str,
                         direction: str = "v2m") -> float:
    """Alpha with the best metric value on the grid; ties go to the smaller alpha."""
    points = report.series(protocol, direction, metric)
    if not points:
        raise ProtocolError(f"report has no rows for protocol '{protocol}'")
    best_alpha, best_value = points[0]
    for alpha, value in points[1:]:
        if value > best_value:
            best_alpha, best_value = alpha, value
    return best_alpha
