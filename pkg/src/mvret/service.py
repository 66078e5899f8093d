"""Read-only HTTP retrieval service over a checkpoint and embedded corpus.

All state is built at startup and never mutated; every endpoint is a pure
read. Scores are rounded to 6 decimals in transport while ranking happens
at full precision. CORS is open since this is a local companion tool.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware

from .data import Dataset
from .retrieval import (DEFAULT_ALPHAS, alpha_sweep, embed_corpus, rank)
from .trainer import load_checkpoint


def create_app(ckpt_path: str, data_dir: str, split: str = "test",
               sweep_subset_size: int | None = None,
               sweep_subset_count: int = 1) -> FastAPI:
    checkpoint = load_checkpoint(ckpt_path)
    dataset = Dataset.load(data_dir)
    corpus = embed_corpus(checkpoint, dataset, split)
    genre_by_id = dict(zip(corpus.ids, corpus.genres))
    sweep_cache: dict[None, object] = {}

    app = FastAPI(title="mvret retrieval service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["GET"],
                       allow_headers=["*"])

    @app.get("/meta")
    def meta():
        config = checkpoint.model_config
        return {
            "audio_dim": config.audio_input_dim,
            "video_dim": config.video_input_dim,
            "embed_dim": config.embed_dim,
            "class_names": corpus.class_names,
            "corpus_size": len(corpus),
            "split": split,
            "seed": checkpoint.seed,
            "train_alpha": checkpoint.train_alpha,
            "temperature": checkpoint.temperature,
        }

    @app.get("/items")
    def items(class_: str | None = Query(default=None, alias="class"),
              limit: int = 100, offset: int = 0):
        if class_ is not None and class_ not in corpus.class_names:
            raise HTTPException(400, f"unknown class '{class_}'")
        matching = [{"id": i, "genre": g, "split": split}
                    for i, g in zip(corpus.ids, corpus.genres)
                    if class_ is None or g == class_]
        return {"total": len(matching), "items": matching[offset:offset + max(limit, 0)]}

    @app.get("/retrieve")
    def retrieve(query_id: str, direction: str = "v2m", alpha: float = 0.5, k: int = 10):
        if not 0.0 <= alpha <= 1.0:
            raise HTTPException(400, f"alpha {alpha} outside [0, 1]")
        if k < 1:
            raise HTTPException(400, "k must be >= 1")
        if direction not in ("v2m", "m2v"):
            raise HTTPException(400, f"unknown direction '{direction}'")
        try:
            ranked = rank(corpus, query_id, direction, alpha, k=min(k, len(corpus)))
        except KeyError as exc:
            raise HTTPException(404, str(exc.args[0])) from exc
        query_genre = genre_by_id[query_id]
        return {
            "query_id": query_id,
            "direction": direction,
            "alpha": alpha,
            "results": [{
                "id": item_id,
                "score": round(score, 6),
                "genre": genre_by_id[item_id],
                "same_pair": item_id == query_id,
                "same_genre": genre_by_id[item_id] == query_genre,
            } for item_id, score in ranked],
        }

    @app.get("/sweep")
    def sweep(protocol: str = "ssl", direction: str = "v2m"):
        if protocol not in ("ssl", "genre"):
            raise HTTPException(400, f"unknown protocol '{protocol}'")
        if direction not in ("v2m", "m2v"):
            raise HTTPException(400, f"unknown direction '{direction}'")
        if None not in sweep_cache:
            sweep_cache[None] = alpha_sweep(
                corpus, DEFAULT_ALPHAS, ("ssl", "genre"),
                subset_size=sweep_subset_size, subset_count=sweep_subset_count)
        metric = "R@10" if protocol == "ssl" else "P@10"
        series = sweep_cache[None].series(protocol, direction, metric)
        return {"protocol": protocol, "direction": direction, "metric": metric,
                "points": [{"alpha": a, "value": v} for a, v in series]}

    return app
