"""Report rendering: delimited metric tables plus controllability figures."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .retrieval import DIRECTIONS, RetrievalReport

_PANELS = (
    ("ssl", "R@10", "Self-supervised retrieval", "ssl_r10_vs_alpha.png"),
    ("genre", "P@10", "Genre-supervised retrieval", "genre_p10_vs_alpha.png"),
)


def write_report(report: RetrievalReport, out_dir: str | Path,
                 figures: bool = True) -> list[Path]:
    """Write report.csv, report.json and (optionally) the two sweep figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / "report.csv"
    csv_path.write_text(report.to_csv())
    written.append(csv_path)
    json_path = out_dir / "report.json"
    json_path.write_text(report.to_json())
    written.append(json_path)
    if figures:
        written.extend(plot_sweep(report, out_dir))
    return written


def plot_sweep(report: RetrievalReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for protocol, metric, title, filename in _PANELS:
        series = {d: report.series(protocol, d, metric) for d in DIRECTIONS}
        if not any(series.values()):
            continue
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        labels = {"v2m": "video to music", "m2v": "music to video"}
        for direction, points in series.items():
            if points:
                xs, ys = zip(*points)
                ax.plot(xs, ys, marker="o", label=labels[direction])
        ax.set_xlabel("alpha")
        ax.set_ylabel(metric)
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        path = out_dir / filename
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
