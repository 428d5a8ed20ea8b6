"""PNG report figures for record sets (matplotlib, headless backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import RecordSet, plot_series  # noqa: E402


def render_png(records: RecordSet, path, dpi: int = 120) -> Path:
    xlabel, series = plot_series(records)
    kind = records.records[0].kind
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, pts in series.items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(f"{kind} ({records.metadata.get('system', '')})")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=dpi, metadata={"Software": None})
    plt.close(fig)
    return path
