"""Height-distribution statistics: which height bins each class occupies."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class HeightDistribution:
    """Raw class x height-bin counts; fractions are computed on export.

    Keeping counts (not fractions) makes partial accumulations mergeable
    exactly, so parallel batch runs reproduce a single pass bit-for-bit.
    """

    n_classes: int
    n_height_bins: int
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.n_classes, self.n_height_bins), dtype=np.int64)
        if self.counts.shape != (self.n_classes, self.n_height_bins):
            raise ValueError("counts shape does not match declared dimensions")

    @property
    def class_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def accumulate(
    dist: HeightDistribution,
    semantic_labels: np.ndarray,
    height_bins: np.ndarray,
    semantic_ignore: int = 255,
    height_ignore: int = 255,
) -> HeightDistribution:
    """Count co-registered (class, height bin) pairs into dist (in place)."""
    if semantic_labels.shape != height_bins.shape:
        raise ValueError(
            f"raster dims differ: {semantic_labels.shape} vs {height_bins.shape}"
        )
    sem = semantic_labels.ravel().astype(np.int64)
    hb = height_bins.ravel().astype(np.int64)
    ok = (sem != semantic_ignore) & (hb != height_ignore)
    sem, hb = sem[ok], hb[ok]
    if np.any((sem < 0) | (sem >= dist.n_classes)):
        raise ValueError("semantic label out of range")
    if np.any((hb < 0) | (hb >= dist.n_height_bins)):
        raise ValueError("height bin out of range")
    flat = np.bincount(sem * dist.n_height_bins + hb, minlength=dist.counts.size)
    dist.counts += flat.reshape(dist.counts.shape)
    return dist


def merge(a: HeightDistribution, b: HeightDistribution) -> HeightDistribution:
    """Count-wise sum; commutative and associative."""
    if a.counts.shape != b.counts.shape:
        raise ValueError("cannot merge distributions of different dimensions")
    return HeightDistribution(a.n_classes, a.n_height_bins, a.counts + b.counts)


def finalize(dist: HeightDistribution) -> np.ndarray:
    """Row-stochastic fraction matrix; classes never seen stay all-zero."""
    totals = dist.class_totals.astype(np.float64)
    out = np.zeros_like(dist.counts, dtype=np.float64)
    seen = totals > 0
    out[seen] = dist.counts[seen] / totals[seen, None]
    return out


def export_json(dist: HeightDistribution, path: str | Path, class_names=None) -> dict:
    """Structured class x bin table with both counts and fractions."""
    fracs = finalize(dist)
    rows = []
    for c in range(dist.n_classes):
        rows.append(
            {
                "class": c if class_names is None else class_names[c],
                "count": int(dist.class_totals[c]),
                "fractions": [float(x) for x in fracs[c]],
            }
        )
    doc = {"n_classes": dist.n_classes, "n_height_bins": dist.n_height_bins, "rows": rows}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def export_heatmap(dist: HeightDistribution, path: str | Path) -> None:
    """Optional colormap image of the fraction matrix (classes x bins)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fracs = finalize(dist)
    fig, ax = plt.subplots(figsize=(6, max(2, dist.n_classes * 0.25)))
    im = ax.imshow(fracs, aspect="auto", cmap="viridis", vmin=0, vmax=1)
    ax.set_xlabel("height bin")
    ax.set_ylabel("class")
    fig.colorbar(im, ax=ax, label="fraction of class pixels")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
