"""Overlay figures for section results and match reports, and benchmark
summary plots.  Rendering uses the non-interactive Agg backend."""

from __future__ import annotations

import shutil
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _colors(n: int):
    cmap = plt.get_cmap("tab20")
    return [cmap(k % 20) for k in range(n)]


def _outline(lm) -> np.ndarray:
    pts = np.asarray(lm.midpoints, dtype=np.float64)
    if lm.kind == "closed" and len(pts) > 2:
        pts = np.vstack([pts, pts[:1]])
    return pts


def draw_landmarks(ax, intensities: np.ndarray, items) -> None:
    """``items`` is a list of (landmark, label text, color)."""
    ax.imshow(intensities, cmap="gray", vmin=0, vmax=1, interpolation="nearest")
    for lm, text, color in items:
        pts = _outline(lm)
        style = "-" if lm.kind == "closed" else "--"
        ax.plot(pts[:, 0], pts[:, 1], style, color=color, lw=1.6)
        cx, cy = np.asarray(lm.midpoints).mean(axis=0)
        ax.text(cx, cy, text, color="white", fontsize=8, ha="center", va="center",
                bbox=dict(boxstyle="round,pad=0.15", fc=color, ec="none", alpha=0.85))
    ax.set_axis_off()


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def _figure(shape):
    h, w = shape
    scale = 8.0 / max(h, w)
    return plt.subplots(figsize=(max(w * scale, 2), max(h * scale, 2)))


def result_items(result):
    """Drawing items for a section result: landmarks numbered from 1 by
    rank, closed ones first."""
    landmarks = list(result.closed) + list(result.open)
    colors = _colors(len(landmarks))
    return [(lm, str(k + 1), colors[k]) for k, lm in enumerate(landmarks)]


def render_result_overlay(image_path, intensities: np.ndarray, result, out_path) -> Path:
    """Outline every landmark of a section.  An empty result copies the
    input image unchanged."""
    items = result_items(result)
    if not items:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(image_path, out_path)
        return Path(out_path)
    fig, ax = _figure(intensities.shape)
    draw_landmarks(ax, intensities, items)
    return _save(fig, out_path)


def match_items(report: dict, landmarks_a: dict, landmarks_b: dict):
    """Per-image drawing items for a match report: the k-th pair gets label
    ``k + 1`` and the same color in both images."""
    pairs = report.get("pairs", [])
    colors = _colors(len(pairs))
    ia, ib = [], []
    for k, p in enumerate(pairs):
        ia.append((landmarks_a[p["a"]], str(k + 1), colors[k]))
        ib.append((landmarks_b[p["b"]], str(k + 1), colors[k]))
    return ia, ib


def render_match_overlay(image_path, intensities: np.ndarray, report: dict, side: str,
                         landmarks: dict, out_path) -> Path:
    """Overlay one side ("a" or "b") of a match report.  An empty report
    copies the input image unchanged."""
    pairs = report.get("pairs", [])
    if not pairs:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(image_path, out_path)
        return Path(out_path)
    colors = _colors(len(pairs))
    items = [(landmarks[p[side]], str(k + 1), colors[k]) for k, p in enumerate(pairs)]
    fig, ax = _figure(intensities.shape)
    draw_landmarks(ax, intensities, items)
    return _save(fig, out_path)


def render_pair_figure(img_a: np.ndarray, img_b: np.ndarray, report: dict,
                       landmarks_a: dict, landmarks_b: dict, out_path, title: str = "") -> Path:
    ia, ib = match_items(report, landmarks_a, landmarks_b)
    fig, axes = plt.subplots(1, 2, figsize=(12, 6.2))
    draw_landmarks(axes[0], img_a, ia)
    draw_landmarks(axes[1], img_b, ib)
    if title:
        fig.suptitle(title)
    return _save(fig, out_path)


def render_bench_summary(outcomes, out_path) -> Path:
    """Per-pair match outcome fractions and detection metrics."""
    seeds = [o.seed for o in outcomes]
    x = np.arange(len(outcomes))
    c = np.array([o.match_correct for o in outcomes])
    p = np.array([o.match_partial for o in outcomes])
    w = np.array([o.match_wrong for o in outcomes])
    fig, axes = plt.subplots(2, 1, figsize=(max(6, 0.45 * len(x) + 2), 6.5), sharex=True)
    axes[0].bar(x, c, color="tab:green", label="correct")
    axes[0].bar(x, p, bottom=c, color="tab:orange", label="partial")
    axes[0].bar(x, w, bottom=c + p, color="tab:red", label="wrong")
    axes[0].set_ylabel("fraction of matches")
    axes[0].legend(loc="lower right", fontsize=8)
    axes[1].plot(x, [o.structures_matched for o in outcomes], "o-", label="structures matched")
    axes[1].plot(x, [o.detection_recall for o in outcomes], "s-", label="detection recall")
    axes[1].plot(x, [o.open_edge_fraction for o in outcomes], "^-", label="open edge fraction")
    axes[1].set_ylim(-0.05, 1.05)
    axes[1].set_xticks(x, [str(s) for s in seeds])
    axes[1].set_xlabel("pair seed")
    axes[1].legend(loc="lower right", fontsize=8)
    return _save(fig, out_path)
