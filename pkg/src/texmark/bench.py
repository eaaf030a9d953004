"""Synthetic benchmark: render, distort, detect, match and score.

The per-pair metrics are written as CSV rows; :mod:`texmark.report` turns
them into figures.
"""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import synthbench as sb
from .pipeline import Detection, PipelineConfig, detect_image, learn_codebook, match_sections
from .pipeline import compute_features


def bench_config(**overrides) -> PipelineConfig:
    """Pipeline settings used for the synthetic benchmark.

    A shorter frequency ladder keeps the excluded border small on 1024 px
    canvases, and a smaller codebook sample keeps a pair under half a minute.
    """
    base = dict(n_scales=5, base_frequency=0.25, superpixel_area=2000.0,
                codebook_samples=20_000, kmeans_max_iter=30, max_frontier_pvalue=0.05)
    base.update(overrides)
    return PipelineConfig(**base)


@dataclass
class PairOutcome:
    seed: int
    rotation: float
    translation: float
    jitter: float
    noise: float
    n_closed_a: int
    n_open_a: int
    detection_recall: float
    detection_precision: float
    open_edge_fraction: float
    open_edge_mean_dist: float
    open_edge_segments: int
    n_matches: int
    match_correct: float
    match_partial: float
    match_wrong: float
    structures_matched: float
    seconds: float
    extras: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("extras")
        return d


def closed_masks(det: Detection) -> list:
    labels = det.spmap.labels
    return [np.isin(labels, sorted(lm.members)) for lm in det.result.closed]


def superpixel_diameter(det: Detection) -> float:
    areas = np.asarray(det.spmap.areas, dtype=np.float64)
    return float(2.0 * np.sqrt(areas[areas > 0].mean() / np.pi))


def landmark_truths(det: Detection, labels: np.ndarray, open_edges: dict, tolerance: float):
    bnd = sb.structure_boundaries(labels, open_edges)
    masks = dict(zip([lm.id for lm in det.result.closed], closed_masks(det)))
    out = {}
    for lm in det.result.landmarks:
        out[lm.id] = sb.landmark_truth(lm.kind, masks.get(lm.id), lm.midpoints, labels, bnd,
                                       tolerance)
    return out


def run_scene_pair(scene: sb.SceneSpec, dist: sb.DistortionSpec, config: PipelineConfig,
                   seed: int = 0, keep: bool = False) -> PairOutcome:
    """Run detection on a scene and its distorted copy and score both the
    detection in the undistorted section and the matches between them."""
    t0 = time.perf_counter()
    img_a, lab_a = sb.render_scene(scene)
    img_b, lab_b = sb.distort(img_a, lab_a, dist, seed)
    edges_a, edges_b = {}, {}
    for i, s in enumerate(scene.shapes):
        if s["kind"] == "halfopen":
            e = sb.open_edge_polyline(s)
            edges_a[i + 1] = e
            edges_b[i + 1] = sb.transform_points(e, lab_a.shape, dist, seed)
    fa = compute_features(img_a, config)
    fb = compute_features(img_b, config)
    cb = learn_codebook([fa, fb], config)
    det_a = detect_image(img_a, cb, config, "A", field_=fa)
    det_b = detect_image(img_b, cb, config, "B", field_=fb)

    compact = [i + 1 for i, s in enumerate(scene.shapes) if s["kind"] != "halfopen"]
    dscore = sb.score_detection(closed_masks(det_a), lab_a, 0.7, compact)
    diam = superpixel_diameter(det_a)
    frac, mean_d, n_open_seg = 0.0, float("nan"), 0
    for sid, edge in edges_a.items():
        g = sb.open_edge_group(det_a.groups, lab_a, sid, diam)
        if g is not None:
            frac, mean_d = sb.score_open_edge(g.midpoints, edge, 2 * diam)
            n_open_seg = len(g.midpoints)

    report = match_sections(det_a.result, det_b.result, config.match_weights(True),
                            no_location=True)
    tol = 2 * diam
    ta = landmark_truths(det_a, lab_a, edges_a, tol)
    tb = landmark_truths(det_b, np.where(lab_b < 0, 0, lab_b), edges_b, tol)
    mscore = sb.score_matching([(p["a"], p["b"]) for p in report["pairs"]], ta, tb)
    n_planted = len(scene.shapes)
    outcome = PairOutcome(
        seed=seed, rotation=dist.rotation, translation=float(np.hypot(*dist.translation)),
        jitter=dist.jitter_amplitude, noise=dist.noise_sigma,
        n_closed_a=len(det_a.result.closed), n_open_a=len(det_a.result.open),
        detection_recall=dscore.recall, detection_precision=dscore.precision,
        open_edge_fraction=frac, open_edge_mean_dist=mean_d, open_edge_segments=n_open_seg,
        n_matches=mscore["n_matches"], match_correct=mscore["correct"],
        match_partial=mscore["partial"], match_wrong=mscore["wrong"],
        structures_matched=len(mscore["matched_structures"]) / n_planted if n_planted else 0.0,
        seconds=time.perf_counter() - t0)
    if keep:
        outcome.extras = dict(img_a=img_a, img_b=img_b, lab_a=lab_a, lab_b=lab_b, det_a=det_a,
                              det_b=det_b, report=report, truth_a=ta, truth_b=tb,
                              edges_a=edges_a, edges_b=edges_b)
    return outcome


def run_pair(seed: int, config: PipelineConfig | None = None, keep: bool = False,
             **distortion_limits) -> PairOutcome:
    config = config or bench_config()
    scene, dist = sb.make_pair_specs(seed, **distortion_limits)
    return run_scene_pair(scene, dist, config, seed, keep)


def run_suite(seeds, config: PipelineConfig | None = None, progress=None) -> list:
    out = []
    for s in seeds:
        o = run_pair(int(s), config)
        if progress:
            progress(o)
        out.append(o)
    return out


def summarize(outcomes) -> dict:
    """Suite metrics.

    Match precision and the open-edge fraction are pooled over all emitted
    matches and all scored boundary segments; structures matched and
    detection recall are averaged per pair (every pair plants the same
    number of structures).  ``open_edge_scenes`` counts scenes whose own
    open-edge fraction reaches 0.9.
    """
    n = sum(o.n_matches for o in outcomes)
    correct = sum(o.match_correct * o.n_matches for o in outcomes)
    n_seg = sum(o.open_edge_segments for o in outcomes)
    near = sum(o.open_edge_fraction * o.open_edge_segments for o in outcomes)
    return {
        "pairs": len(outcomes),
        "matches": n,
        "match_precision": correct / n if n else 0.0,
        "structures_matched": float(np.mean([o.structures_matched for o in outcomes])),
        "detection_recall": float(np.mean([o.detection_recall for o in outcomes])),
        "open_edge_fraction": near / n_seg if n_seg else 0.0,
        "open_edge_scenes": sum(o.open_edge_fraction >= 0.9 for o in outcomes),
        "open_edge_min": min((o.open_edge_fraction for o in outcomes), default=0.0),
        "seconds": float(sum(o.seconds for o in outcomes)),
    }


def write_csv(outcomes, path) -> None:
    rows = [o.row() for o in outcomes]
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
