import sys

import numpy as np
import pytest

from texmark.texture import GrayImage


def grating(shape, freq, theta, phase=0.0, mean=0.5, amp=0.4):
    """Sinusoid whose wave vector points along ``theta`` in (x, y) image axes."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return mean + amp * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_grating():
    def _make(shape=(96, 96), freq=0.2, theta=0.0, **kw):
        return GrayImage(grating(shape, freq, theta, **kw))
    return _make


def grid_labels(n_rows, n_cols, cell=4):
    """Label image of an n_rows x n_cols grid of square superpixels."""
    ids = np.arange(n_rows * n_cols).reshape(n_rows, n_cols)
    return np.kron(ids, np.ones((cell, cell), dtype=ids.dtype)).astype(np.int32)


def grid_graph(n_rows, n_cols, cell=4):
    from texmark.segmentation import SuperpixelMap, build_adjacency

    return build_adjacency(SuperpixelMap.from_labels(grid_labels(n_rows, n_cols, cell)))


def brute_average_linkage(dist, cut):
    """Naive agglomeration: merge the closest pair of clusters (mean pairwise
    distance) while it is <= cut.  Returns the partition as a set of
    frozensets."""
    clusters = [[i] for i in range(len(dist))]
    while len(clusters) > 1:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                d = np.mean([dist[i][j] for i in clusters[a] for j in clusters[b]])
                if best is None or d < best[0]:
                    best = (d, a, b)
        if best[0] > cut:
            break
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return {frozenset(c) for c in clusters}


def partition(labels):
    out = {}
    for i, lab in enumerate(labels):
        out.setdefault(int(lab), set()).add(i)
    return {frozenset(v) for v in out.values()}


FAST_CONFIG = dict(n_scales=4, base_frequency=0.25, superpixel_area=300.0,
                   codebook_samples=4000, initial_k=20, kmeans_max_iter=20)


def small_scene(seed=1):
    from texmark.synthbench import SceneSpec

    return SceneSpec(width=256, height=256, rng_seed=seed, shapes=[
        {"kind": "ellipse", "center": [80, 90], "radii": [40, 30], "texture": "fine_grating"},
        {"kind": "ellipse", "center": [175, 170], "radii": [38, 34], "texture": "dense_cells"}])


@pytest.fixture(scope="session")
def section_files(tmp_path_factory):
    """Two small rendered sections, a fast config and a shared codebook on disk."""
    import json

    from texmark.pipeline import PipelineConfig, build_codebook
    from texmark.synthbench import DistortionSpec, distort, render_scene
    from texmark.texture import save_image

    root = tmp_path_factory.mktemp("sections")
    img, lab = render_scene(small_scene())
    img_b, _ = distort(img, lab, DistortionSpec(rotation=5, translation=(6, -4)), 0)
    paths = {"a": root / "a.png", "b": root / "b.png", "config": root / "cfg.json",
             "codebook": root / "cb.json", "root": root}
    save_image(paths["a"], img.intensities)
    save_image(paths["b"], img_b.intensities)
    config = PipelineConfig(**FAST_CONFIG)
    paths["config"].write_text(json.dumps(config.to_json()))
    cb = build_codebook([paths["a"], paths["b"]], config)
    cb.save(paths["codebook"])
    return paths


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
