"""SLIC superpixels on grayscale intensity, adjacency and border geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from .errors import InputError, ParameterError
from .texture import GrayImage

NO_SUPERPIXEL = -1


@dataclass
class SuperpixelMap:
    labels: np.ndarray          # (H, W) int32, NO_SUPERPIXEL off the foreground
    n_superpixels: int
    centroids: np.ndarray       # (n, 2) as (x, y)
    areas: np.ndarray           # (n,) pixel counts
    rng_seed: int = 0

    @classmethod
    def from_labels(cls, labels: np.ndarray, rng_seed: int = 0) -> "SuperpixelMap":
        labels = np.asarray(labels, dtype=np.int32)
        n = int(labels.max()) + 1 if (labels >= 0).any() else 0
        fg = labels >= 0
        ys, xs = np.nonzero(fg)
        lab = labels[fg]
        areas = np.bincount(lab, minlength=n)
        if n and (areas == 0).any():
            raise ParameterError("superpixel ids must be contiguous")
        cx = np.bincount(lab, weights=xs, minlength=n) / np.maximum(areas, 1)
        cy = np.bincount(lab, weights=ys, minlength=n) / np.maximum(areas, 1)
        return cls(labels, n, np.column_stack([cx, cy]), areas, rng_seed)

    @property
    def foreground_area(self) -> int:
        return int(self.areas.sum())

    def save(self, png_path, json_path=None) -> None:
        """16-bit label PNG (0 = background, id + 1 otherwise) + JSON sidecar."""
        from PIL import Image

        if self.n_superpixels >= 65535:
            raise ParameterError("too many superpixels for a 16-bit label image")
        Image.fromarray((self.labels + 1).astype(np.uint16)).save(png_path)
        json_path = json_path or Path(png_path).with_suffix(".json")
        doc = {
            "version": 1,
            "n_superpixels": self.n_superpixels,
            "centroids": self.centroids.round(6).tolist(),
            "areas": self.areas.tolist(),
            "rng_seed": self.rng_seed,
        }
        Path(json_path).write_text(json.dumps(doc, sort_keys=True))

    @classmethod
    def load(cls, png_path, json_path=None) -> "SuperpixelMap":
        from PIL import Image

        json_path = json_path or Path(png_path).with_suffix(".json")
        try:
            with Image.open(png_path) as im:
                labels = np.asarray(im, dtype=np.int32) - 1
            doc = json.loads(Path(json_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read superpixel map: {exc}") from exc
        spmap = cls.from_labels(labels, int(doc.get("rng_seed", 0)))
        if spmap.n_superpixels != doc["n_superpixels"]:
            raise InputError("superpixel sidecar does not match label image")
        return spmap


def _gradient_magnitude(img: np.ndarray) -> np.ndarray:
    gy, gx = np.gradient(img)
    return gx * gx + gy * gy


def _initial_centers(img, mask, step):
    h, w = img.shape
    ys, xs = np.nonzero(mask)
    y0, y1, x0, x1 = ys.min(), ys.max(), xs.min(), xs.max()
    ny = max(1, int(round((y1 - y0 + 1) / step)))
    nx = max(1, int(round((x1 - x0 + 1) / step)))
    gy = y0 + (np.arange(ny) + 0.5) * (y1 - y0 + 1) / ny
    gx = x0 + (np.arange(nx) + 0.5) * (x1 - x0 + 1) / nx
    grad = _gradient_magnitude(img)
    grad = np.where(mask, grad, np.inf)
    centers = []
    for cy in gy:
        for cx in gx:
            r, c = int(cy), int(cx)
            # move to the lowest-gradient foreground pixel in the 3x3 window
            ra, rb = max(r - 1, 0), min(r + 2, h)
            ca, cb = max(c - 1, 0), min(c + 2, w)
            win = grad[ra:rb, ca:cb]
            k = np.argmin(win)
            r, c = ra + k // win.shape[1], ca + k % win.shape[1]
            if mask[r, c]:
                centers.append((img[r, c], float(r), float(c)))
    return np.array(centers, dtype=np.float64)


def _absorb_small(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Split labels into 4-connected components and merge components smaller
    than ``min_size`` into their largest adjacent component."""
    from skimage.measure import label as cc_label

    fg = labels >= 0
    comp = cc_label(np.where(fg, labels, -1), background=-1, connectivity=1) - 1
    comp[~fg] = -1
    n = int(comp.max()) + 1
    sizes = np.bincount(comp[fg], minlength=n).astype(np.int64)

    pairs = []
    for a, b in ((comp[:, :-1], comp[:, 1:]), (comp[:-1, :], comp[1:, :])):
        sel = (a >= 0) & (b >= 0) & (a != b)
        pairs.append(np.column_stack([a[sel], b[sel]]))
    pairs = np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)
    neighbors = [set() for _ in range(n)]
    for a, b in pairs:
        neighbors[a].add(int(b))
        neighbors[b].add(int(a))

    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for c in sorted(range(n), key=lambda i: (sizes[i], i)):
        root = find(c)
        if root != c or sizes[c] >= min_size:
            continue
        adj = {find(j) for j in neighbors[c]} - {c}
        if not adj:
            continue
        target = max(adj, key=lambda j: (sizes[j], -j))
        parent[c] = target
        sizes[target] += sizes[c]
        neighbors[target] |= neighbors[c]
    roots = np.array([find(i) for i in range(n)])
    merged = np.where(fg, roots[np.maximum(comp, 0)], -1)
    return _relabel_raster(merged)


def _relabel_raster(labels: np.ndarray) -> np.ndarray:
    """Renumber ids 0..n-1 in order of first appearance in raster scan."""
    flat = labels.ravel()
    fg = flat >= 0
    ids, first = np.unique(flat[fg], return_index=True)
    order = np.argsort(first, kind="stable")
    lut = np.full(int(ids.max()) + 1 if len(ids) else 1, -1, dtype=np.int32)
    lut[ids[order]] = np.arange(len(ids), dtype=np.int32)
    out = np.full(flat.shape, -1, dtype=np.int32)
    out[fg] = lut[flat[fg]]
    return out.reshape(labels.shape)


def slic(image: GrayImage, target_count: int, compactness: float = 10.0,
         rng_seed: int = 0, n_iter: int = 10, smooth_sigma: float = 0.0,
         min_size_fraction: float = 0.25) -> SuperpixelMap:
    """SLIC superpixels over the foreground of a grayscale image.

    Clustering runs in (intensity, row, col) space with intensities scaled
    to [0, 100]; the spatial term is weighted by ``compactness / step``.
    Afterwards each label is split into 4-connected pieces and pieces below
    ``min_size_fraction`` of the target area are absorbed by their largest
    neighbor.  The algorithm is deterministic; ``rng_seed`` is recorded for
    provenance only.
    """
    mask = image.foreground_mask
    n_fg = int(mask.sum())
    if target_count < 1:
        raise ParameterError("target_count must be >= 1")
    if compactness <= 0:
        raise ParameterError("compactness must be > 0")
    if target_count > n_fg:
        raise ParameterError(
            f"target_count {target_count} exceeds foreground size {n_fg}")

    img = image.intensities * 100.0
    if smooth_sigma > 0:
        # normalized convolution keeps background out of the smoothing
        num = ndi.gaussian_filter(np.where(mask, img, 0.0), smooth_sigma)
        den = ndi.gaussian_filter(mask.astype(np.float64), smooth_sigma)
        img = np.where(mask, num / np.maximum(den, 1e-12), 0.0)

    h, w = img.shape
    step = np.sqrt(n_fg / target_count)
    centers = _initial_centers(img, mask, step)
    if len(centers) == 0:
        ys, xs = np.nonzero(mask)
        centers = np.array([[img[ys[0], xs[0]], ys[0], xs[0]]], dtype=np.float64)
    win = int(np.ceil(step))
    spatial_w = (compactness / step) ** 2

    labels = np.full((h, w), -1, dtype=np.int32)
    for _ in range(n_iter):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for k, (ci, cy, cx) in enumerate(centers):
            r0, r1 = max(int(cy) - win, 0), min(int(cy) + win + 1, h)
            c0, c1 = max(int(cx) - win, 0), min(int(cx) + win + 1, w)
            yy = np.arange(r0, r1)[:, None]
            xx = np.arange(c0, c1)[None, :]
            d = (img[r0:r1, c0:c1] - ci) ** 2 + spatial_w * ((yy - cy) ** 2 + (xx - cx) ** 2)
            sub = dist[r0:r1, c0:c1]
            better = (d < sub) & mask[r0:r1, c0:c1]
            sub[better] = d[better]
            labels[r0:r1, c0:c1][better] = k
        # foreground pixels outside every window join the nearest labelled pixel
        orphan = mask & (labels < 0)
        if orphan.any():
            _, (iy, ix) = ndi.distance_transform_edt(labels < 0, return_indices=True)
            labels[orphan] = labels[iy[orphan], ix[orphan]]
        lab = labels[mask]
        ys, xs = np.nonzero(mask)
        cnt = np.bincount(lab, minlength=len(centers))
        keep = cnt > 0
        new = np.column_stack([
            np.bincount(lab, weights=img[mask], minlength=len(centers)),
            np.bincount(lab, weights=ys, minlength=len(centers)),
            np.bincount(lab, weights=xs, minlength=len(centers)),
        ])
        centers = new[keep] / cnt[keep, None]
        # drop empty clusters and compact label ids to match
        remap = np.cumsum(keep) - 1
        labels = np.where(labels >= 0, remap[np.maximum(labels, 0)], -1).astype(np.int32)

    min_size = max(1, int(min_size_fraction * n_fg / target_count))
    labels = _absorb_small(labels, min_size)
    return SuperpixelMap.from_labels(labels, rng_seed)


@dataclass
class SegmentGeometry:
    i: int
    j: int
    pixels: np.ndarray   # (m, 2) as (x, y)
    midpoint: tuple


@dataclass
class AdjacencyGraph:
    """Superpixel adjacency with the border pixels of every edge.

    ``border[(a, b)]`` (``a < b``) lists the pixels of either superpixel that
    4-neighbor the other, as (x, y) rows.
    """

    n: int
    neighbors: list          # list of sorted int tuples
    border: dict

    def neighbor_set(self, i: int) -> frozenset:
        return frozenset(self.neighbors[i])

    def edges(self):
        return sorted(self.border)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.border


def build_adjacency(spmap: SuperpixelMap) -> AdjacencyGraph:
    lab = spmap.labels
    h, w = lab.shape
    rows, cols = np.mgrid[0:h, 0:w]
    chunks = []
    for sl_a, sl_b in (((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
                       ((slice(None, -1), slice(None)), (slice(1, None), slice(None)))):
        a, b = lab[sl_a], lab[sl_b]
        sel = (a >= 0) & (b >= 0) & (a != b)
        la, lb = a[sel], b[sel]
        ra, ca = rows[sl_a][sel], cols[sl_a][sel]
        rb, cb = rows[sl_b][sel], cols[sl_b][sel]
        lo, hi = np.minimum(la, lb), np.maximum(la, lb)
        chunks.append(np.column_stack([lo, hi, ca, ra]))
        chunks.append(np.column_stack([lo, hi, cb, rb]))
    n = spmap.n_superpixels
    neighbors = [[] for _ in range(n)]
    border = {}
    if chunks and sum(len(c) for c in chunks):
        data = np.unique(np.concatenate(chunks).astype(np.int64), axis=0)
        keys = data[:, 0] * (n + 1) + data[:, 1]
        cuts = np.flatnonzero(np.diff(keys)) + 1
        for block in np.split(data, cuts):
            a, b = int(block[0, 0]), int(block[0, 1])
            border[(a, b)] = block[:, 2:4].astype(np.float64)
            neighbors[a].append(b)
            neighbors[b].append(a)
    return AdjacencyGraph(n, [tuple(sorted(x)) for x in neighbors], border)


def segment_geometry(graph: AdjacencyGraph, i: int, j: int) -> SegmentGeometry:
    """Border pixels and midpoint of the ordered segment (i, j)."""
    key = (min(i, j), max(i, j))
    if i == j or key not in graph.border:
        raise KeyError(f"({i}, {j}) is not an edge of the adjacency graph")
    pix = graph.border[key]
    mid = pix.mean(axis=0)
    return SegmentGeometry(int(i), int(j), pix, (float(mid[0]), float(mid[1])))


def edge_midpoints(graph: AdjacencyGraph) -> dict:
    """Midpoint per unordered edge ``(a, b)``, ``a < b``."""
    return {k: tuple(float(v) for v in pix.mean(axis=0)) for k, pix in graph.border.items()}
