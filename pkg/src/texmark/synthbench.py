"""Synthetic multi-texture sections with known ground truth.

A scene is a background texture with planted shapes, each filled with its
own procedural texture: oriented gratings and striations stand in for fiber
tracts, dot fields for clusters of cell bodies.  ``halfopen`` shapes have one
sharp edge and fade into the background on their other sides, which makes
the sharp edge an open-boundary landmark.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from .errors import InputError, SpecError
from .texture import GrayImage

BACKGROUND = 0
OUTSIDE = -1

SHAPE_KINDS = ("ellipse", "blob", "halfopen")
TEXTURE_KINDS = ("grating", "dots", "noise", "crosshatch", "striated")


@dataclass
class SceneSpec:
    width: int = 1024
    height: int = 1024
    background: str = "bg"
    textures: dict = field(default_factory=dict)
    shapes: list = field(default_factory=list)
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def to_json(self) -> dict:
        return {"version": 1, **asdict(self)}

    @classmethod
    def from_json(cls, doc: dict) -> "SceneSpec":
        doc = {k: v for k, v in doc.items() if k != "version"}
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SpecError(f"bad scene spec: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SceneSpec":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read scene spec {path}: {exc}") from exc


@dataclass
class DistortionSpec:
    rotation: float = 0.0          # degrees, counterclockwise as displayed
    translation: tuple = (0.0, 0.0)  # (dx, dy) pixels
    jitter_amplitude: float = 0.0  # max elastic displacement, pixels
    jitter_scale: float = 64.0     # smoothness of the elastic field, pixels
    noise_sigma: float = 0.0

    def __post_init__(self):
        vals = [self.rotation, *self.translation, self.jitter_amplitude,
                self.jitter_scale, self.noise_sigma]
        if not all(np.isfinite(v) for v in vals):
            raise SpecError("distortion parameters must be finite")
        if not -180 <= self.rotation <= 180:
            raise SpecError("rotation must lie in [-180, 180]")
        if self.jitter_amplitude < 0 or self.noise_sigma < 0 or self.jitter_scale <= 0:
            raise SpecError("jitter amplitude/noise must be >= 0 and scale > 0")
        self.translation = tuple(float(t) for t in self.translation)

    @property
    def is_identity(self) -> bool:
        return (self.rotation == 0 and self.translation == (0.0, 0.0)
                and self.jitter_amplitude == 0 and self.noise_sigma == 0)

    def to_json(self) -> dict:
        return {"version": 1, **asdict(self), "translation": list(self.translation)}

    @classmethod
    def from_json(cls, doc: dict) -> "DistortionSpec":
        doc = {k: v for k, v in doc.items() if k != "version"}
        try:
            return cls(**doc)
        except TypeError as exc:
            raise SpecError(f"bad distortion spec: {exc}") from exc

    @classmethod
    def load(cls, path) -> "DistortionSpec":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read distortion spec {path}: {exc}") from exc


# --- textures -----------------------------------------------------------

DEFAULT_TEXTURES = {
    "bg": {"kind": "dots", "mean": 0.72, "amplitude": -0.35, "density": 0.004, "radius": 1.5},
    "fine_grating": {"kind": "grating", "mean": 0.55, "amplitude": 0.25, "frequency": 0.177},
    "coarse_grating": {"kind": "grating", "mean": 0.62, "amplitude": 0.25, "frequency": 0.088},
    "dense_cells": {"kind": "dots", "mean": 0.42, "amplitude": -0.45, "density": 0.02, "radius": 2.5},
    "big_cells": {"kind": "dots", "mean": 0.5, "amplitude": -0.5, "density": 0.004, "radius": 4.0},
    "hatch": {"kind": "crosshatch", "mean": 0.66, "amplitude": 0.18, "frequency": 0.125},
    "striated": {"kind": "striated", "mean": 0.5, "amplitude": 0.25, "frequency": 0.125,
                 "noise": 0.5},
}


def _grating(xx, yy, freq, theta, phase=0.0):
    return np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)


def render_texture(params: dict, shape, rng: np.random.Generator, orientation: float = 0.0):
    """Render one procedural texture over a canvas of ``shape``.

    ``orientation`` (radians) rotates directional textures.
    """
    kind = params["kind"]
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    mean = params.get("mean", 0.5)
    amp = params.get("amplitude", 0.2)
    theta = orientation + params.get("orientation", 0.0)
    if kind == "grating":
        pat = _grating(xx, yy, params["frequency"], theta, rng.uniform(0, 2 * np.pi))
    elif kind == "crosshatch":
        f = params["frequency"]
        pat = 0.5 * (_grating(xx, yy, f, theta, rng.uniform(0, 2 * np.pi))
                     + _grating(xx, yy, f, theta + np.pi / 2, rng.uniform(0, 2 * np.pi)))
    elif kind == "striated":
        # grating with a slowly wandering phase: streaky fiber-like texture
        wander = ndi.gaussian_filter(rng.standard_normal(shape), 12.0)
        wander *= params.get("noise", 0.5) * 2 * np.pi / max(wander.std(), 1e-12)
        pat = np.sin(2 * np.pi * params["frequency"]
                     * (xx * np.cos(theta) + yy * np.sin(theta)) + wander)
    elif kind == "dots":
        n = rng.poisson(params["density"] * h * w)
        canvas = np.zeros(shape)
        ys = rng.integers(0, h, n)
        xs = rng.integers(0, w, n)
        np.add.at(canvas, (ys, xs), 1.0)
        r = params.get("radius", 2.0)
        pat = ndi.gaussian_filter(canvas, r) * (2 * np.pi * r * r)
        pat = np.minimum(pat, 1.0)
    elif kind == "noise":
        pat = ndi.gaussian_filter(rng.standard_normal(shape), params.get("radius", 1.0))
        pat /= max(pat.std(), 1e-12)
    else:
        raise SpecError(f"unknown texture kind {kind!r}")
    return mean + amp * pat


# --- shapes -------------------------------------------------------------

def _local_coords(shape_spec, xx, yy):
    cx, cy = shape_spec["center"]
    ang = np.deg2rad(shape_spec.get("angle", 0.0))
    dx, dy = xx - cx, yy - cy
    u = dx * np.cos(ang) + dy * np.sin(ang)
    v = -dx * np.sin(ang) + dy * np.cos(ang)
    return u, v


def shape_alpha(shape_spec: dict, canvas) -> np.ndarray:
    """Opacity of a planted shape over the canvas, in [0, 1]."""
    h, w = canvas
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = _local_coords(shape_spec, xx, yy)
    kind = shape_spec["kind"]
    if kind == "ellipse":
        a, b = shape_spec["radii"]
        return ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.float64)
    if kind == "blob":
        a, b = shape_spec["radii"]
        phi = np.arctan2(v / b, u / a)
        rr = np.hypot(u / a, v / b)
        bound = np.ones_like(phi)
        for k, (amp, ph) in enumerate(shape_spec.get("harmonics", []), start=2):
            bound += amp * np.cos(k * phi + ph)
        return (rr <= bound).astype(np.float64)
    if kind == "halfopen":
        # sharp edge along v = 0; interior toward +v; ramps elsewhere
        length, depth, ramp = shape_spec["length"], shape_spec["depth"], shape_spec["ramp"]
        inside = v >= 0
        fade_v = np.clip((depth + ramp - v) / ramp, 0, 1)
        fade_u = np.clip((length / 2 + ramp / 2 - np.abs(u)) / ramp, 0, 1)
        return np.where(inside, np.minimum(fade_v, fade_u), 0.0)
    raise SpecError(f"unknown shape kind {kind!r}")


def dither_alpha(alpha: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Binary opacity whose local coverage follows ``alpha``.

    Thresholding against a smooth uniform random field turns a soft blend
    into a patchwork of the two pure textures, so a ramp becomes a gradual
    change in mixture proportions rather than a band of new textures.
    """
    u = ndi.gaussian_filter(rng.standard_normal(alpha.shape), scale)
    ranks = np.argsort(np.argsort(u, axis=None), kind="stable")
    u = ((ranks + 0.5) / u.size).reshape(alpha.shape)
    return (u < alpha).astype(np.float64)


def open_edge_polyline(shape_spec: dict, step: float = 2.0) -> np.ndarray:
    """Sharp edge of a ``halfopen`` shape as (x, y) points, restricted to the
    part where the shape is at least half opaque."""
    if shape_spec["kind"] != "halfopen":
        raise SpecError("only halfopen shapes have an open edge")
    half = shape_spec["length"] / 2
    u = np.arange(-half, half + 1e-9, step)
    ang = np.deg2rad(shape_spec.get("angle", 0.0))
    cx, cy = shape_spec["center"]
    return np.column_stack([cx + u * np.cos(ang), cy + u * np.sin(ang)])


def _validate(spec: SceneSpec):
    if spec.width <= 0 or spec.height <= 0:
        raise SpecError("canvas must be nonempty")
    textures = {**DEFAULT_TEXTURES, **spec.textures}
    if spec.background not in textures:
        raise SpecError(f"unknown background texture {spec.background!r}")
    for s in spec.shapes:
        if s.get("kind") not in SHAPE_KINDS:
            raise SpecError(f"unknown shape kind {s.get('kind')!r}")
        if s.get("texture") not in textures:
            raise SpecError(f"unknown texture {s.get('texture')!r}")
        if s["texture"] == spec.background:
            raise SpecError("a planted shape cannot share the background texture")
        cx, cy = s["center"]
        if not (0 <= cx < spec.width and 0 <= cy < spec.height):
            raise SpecError("shape center lies outside the canvas")
    return textures


def render_scene(spec: SceneSpec):
    """Render ``spec``; returns ``(GrayImage, labels)``.

    ``labels`` is 0 on background and ``i + 1`` where shape ``i`` is at least
    half opaque.  Overlapping shapes raise :class:`SpecError`.
    """
    textures = _validate(spec)
    canvas = (spec.height, spec.width)
    rng = np.random.default_rng(spec.rng_seed)
    img = render_texture(textures[spec.background], canvas, rng, rng.uniform(0, np.pi))
    labels = np.zeros(canvas, dtype=np.int32)
    covered = np.zeros(canvas, dtype=bool)
    for i, s in enumerate(spec.shapes):
        alpha = shape_alpha(s, canvas)
        if s.get("dither", 0) > 0:
            alpha = dither_alpha(alpha, s["dither"], rng)
        foot = alpha > 0
        if (foot & covered).any():
            raise SpecError(f"shape {i} overlaps an earlier shape")
        covered |= foot
        orient = np.deg2rad(s.get("texture_angle", 0.0))
        tex = render_texture(textures[s["texture"]], canvas, rng, orient)
        img = alpha * tex + (1 - alpha) * img
        labels[alpha >= 0.5] = i + 1
    if spec.noise_sigma > 0:
        img = img + rng.normal(0, spec.noise_sigma, canvas)
    return GrayImage(np.clip(img, 0, 1)), labels


# --- distortion ---------------------------------------------------------

def displacement_field(shape, d: DistortionSpec, rng_seed: int) -> np.ndarray:
    """Smooth random displacement (dx, dy) per output pixel, shape (2, H, W),
    scaled so its largest magnitude equals ``d.jitter_amplitude``."""
    if d.jitter_amplitude == 0:
        return np.zeros((2,) + tuple(shape))
    rng = np.random.default_rng(rng_seed)
    # smooth at a coarse grid then upsample: cheap and already band-limited
    step = max(1, int(d.jitter_scale // 4))
    small = (shape[0] // step + 2, shape[1] // step + 2)
    fields = []
    for _ in range(2):
        f = ndi.gaussian_filter(rng.standard_normal(small), d.jitter_scale / step, mode="wrap")
        f = ndi.zoom(f, step, order=1)[: shape[0], : shape[1]]
        fields.append(f)
    u = np.stack(fields)
    peak = np.sqrt((u ** 2).sum(0)).max()
    return u * (d.jitter_amplitude / peak) if peak > 0 else u


def _rotation(d: DistortionSpec):
    # y points down, so a counterclockwise display rotation is -angle in (x, y)
    a = -np.deg2rad(d.rotation)
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def _source_coords(shape, d: DistortionSpec, field_: np.ndarray):
    h, w = shape
    c = np.array([(w - 1) / 2, (h - 1) / 2])
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    rinv = _rotation(d).T
    qx = xx - c[0] - d.translation[0]
    qy = yy - c[1] - d.translation[1]
    sx = rinv[0, 0] * qx + rinv[0, 1] * qy + c[0] + field_[0]
    sy = rinv[1, 0] * qx + rinv[1, 1] * qy + c[1] + field_[1]
    return sx, sy


def distort(image: GrayImage, labels: np.ndarray, d: DistortionSpec, rng_seed: int = 0):
    """Apply rotation about the canvas center, translation, elastic jitter
    and intensity noise.

    Intensities are resampled bilinearly, labels by nearest neighbor.
    Pixels that map outside the source become background in the mask and
    ``OUTSIDE`` in the labels.
    """
    if d.is_identity:
        return GrayImage(image.intensities.copy(), image.foreground_mask.copy()), labels.copy()
    shape = image.intensities.shape
    field_ = displacement_field(shape, d, rng_seed)
    sx, sy = _source_coords(shape, d, field_)
    h, w = shape
    inside = (sx > -0.5) & (sx < w - 0.5) & (sy > -0.5) & (sy < h - 0.5)
    coords = np.stack([sy, sx])
    img = ndi.map_coordinates(image.intensities, coords, order=1, mode="nearest")
    ri = np.clip(np.round(sy).astype(np.int64), 0, h - 1)
    ci = np.clip(np.round(sx).astype(np.int64), 0, w - 1)
    lab = np.where(inside, labels[ri, ci], OUTSIDE).astype(labels.dtype)
    mask = inside & image.foreground_mask[ri, ci]
    if d.noise_sigma > 0:
        rng = np.random.default_rng([rng_seed, 1])
        img = img + rng.normal(0, d.noise_sigma, shape)
    img = np.where(mask, np.clip(img, 0, 1), 0.0)
    return GrayImage(img, mask), lab


def transform_points(points: np.ndarray, shape, d: DistortionSpec, rng_seed: int = 0,
                     n_iter: int = 20) -> np.ndarray:
    """Forward-map source (x, y) points into the distorted frame.

    Inverts the output-grid displacement by fixed-point iteration.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    h, w = shape
    c = np.array([(w - 1) / 2, (h - 1) / 2])
    rot = _rotation(d)
    t = np.asarray(d.translation)
    field_ = displacement_field(shape, d, rng_seed)
    q = (pts - c) @ rot.T + c + t
    if d.jitter_amplitude == 0:
        return q
    for _ in range(n_iter):
        coords = np.stack([np.clip(q[:, 1], 0, h - 1), np.clip(q[:, 0], 0, w - 1)])
        u = np.stack([ndi.map_coordinates(field_[k], coords, order=1) for k in range(2)], 1)
        q = (pts - c - u) @ rot.T + c + t
    return q


# --- benchmark scene generation -----------------------------------------

COMPACT_TEXTURES = ("fine_grating", "coarse_grating", "dense_cells", "big_cells", "hatch",
                    "striated")


def _footprint(shape_spec: dict):
    """Center and radius of a disk that contains the shape's footprint."""
    cx, cy = shape_spec["center"]
    if shape_spec["kind"] == "halfopen":
        half_u = shape_spec["length"] / 2 + shape_spec["ramp"] / 2
        half_v = (shape_spec["depth"] + shape_spec["ramp"]) / 2
        ang = np.deg2rad(shape_spec.get("angle", 0.0))
        # local (0, half_v) in canvas coordinates
        ox, oy = -half_v * np.sin(ang), half_v * np.cos(ang)
        return np.array([cx + ox, cy + oy]), float(np.hypot(half_u, half_v))
    a, b = shape_spec["radii"]
    grow = 1.0 + sum(abs(h[0]) for h in shape_spec.get("harmonics", []))
    return np.array([cx, cy]), float(max(a, b) * grow)


def random_distortion(rng: np.random.Generator, max_rotation=15.0, max_translation=300.0,
                      max_jitter=8.0, max_noise=0.05) -> DistortionSpec:
    ang = rng.uniform(0, 2 * np.pi)
    mag = rng.uniform(0, max_translation)
    return DistortionSpec(rotation=float(rng.uniform(-max_rotation, max_rotation)),
                          translation=(float(mag * np.cos(ang)), float(mag * np.sin(ang))),
                          jitter_amplitude=float(rng.uniform(0, max_jitter)),
                          noise_sigma=float(rng.uniform(0, max_noise)))


def make_pair_specs(seed: int, size: int = 1024, n_compact: int = 5, margin: float = 40.0,
                    **distortion_limits):
    """Seeded scene + distortion with ``n_compact`` compact shapes and one
    half-open shape, laid out so every shape stays inside both frames."""
    rng = np.random.default_rng(seed)
    dist = random_distortion(rng, **distortion_limits)
    textures = list(rng.permutation(COMPACT_TEXTURES))
    c = np.array([(size - 1) / 2, (size - 1) / 2])
    a = -np.deg2rad(dist.rotation)
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    t = np.asarray(dist.translation)
    pad = margin + dist.jitter_amplitude

    def fits(center, radius, placed):
        lo, hi = radius + pad, size - 1 - radius - pad
        moved = (center - c) @ rot.T + c + t
        if not (np.all(center >= lo) and np.all(center <= hi)):
            return False
        if not (np.all(moved >= lo) and np.all(moved <= hi)):
            return False
        return all(np.hypot(*(center - pc)) > radius + pr + margin for pc, pr in placed)

    for _attempt in range(200):
        shapes, placed = [], []
        candidates = [("halfopen", None)] + [("compact", k) for k in range(n_compact)]
        ok = True
        for kind, _ in candidates:
            for _try in range(400):
                if kind == "halfopen":
                    s = {"kind": "halfopen", "length": float(rng.uniform(260, 320)),
                         "depth": float(rng.uniform(45, 55)), "ramp": 60.0,
                         "angle": float(rng.uniform(0, 360))}
                else:
                    r1, r2 = rng.uniform(70, 100, 2)
                    s = {"kind": str(rng.choice(["ellipse", "blob"])),
                         "radii": [float(r1), float(r2)], "angle": float(rng.uniform(0, 180))}
                    if s["kind"] == "blob":
                        s["harmonics"] = [[float(rng.uniform(0.03, 0.1)),
                                           float(rng.uniform(0, 2 * np.pi))]
                                          for _ in range(2)]
                s["center"] = [float(v) for v in rng.uniform(0, size, 2)]
                fc, fr = _footprint(s)
                if fits(fc, fr, placed):
                    placed.append((fc, fr))
                    shapes.append(s)
                    break
            else:
                ok = False
                break
        if ok:
            break
    else:
        raise SpecError("could not lay out the requested shapes")
    for s, tex in zip(shapes, textures):
        s["texture"] = str(tex)
        s["texture_angle"] = float(rng.uniform(0, 180))
    # half-open last so compact shapes get labels 1..n_compact
    shapes = shapes[1:] + shapes[:1]
    scene = SceneSpec(width=size, height=size, shapes=shapes,
                      rng_seed=int(rng.integers(2 ** 31)))
    return scene, dist


# --- scoring ------------------------------------------------------------

@dataclass
class DetectionScore:
    recall: float
    precision: float
    best_iou: dict          # planted id -> best IoU over detected regions


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 0.0


def score_detection(detected_masks, labels: np.ndarray, iou_threshold: float = 0.7,
                    planted_ids=None) -> DetectionScore:
    """Recall over planted regions and precision over detected regions.

    A planted region counts as recovered when some detected mask has IoU at
    least ``iou_threshold`` with it.  Precision is 0 for an empty detection.
    """
    if planted_ids is None:
        planted_ids = [int(v) for v in np.unique(labels) if v > 0]
    masks = [np.asarray(m, dtype=bool) for m in detected_masks]
    ious = np.array([[_iou(m, labels == p) for p in planted_ids] for m in masks]).reshape(
        len(masks), len(planted_ids))
    best = {p: (float(ious[:, k].max()) if len(masks) else 0.0)
            for k, p in enumerate(planted_ids)}
    recall = (sum(v >= iou_threshold for v in best.values()) / len(planted_ids)
              if planted_ids else 1.0)
    precision = (float((ious.max(axis=1) >= iou_threshold).mean())
                 if len(masks) and planted_ids else 0.0)
    return DetectionScore(float(recall), precision, best)


def point_distances(points: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Distance from every point to its nearest target point."""
    from scipy.spatial import cKDTree

    return cKDTree(np.asarray(target, dtype=np.float64)).query(
        np.asarray(points, dtype=np.float64).reshape(-1, 2))[0]


def score_open_edge(midpoints: np.ndarray, edge_points: np.ndarray, tolerance: float):
    """Fraction of midpoints within ``tolerance`` of the planted edge, and the
    mean midpoint distance."""
    d = point_distances(midpoints, edge_points)
    return float((d <= tolerance).mean()), float(d.mean())


def structure_boundaries(labels: np.ndarray, open_edges: dict) -> dict:
    """Boundary points per planted structure: the contour of its label for
    compact structures, the planted sharp edge for half-open ones."""
    out = {}
    for s in (int(v) for v in np.unique(labels) if v > 0):
        if s in open_edges:
            out[s] = np.asarray(open_edges[s], dtype=np.float64)
            continue
        m = labels == s
        edge = m & ~ndi.binary_erosion(m)
        ys, xs = np.nonzero(edge)
        out[s] = np.column_stack([xs, ys]).astype(np.float64)
    return out


@dataclass
class LandmarkTruth:
    primary: int | None
    overlaps: frozenset


def landmark_truth(kind: str, pixel_mask, midpoints, labels: np.ndarray, boundaries_: dict,
                   tolerance: float, min_iou: float = 0.5, min_overlap: float = 0.2):
    """Which planted structure a detected landmark stands for.

    Closed landmarks use pixel IoU with each planted label.  Open landmarks
    use the fraction of midpoints within ``tolerance`` of each structure's
    boundary.  ``overlaps`` lists every structure the landmark touches
    substantially.
    """
    planted = [int(v) for v in np.unique(labels) if v > 0]
    if kind == "closed":
        m = np.asarray(pixel_mask, dtype=bool)
        area = max(int(m.sum()), 1)
        ious = {s: _iou(m, labels == s) for s in planted}
        cover = {s: float((m & (labels == s)).sum()) / area for s in planted}
        primary = max(ious, key=ious.get) if ious else None
        if primary is not None and ious[primary] < min_iou:
            primary = None
        overlaps = frozenset(s for s in planted if cover[s] >= min_overlap)
    else:
        frac = {s: float((point_distances(midpoints, pts) <= tolerance).mean())
                for s, pts in boundaries_.items() if len(pts)}
        primary = max(frac, key=frac.get) if frac else None
        if primary is not None and frac[primary] < 0.5:
            primary = None
        overlaps = frozenset(s for s, f in frac.items() if f >= min_overlap)
    return LandmarkTruth(primary, overlaps)


def score_matching(matches, truth_a: dict, truth_b: dict):
    """Classify matches as correct, partially correct or wrong.

    ``matches`` is a list of (landmark id in A, landmark id in B); the truth
    dicts map landmark ids to :class:`LandmarkTruth`.  Returns a dict with
    the three fractions, the match count, a ``no_matches`` flag and the set
    of planted structures matched correctly.
    """
    counts = {"correct": 0, "partial": 0, "wrong": 0}
    matched = set()
    for a, b in matches:
        ta, tb = truth_a[a], truth_b[b]
        if ta.primary is not None and ta.primary == tb.primary:
            counts["correct"] += 1
            matched.add(ta.primary)
        elif ta.overlaps & tb.overlaps:
            counts["partial"] += 1
        else:
            counts["wrong"] += 1
    n = len(matches)
    out = {k: (v / n if n else 0.0) for k, v in counts.items()}
    out.update(n_matches=n, no_matches=n == 0, matched_structures=sorted(matched))
    return out


def assign_structure(points: np.ndarray, labels: np.ndarray, tolerance: float):
    """Planted structure that most of ``points`` lie on or near (within
    ``tolerance`` of its pixels); None when no structure gets a majority."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    best, best_frac = None, 0.5
    for s in (int(v) for v in np.unique(labels) if v > 0):
        ys, xs = np.nonzero(labels == s)
        frac = float((point_distances(pts, np.column_stack([xs, ys])) <= tolerance).mean())
        if frac > best_frac:
            best, best_frac = s, frac
    return best


def open_edge_group(groups, labels: np.ndarray, structure: int, tolerance: float):
    """Highest-ranked boundary group assigned to ``structure``, or None."""
    for g in sorted(groups, key=lambda g: g.rank):
        if assign_structure(g.midpoints, labels, tolerance) == structure:
            return g
    return None
