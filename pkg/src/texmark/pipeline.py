"""End-to-end detection per section and matching between sections."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boundaries, matching, regions, segmentation, stats, texture
from .errors import CompatibilityError, ConfigError, InputError

log = logging.getLogger(__name__)

RESULT_VERSION = 1
MATCH_VERSION = 1


@dataclass
class PipelineConfig:
    # texture
    n_orientations: int = 9
    n_scales: int = 11
    base_frequency: float = 0.2
    frequency_ratio: float = float(np.sqrt(2))
    bandwidth: float = 1.0
    border_px: int | None = None
    codebook_samples: int = 100_000
    initial_k: int = 100
    merge_threshold: float | None = None
    merge_fraction: float = 0.3
    kmeans_max_iter: int = 50
    # superpixels
    superpixel_area: float = 3000.0
    compactness: float = 10.0
    slic_iterations: int = 10
    smooth_sigma: float = 4.0
    min_size_fraction: float = 0.25
    # regions
    w_contrast: float = 1.0
    w_coherence: float = 0.5
    w_compactness: float = 0.25
    compactness_clamp: float = 1.0
    max_area_fraction: float = 0.10
    pixels_per_sample: float = 128.0
    region_cut: float = 0.4
    min_cluster_size: int = 5
    max_frontier_pvalue: float = 1.0
    # boundaries
    vote_percentile: float = 75.0
    boundary_cut: float = 0.4
    min_open_points: int = 3
    # landmarks and matching
    coincide_threshold: float = 0.5
    max_points: int = 60
    w_interior: float = 1.0
    w_shape: float = 1.0
    w_exterior: float = 0.5
    w_location: float = 0.01
    tolerance_mm: float = 1.0
    normalize_exterior: bool = False
    rotation_invariant_shape: bool = False
    # output
    top_closed: int = 20
    top_open: int = 10
    microns_per_pixel: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            (self.n_orientations >= 1 and self.n_scales >= 1, "bank counts must be >= 1"),
            (0 < self.base_frequency <= 0.5, "base_frequency must lie in (0, 0.5]"),
            (self.frequency_ratio > 1, "frequency_ratio must be > 1"),
            (self.bandwidth > 0, "bandwidth must be > 0"),
            (self.border_px is None or self.border_px >= 0, "border_px must be >= 0"),
            (self.codebook_samples >= self.initial_k >= 1, "need codebook_samples >= initial_k >= 1"),
            (self.merge_threshold is None or self.merge_threshold >= 0, "merge_threshold must be >= 0"),
            (self.superpixel_area >= 1, "superpixel_area must be >= 1"),
            (self.compactness > 0, "compactness must be > 0"),
            (0 < self.max_area_fraction <= 1, "max_area_fraction must lie in (0, 1]"),
            (self.pixels_per_sample > 0, "pixels_per_sample must be > 0"),
            (0 <= self.region_cut <= 1 and 0 <= self.boundary_cut <= 1, "cuts must lie in [0, 1]"),
            (self.min_cluster_size >= 1, "min_cluster_size must be >= 1"),
            (0 <= self.max_frontier_pvalue <= 1, "max_frontier_pvalue must lie in [0, 1]"),
            (0 <= self.vote_percentile <= 100, "vote_percentile must lie in [0, 100]"),
            (0 <= self.coincide_threshold <= 1, "coincide_threshold must lie in [0, 1]"),
            (self.max_points >= 2, "max_points must be >= 2"),
            (self.tolerance_mm >= 0, "tolerance_mm must be >= 0"),
            (self.top_closed >= 0 and self.top_open >= 0, "top-k counts must be >= 0"),
            (self.microns_per_pixel > 0, "microns_per_pixel must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not np.isfinite(v):
                raise ConfigError(f"{f.name} must be finite")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        doc = {k: v for k, v in doc.items() if k != "version"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_json(doc)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()

    @property
    def tolerance_px(self) -> float:
        return self.tolerance_mm * 1000.0 / self.microns_per_pixel

    def bank(self) -> texture.GaborBank:
        return texture.build_gabor_bank(self.n_orientations, self.n_scales, self.base_frequency,
                                        self.frequency_ratio, self.bandwidth)

    def significance_weights(self) -> regions.SignificanceWeights:
        return regions.SignificanceWeights(self.w_contrast, self.w_coherence,
                                           self.w_compactness, self.compactness_clamp)

    def match_weights(self, no_location: bool = False) -> matching.MatchWeights:
        return matching.MatchWeights(self.w_interior, self.w_shape, self.w_exterior,
                                     0.0 if no_location else self.w_location,
                                     self.tolerance_px, self.normalize_exterior,
                                     self.rotation_invariant_shape)


@dataclass
class SectionResult:
    section_id: str
    closed: list
    open: list
    config: dict
    provenance: dict
    n_superpixels: int = 0
    from_cache: bool = field(default=False, compare=False)

    @property
    def landmarks(self) -> list:
        return self.closed + self.open

    def to_json(self) -> dict:
        return {
            "version": RESULT_VERSION,
            "section_id": self.section_id,
            "n_superpixels": self.n_superpixels,
            "provenance": self.provenance,
            "config": self.config,
            "closed": [lm.to_json() for lm in self.closed],
            "open": [lm.to_json() for lm in self.open],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, doc: dict) -> "SectionResult":
        try:
            if doc.get("version") != RESULT_VERSION:
                raise InputError(f"unsupported result version {doc.get('version')}")
            return cls(doc["section_id"],
                       [matching.Landmark.from_json(d) for d in doc["closed"]],
                       [matching.Landmark.from_json(d) for d in doc["open"]],
                       doc["config"], doc["provenance"], int(doc.get("n_superpixels", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed section result: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SectionResult":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read result {path}: {exc}") from exc
        return cls.from_json(doc)


@dataclass
class Detection:
    """A section result together with the intermediates that produced it."""

    result: SectionResult
    tmap: np.ndarray
    spmap: segmentation.SuperpixelMap
    graph: segmentation.AdjacencyGraph
    hists: np.ndarray
    proposals: list
    clusters: list
    votes: dict
    groups: list


# --- texture stage ------------------------------------------------------

def compute_features(image: texture.GrayImage, config: PipelineConfig) -> texture.FeatureField:
    return texture.apply_bank(image, config.bank(), config.border_px)


def learn_codebook(fields, config: PipelineConfig) -> texture.TextonCodebook:
    """Pool seeded feature samples from every section and learn one codebook."""
    fields = list(fields)
    per = max(1, config.codebook_samples // max(len(fields), 1))
    samples = [texture.sample_features(f, per, config.rng_seed + i) for i, f in enumerate(fields)]
    pooled = np.concatenate(samples)
    return texture.learn_codebook(pooled, config.n_orientations, config.initial_k,
                                  config.merge_threshold, config.rng_seed,
                                  config.merge_fraction, config.kmeans_max_iter)


def build_codebook(images, config: PipelineConfig) -> texture.TextonCodebook:
    """Codebook for a stack of images, computing one feature field at a time."""
    per = max(1, config.codebook_samples // max(len(images), 1))
    samples = []
    for i, img in enumerate(images):
        if not isinstance(img, texture.GrayImage):
            img = texture.load_image(img)
        samples.append(texture.sample_features(compute_features(img, config), per,
                                               config.rng_seed + i))
    pooled = np.concatenate(samples)
    return texture.learn_codebook(pooled, config.n_orientations, config.initial_k,
                                  config.merge_threshold, config.rng_seed,
                                  config.merge_fraction, config.kmeans_max_iter)


def _check_codebook(codebook: texture.TextonCodebook, config: PipelineConfig):
    if (codebook.n_orientations, codebook.n_scales) != (config.n_orientations, config.n_scales):
        raise CompatibilityError("codebook was built with a different Gabor bank")


# --- per-section detection ----------------------------------------------

def superpixels(image: texture.GrayImage, mask: np.ndarray, config: PipelineConfig):
    fg = texture.GrayImage(image.intensities, mask)
    n_fg = int(mask.sum())
    if n_fg == 0:
        raise InputError("image has no usable foreground after border exclusion")
    target = max(1, min(n_fg, int(round(n_fg / config.superpixel_area))))
    return segmentation.slic(fg, target, config.compactness, config.rng_seed,
                             config.slic_iterations, config.smooth_sigma,
                             config.min_size_fraction)


def detect_from_textons(tmap: np.ndarray, spmap: segmentation.SuperpixelMap,
                        codebook: texture.TextonCodebook, config: PipelineConfig,
                        section_id: str = "", provenance: dict | None = None) -> Detection:
    graph = segmentation.build_adjacency(spmap)
    hists = stats.superpixel_histograms(tmap, spmap.labels, codebook.k, spmap.n_superpixels)
    weights = config.significance_weights()
    proposals = regions.grow_all(graph, hists, config.max_area_fraction, weights,
                                 config.pixels_per_sample)
    clusters = regions.cluster_proposals(proposals, config.region_cut, config.min_cluster_size)
    reps = []
    for c in clusters:
        if config.max_frontier_pvalue < 1.0:
            reg = regions.Region.from_members(c.representative.members, graph, hists)
            if reg.frontier and -regions.score_contrast(
                    reg, hists, config.pixels_per_sample) > config.max_frontier_pvalue:
                continue
        reps.append(c.representative)
    reps = reps[: config.top_closed]

    votes = boundaries.vote_boundaries(proposals, hists, graph)
    kept = boundaries.threshold_segments(
        votes, boundaries.default_min_vote(votes, config.vote_percentile))
    groups = boundaries.group_segments(kept, graph, config.boundary_cut)
    closed, opened = matching.unify_landmarks(
        reps, groups, graph, hists, config.coincide_threshold, config.max_points,
        config.min_open_points)
    opened = opened[: config.top_open]
    for lm in opened:
        lm.id = len(closed) + lm.rank
    result = SectionResult(section_id, closed, opened, config.to_json(),
                           dict(provenance or {}, codebook_hash=codebook.digest(),
                                config_hash=config.digest()),
                           spmap.n_superpixels)
    return Detection(result, tmap, spmap, graph, hists, proposals, clusters, votes, groups)


def detect_image(image: texture.GrayImage, codebook: texture.TextonCodebook,
                 config: PipelineConfig, section_id: str = "", field_=None,
                 provenance: dict | None = None) -> Detection:
    """Run the full pipeline on an in-memory image."""
    _check_codebook(codebook, config)
    if field_ is None:
        field_ = compute_features(image, config)
    tmap = texture.assign_textons(field_, codebook)
    spmap = superpixels(image, field_.mask, config)
    return detect_from_textons(tmap, spmap, codebook, config, section_id, provenance)


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def detect(image_path, codebook: texture.TextonCodebook, config: PipelineConfig,
           cache_dir=None) -> SectionResult:
    """Detect landmarks in an image file, reusing cached results when the
    image content, config and codebook are unchanged."""
    image_path = Path(image_path)
    try:
        image_hash = _file_digest(image_path)
    except OSError as exc:
        raise InputError(f"cannot read image {image_path}: {exc}") from exc
    key = hashlib.sha256(
        f"{image_hash}:{config.digest()}:{codebook.digest()}".encode()).hexdigest()[:32]
    section_id = image_path.stem
    cached = Path(cache_dir) / f"{key}.result.json" if cache_dir else None
    if cached is not None and cached.exists():
        try:
            res = SectionResult.from_json(json.loads(cached.read_text()))
            res.from_cache = True
            return res
        except (InputError, json.JSONDecodeError, OSError) as exc:
            log.warning("cache entry %s is corrupt (%s); rebuilding", cached, exc)
    image = texture.load_image(image_path)
    det = detect_image(image, codebook, config, section_id,
                       provenance={"image_hash": image_hash})
    if cached is not None:
        cached.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(cached.with_name(f"{key}.stage.npz"),
                            tmap=det.tmap, labels=det.spmap.labels)
        cached.write_text(det.result.dumps())
    return det.result


# --- matching -----------------------------------------------------------

def match_sections(a: SectionResult, b: SectionResult, weights: matching.MatchWeights,
                   no_location: bool = False) -> dict:
    """Mutual-nearest landmark matching; ``no_location`` drops the location
    term."""
    ha, hb = a.provenance.get("codebook_hash"), b.provenance.get("codebook_hash")
    if ha != hb:
        raise CompatibilityError("sections were detected with different codebooks")
    if no_location:
        weights = dataclasses.replace(weights, location=0.0)
    matches = matching.mutual_nearest_match(a.landmarks, b.landmarks, weights)
    return {
        "version": MATCH_VERSION,
        "section_a": a.section_id,
        "section_b": b.section_id,
        "weights": {k: v for k, v in dataclasses.asdict(weights).items()},
        "tolerance_px": weights.tolerance_px,
        "no_location": bool(no_location),
        "pairs": [m.to_json() for m in matches],
        "landmarks_a": [_outline_json(lm) for lm in a.landmarks],
        "landmarks_b": [_outline_json(lm) for lm in b.landmarks],
    }


def _outline_json(lm: matching.Landmark) -> dict:
    return {"id": lm.id, "kind": lm.kind,
            "midpoints": [[round(float(x), 4), round(float(y), 4)] for x, y in lm.midpoints]}


def report_landmarks(report: dict, side: str) -> dict:
    """Outline-only landmarks of one side of a match report, keyed by id."""
    out = {}
    for d in report.get(f"landmarks_{side}", []):
        out[int(d["id"])] = matching.Landmark(
            int(d["id"]), d["kind"], [], np.asarray(d["midpoints"], dtype=np.float64).reshape(-1, 2),
            np.zeros((0, 0)), np.zeros(0))
    return out


def load_report(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read match report {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != MATCH_VERSION or "pairs" not in doc:
        raise InputError(f"{path} is not a version {MATCH_VERSION} match report")
    return doc


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1)
