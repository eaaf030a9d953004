"""Rotation-invariant Gabor texture features and texton codebooks.

Pixels are described by the quadrature energy of a bank of complex Gabor
filters (orientations x scales).  Before clustering, each feature vector is
circularly shifted along the orientation axis so that its dominant direction
sits at index 0, which decouples texture identity from section orientation.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import ndimage as ndi

from .errors import InputError, ParameterError

log = logging.getLogger(__name__)

CODEBOOK_VERSION = 1
NO_TEXTON = -1


@dataclass
class GrayImage:
    """Grayscale intensities in [0, 1] plus a foreground mask."""

    intensities: np.ndarray
    foreground_mask: np.ndarray = None

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.intensities.ndim != 2 or self.intensities.size == 0:
            raise ParameterError("image must be a nonempty 2-D array")
        if self.foreground_mask is None:
            self.foreground_mask = np.ones(self.intensities.shape, dtype=bool)
        self.foreground_mask = np.asarray(self.foreground_mask, dtype=bool)
        if self.foreground_mask.shape != self.intensities.shape:
            raise ParameterError("mask and intensities differ in shape")

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]


def load_image(path) -> GrayImage:
    """Read an 8/16-bit grayscale PNG or TIFF (color is converted to luma)."""
    from PIL import Image, UnidentifiedImageError

    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                scale = 65535.0
            elif im.mode == "F":
                arr = np.asarray(im, dtype=np.float64)
                scale = max(float(arr.max()), 1.0)
            else:
                arr = np.asarray(im.convert("L"), dtype=np.float64)
                scale = 255.0
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise InputError(f"{path} is not a 2-D grayscale image")
    return GrayImage(np.clip(arr / scale, 0.0, 1.0))


def save_image(path, image: np.ndarray) -> None:
    """Write intensities in [0, 1] as an 8-bit PNG."""
    from PIL import Image

    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


@dataclass
class GaborBank:
    n_orientations: int
    n_scales: int
    frequencies: np.ndarray
    sigmas: np.ndarray
    kernels: list  # kernels[o][s], complex 2-D arrays

    @property
    def orientation_step(self) -> float:
        return np.pi / self.n_orientations

    @property
    def orientations(self) -> np.ndarray:
        return np.arange(self.n_orientations) * self.orientation_step

    @property
    def dimension(self) -> int:
        return self.n_orientations * self.n_scales

    @property
    def half_width(self) -> int:
        """Half side length of the largest kernel."""
        return max(k.shape[0] // 2 for row in self.kernels for k in row)

    def flat_kernels(self):
        """Kernels in feature order: index = orientation * n_scales + scale."""
        return [k for row in self.kernels for k in row]


def _sigma_for(frequency: float, bandwidth: float) -> float:
    # Gaussian width giving a half-peak bandwidth of `bandwidth` octaves
    return (np.sqrt(np.log(2) / 2) / (np.pi * frequency)
            * (2.0 ** bandwidth + 1) / (2.0 ** bandwidth - 1))


def build_gabor_bank(n_orientations: int = 9, n_scales: int = 11,
                     base_frequency: float = 0.2,
                     frequency_ratio: float = np.sqrt(2),
                     bandwidth: float = 1.0) -> GaborBank:
    """Build a bank of DC-free complex Gabor kernels.

    Orientations evenly sample [0, pi).  Scale ``s`` has frequency
    ``base_frequency / frequency_ratio**s`` cycles/pixel and an isotropic
    Gaussian envelope sized for ``bandwidth`` octaves.  Envelopes are
    normalized to unit sum, so a matched sinusoid of amplitude A responds
    with magnitude close to A / 2 at every scale.
    """
    if int(n_orientations) < 1 or int(n_scales) < 1:
        raise ParameterError("n_orientations and n_scales must be >= 1")
    if not 0 < base_frequency <= 0.5:
        raise ParameterError("base_frequency must lie in (0, 0.5]")
    if not frequency_ratio > 1:
        raise ParameterError("frequency_ratio must be > 1")
    if not bandwidth > 0:
        raise ParameterError("bandwidth must be > 0")
    n_orientations, n_scales = int(n_orientations), int(n_scales)

    freqs = base_frequency / frequency_ratio ** np.arange(n_scales)
    sigmas = np.array([_sigma_for(f, bandwidth) for f in freqs])
    kernels = []
    for o in range(n_orientations):
        theta = o * np.pi / n_orientations
        row = []
        for f, sigma in zip(freqs, sigmas):
            half = int(np.ceil(3 * sigma))
            y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
            envelope = np.exp(-(x ** 2 + y ** 2) / (2 * sigma ** 2))
            envelope /= envelope.sum()
            carrier = np.exp(2j * np.pi * f * (x * np.cos(theta) + y * np.sin(theta)))
            kern = envelope * carrier
            # Morlet-style correction: remove the DC component
            kern -= envelope * kern.sum()
            row.append(kern)
        kernels.append(row)
    return GaborBank(n_orientations, n_scales, freqs, sigmas, kernels)


@dataclass
class FeatureField:
    """Per-pixel Gabor energies, shape (H, W, n_orientations * n_scales)."""

    values: np.ndarray
    mask: np.ndarray
    n_orientations: int
    n_scales: int

    def vectors(self) -> np.ndarray:
        """Foreground feature vectors in raster order."""
        return self.values[self.mask]


def feature_mask(mask: np.ndarray, border: int) -> np.ndarray:
    """Erode ``mask`` so that no pixel lies within ``border`` px of background
    or of the image edge."""
    mask = np.asarray(mask, dtype=bool)
    if border <= 0:
        return mask.copy()
    return ndi.minimum_filter(mask.astype(np.uint8), size=2 * border + 1,
                              mode="constant", cval=0).astype(bool)


def apply_bank(image: GrayImage, bank: GaborBank, border: int | None = None,
               dtype=np.float32) -> FeatureField:
    """Filter ``image`` with every kernel and return response magnitudes.

    Pixels closer than ``border`` (default: the largest kernel's half width)
    to the image edge or to background are dropped from the mask.
    """
    if border is None:
        border = bank.half_width
    img = image.intensities
    h, w = img.shape
    pad = bank.half_width
    padded = np.pad(img, pad, mode="reflect" if min(h, w) > pad else "edge")
    # circular convolution is exact on the crop because pad >= every kernel
    # half width, so no extra zero padding is needed
    shape = (sfft.next_fast_len(padded.shape[0]), sfft.next_fast_len(padded.shape[1]))
    cdtype = np.complex64 if dtype == np.float32 else np.complex128
    spectrum = sfft.fft2(padded.astype(cdtype), s=shape)

    mask = feature_mask(image.foreground_mask, border)
    values = np.zeros((h, w, bank.dimension), dtype=dtype)
    for idx, kern in enumerate(bank.flat_kernels()):
        kh = kern.shape[0] // 2
        kspec = sfft.fft2(kern.astype(cdtype), s=shape)
        resp = sfft.ifft2(spectrum * kspec)
        # full convolution: output (r, c) of the padded image sits at r + kh
        crop = resp[pad + kh:pad + kh + h, pad + kh:pad + kh + w]
        values[..., idx] = np.abs(crop)
    values[~mask] = 0
    return FeatureField(values, mask, bank.n_orientations, bank.n_scales)


def directional_energy(vectors: np.ndarray, n_orientations: int) -> np.ndarray:
    v = np.asarray(vectors)
    return v.reshape(v.shape[:-1] + (n_orientations, -1)).sum(axis=-1)


def rotation_align(feature: np.ndarray, n_orientations: int):
    """Shift a feature vector (or a stack of them) so its directional energy
    peaks at orientation 0.

    Returns ``(aligned, mode_index)``.  Ties go to the lowest orientation
    index, so a zero or uniformly-directional vector is left unchanged.
    """
    feature = np.asarray(feature)
    if feature.shape[-1] % n_orientations:
        raise ParameterError("feature length is not a multiple of n_orientations")
    n_scales = feature.shape[-1] // n_orientations
    grid = feature.reshape(feature.shape[:-1] + (n_orientations, n_scales))
    energy = grid.sum(axis=-1)
    mode = np.argmax(energy, axis=-1)
    if feature.ndim == 1:
        aligned = np.roll(grid, -int(mode), axis=0).reshape(feature.shape)
        return aligned, int(mode)
    idx = (np.arange(n_orientations)[None, :] + mode.reshape(-1, 1)) % n_orientations
    flat = grid.reshape(-1, n_orientations, n_scales)
    aligned = np.take_along_axis(flat, idx[:, :, None], axis=1)
    return aligned.reshape(feature.shape), mode


@dataclass
class TextonCodebook:
    centroids: np.ndarray
    n_orientations: int
    n_scales: int
    merge_threshold: float
    rng_seed: int
    initial_k: int = 0
    inertia_history: list = field(default_factory=list, repr=False, compare=False)

    @property
    def k(self) -> int:
        return len(self.centroids)

    def to_json(self) -> dict:
        return {
            "version": CODEBOOK_VERSION,
            "n_orientations": self.n_orientations,
            "n_scales": self.n_scales,
            "initial_k": self.initial_k,
            "merge_threshold": float(self.merge_threshold),
            "rng_seed": int(self.rng_seed),
            "centroids": [[float(x) for x in c] for c in self.centroids],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TextonCodebook":
        try:
            if doc["version"] != CODEBOOK_VERSION:
                raise InputError(f"unsupported codebook version {doc['version']}")
            cents = np.asarray(doc["centroids"], dtype=np.float64)
            cb = cls(cents, int(doc["n_orientations"]), int(doc["n_scales"]),
                     float(doc["merge_threshold"]), int(doc["rng_seed"]),
                     int(doc.get("initial_k", len(cents))))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed codebook: {exc}") from exc
        if cents.ndim != 2 or cents.shape[1] != cb.n_orientations * cb.n_scales:
            raise InputError("codebook centroid dimension mismatch")
        return cb

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1))

    @classmethod
    def load(cls, path) -> "TextonCodebook":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read codebook {path}: {exc}") from exc
        return cls.from_json(doc)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            pick = rng.integers(n)
        else:
            pick = int(np.searchsorted(np.cumsum(closest), rng.random() * total))
            pick = min(pick, n - 1)
        centers[i] = x[pick]
        closest = np.minimum(closest, _sq_dists(x, centers[i:i + 1])[:, 0])
    return centers


def kmeans(x: np.ndarray, k: int, rng_seed: int, max_iter: int = 50, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(centroids, labels, inertia_history)``.  Empty clusters keep
    their previous centroid, so the objective never increases.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    centers = _kmeanspp(x, k, rng)
    history = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        new_labels = d.argmin(axis=1)
        history.append(float(d[np.arange(len(x)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if len(history) > 1 and history[-2] - history[-1] <= tol * history[-2]:
            # one last assignment so labels match the final centroids
            d = _sq_dists(x, centers)
            labels = d.argmin(axis=1)
            history.append(float(d[np.arange(len(x)), labels].sum()))
            break
    return centers, labels, history


def merge_centroids(centroids: np.ndarray, counts: np.ndarray, threshold: float):
    """Single-linkage merge of centroids closer than ``threshold``.

    Merged centroids are count-weighted means.  Repeats until every pair of
    remaining centroids is at least ``threshold`` apart.
    """
    from scipy.cluster.hierarchy import fcluster, linkage

    cents = np.asarray(centroids, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    while len(cents) > 1:
        z = linkage(cents, method="single")
        if z[:, 2].min() >= threshold:
            break
        # fcluster merges at distance <= t; the nudge makes the rule strict
        groups = fcluster(z, t=np.nextafter(threshold, -np.inf), criterion="distance")
        # order groups by their lowest member index for a stable layout
        order = sorted(set(groups), key=lambda g: np.flatnonzero(groups == g)[0])
        new_c, new_n = [], []
        for g in order:
            members = groups == g
            w = np.maximum(counts[members], 1e-12)
            new_c.append((cents[members] * w[:, None]).sum(0) / w.sum())
            new_n.append(counts[members].sum())
        cents, counts = np.array(new_c), np.array(new_n)
    return cents, counts


def learn_codebook(features: np.ndarray, n_orientations: int, initial_k: int = 100,
                   merge_threshold: float | None = None, rng_seed: int = 0,
                   merge_fraction: float = 0.3, max_iter: int = 50) -> TextonCodebook:
    """K-Means on aligned feature vectors, then merge nearby centroids.

    ``merge_threshold=None`` uses ``merge_fraction`` times the median
    pairwise distance between the K-Means centroids.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ParameterError("features must be an (n, d) array")
    if initial_k < 1 or len(features) < initial_k:
        raise ParameterError(
            f"need at least initial_k={initial_k} samples, got {len(features)}")
    cents, labels, history = kmeans(features, initial_k, rng_seed, max_iter=max_iter)
    counts = np.bincount(labels, minlength=initial_k)
    if merge_threshold is None:
        from scipy.spatial.distance import pdist

        pd = pdist(cents)
        merge_threshold = merge_fraction * float(np.median(pd)) if len(pd) else 0.0
    cents, _ = merge_centroids(cents, counts, merge_threshold)
    return TextonCodebook(cents, n_orientations, features.shape[1] // n_orientations,
                          float(merge_threshold), int(rng_seed), int(initial_k), history)


def sample_features(field: FeatureField, n_samples: int, rng_seed: int) -> np.ndarray:
    """Seeded subsample of aligned foreground feature vectors."""
    vecs = field.vectors()
    if len(vecs) > n_samples:
        rng = np.random.default_rng(rng_seed)
        idx = np.sort(rng.choice(len(vecs), size=n_samples, replace=False))
        vecs = vecs[idx]
    aligned, _ = rotation_align(vecs.astype(np.float64), field.n_orientations)
    return aligned


def assign_textons(field: FeatureField, codebook: TextonCodebook,
                   chunk: int = 262144) -> np.ndarray:
    """Nearest-centroid texton index per foreground pixel; background gets
    ``NO_TEXTON``."""
    if field.values.shape[-1] != codebook.centroids.shape[1]:
        raise ParameterError("feature dimension does not match codebook")
    tmap = np.full(field.mask.shape, NO_TEXTON, dtype=np.int32)
    vecs = field.vectors()
    cents = codebook.centroids.astype(np.float32)
    half_norm = 0.5 * (cents * cents).sum(1)
    out = np.empty(len(vecs), dtype=np.int32)
    for start in range(0, len(vecs), chunk):
        block, _ = rotation_align(vecs[start:start + chunk], field.n_orientations)
        # |x - c|^2 ranks like |c|^2 / 2 - x.c; argmin takes the lowest index on ties
        score = half_norm[None, :] - block.astype(np.float32) @ cents.T
        out[start:start + chunk] = score.argmin(axis=1)
    tmap[field.mask] = out
    return tmap
