"""Region significance, greedy region growing and proposal clustering.

A region is a connected set of superpixel ids.  Its significance combines
how clearly its texture differs from every surrounding superpixel
(contrast), how well its members agree with the region average
(coherence), and a perimeter/area proxy (compactness).

P-values are computed on counts divided by ``pixels_per_sample``: texton
labels of neighboring pixels are strongly correlated, so raw pixel counts
overstate the evidence by orders of magnitude.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .segmentation import AdjacencyGraph
from .stats import _pearson, _pvalues, chi2_pvalues


@dataclass(frozen=True)
class SignificanceWeights:
    contrast: float = 1.0
    coherence: float = 0.5
    compactness: float = 0.25
    compactness_clamp: float = 1.0

    def __post_init__(self):
        vals = (self.contrast, self.coherence, self.compactness, self.compactness_clamp)
        if not all(np.isfinite(v) for v in vals):
            raise ParameterError("significance weights must be finite")


@dataclass
class Region:
    members: frozenset
    frontier: frozenset
    histogram: np.ndarray

    @classmethod
    def from_members(cls, members, graph: AdjacencyGraph, hists: np.ndarray) -> "Region":
        members = frozenset(int(m) for m in members)
        if not members:
            raise ParameterError("region must have at least one member")
        frontier = set()
        for m in members:
            frontier.update(graph.neighbors[m])
        frontier = frozenset(frontier - members)
        hist = np.asarray(hists)[sorted(members)].sum(axis=0)
        return cls(members, frontier, hist)


def _scaled(h, pixels_per_sample):
    return np.asarray(h, dtype=np.float64) / pixels_per_sample


def score_contrast(region: Region, hists, pixels_per_sample: float = 1.0) -> float:
    """Negative of the largest p-value between the region and any frontier
    superpixel."""
    if not region.frontier:
        raise ParameterError("region has no surrounding superpixels")
    front = np.asarray(hists)[sorted(region.frontier)]
    p = chi2_pvalues(_scaled(region.histogram, pixels_per_sample),
                     _scaled(front, pixels_per_sample))
    return -float(p.max())


def score_coherence(region: Region, hists, pixels_per_sample: float = 1.0) -> float:
    """Mean p-value between the region histogram and each member's."""
    inner = np.asarray(hists)[sorted(region.members)]
    p = chi2_pvalues(_scaled(region.histogram, pixels_per_sample),
                     _scaled(inner, pixels_per_sample))
    return float(p.mean())


def score_compactness(region: Region) -> float:
    """|T(S)| / |S|^2."""
    return len(region.frontier) / len(region.members) ** 2


def significance(region: Region, weights: SignificanceWeights, hists,
                 pixels_per_sample: float = 1.0) -> float:
    comp = min(score_compactness(region), weights.compactness_clamp)
    return (weights.contrast * score_contrast(region, hists, pixels_per_sample)
            + weights.coherence * score_coherence(region, hists, pixels_per_sample)
            + weights.compactness * comp)


@dataclass
class RegionProposal:
    """Growth trace from one seed.

    ``added[t]`` is the superpixel added at iteration ``t`` (``added[0]`` is
    the seed) and ``scores[t]`` the significance of the region after it.
    """

    seed: int
    added: list
    scores: list
    best_index: int

    @property
    def members(self) -> frozenset:
        return frozenset(self.added[: self.best_index + 1])

    @property
    def best_score(self) -> float:
        return self.scores[self.best_index]

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "members": sorted(self.members),
            "best_score": self.best_score,
            "trace_scores": list(self.scores),
        }


def grow_region(seed: int, graph: AdjacencyGraph, hists: np.ndarray,
                max_area_fraction: float = 0.10,
                weights: SignificanceWeights = SignificanceWeights(),
                pixels_per_sample: float = 1.0, areas=None) -> RegionProposal:
    """Greedy region growing from ``seed``.

    At every step the frontier superpixel with the smallest chi-squared
    distance to the current region histogram joins (ties: lowest id).
    Growth stops once the region covers ``max_area_fraction`` of the
    foreground or the frontier is empty.  The prefix with the highest
    significance is the proposal.  A region with no frontier at all scores
    0 for contrast.
    """
    hists = np.asarray(hists)
    n = len(hists)
    if not 0 <= seed < n:
        raise ParameterError(f"invalid seed {seed}")
    areas = hists.sum(axis=1) if areas is None else np.asarray(areas)
    if areas[seed] <= 0:
        raise ParameterError(f"seed {seed} has no foreground pixels")
    cap = max_area_fraction * float(areas.sum())
    test = hists / float(pixels_per_sample)
    n_test = test.sum(axis=1)
    unit = hists / np.maximum(hists.sum(axis=1), 1)[:, None].astype(np.float64)
    w = weights

    in_region = np.zeros(n, dtype=bool)
    in_front = np.zeros(n, dtype=bool)
    in_region[seed] = True
    in_front[list(graph.neighbors[seed])] = True
    members = [seed]
    h_s = hists[seed].astype(np.float64).copy()
    area = float(areas[seed])
    added, scores = [seed], []

    while True:
        front = np.flatnonzero(in_front)
        rows = np.concatenate([np.asarray(members), front])
        t_s = h_s / pixels_per_sample
        stat, dof = _pearson(t_s, t_s.sum(), test[rows], n_test[rows][:, None])
        pv = _pvalues(stat, dof)
        m = len(members)
        coh = pv[:m].mean()
        cont = -pv[m:].max() if len(front) else 0.0
        comp = min(len(front) / m ** 2, w.compactness_clamp)
        scores.append(float(w.contrast * cont + w.coherence * coh + w.compactness * comp))
        if not len(front) or area >= cap:
            break
        # most similar frontier superpixel joins (ties: lowest id)
        ph = h_s / h_s.sum()
        qh = unit[front]
        den = ph + qh
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(den > 0, (ph - qh) ** 2 / den, 0.0).sum(axis=1)
        nxt = int(front[np.argmin(d)])
        in_front[nxt] = False
        in_region[nxt] = True
        members.append(nxt)
        for j in graph.neighbors[nxt]:
            if not in_region[j]:
                in_front[j] = True
        h_s += hists[nxt]
        area += areas[nxt]
        added.append(nxt)
    best = int(np.argmax(scores))
    return RegionProposal(int(seed), added, scores, best)


def grow_all(graph: AdjacencyGraph, hists: np.ndarray, max_area_fraction: float = 0.10,
             weights: SignificanceWeights = SignificanceWeights(),
             pixels_per_sample: float = 1.0, seeds=None) -> list:
    """One proposal per seed (default: every superpixel with pixels)."""
    hists = np.asarray(hists)
    areas = hists.sum(axis=1)
    if seeds is None:
        seeds = np.flatnonzero(areas > 0)
    return [grow_region(int(s), graph, hists, max_area_fraction, weights,
                        pixels_per_sample, areas) for s in seeds]


def jaccard_distance(a, b) -> float:
    a, b = set(a), set(b)
    if not a or not b:
        raise ParameterError("jaccard distance needs nonempty sets")
    return 1.0 - len(a & b) / len(a | b)


def jaccard_matrix(sets, universe: int | None = None) -> np.ndarray:
    """Pairwise Jaccard distances between integer sets."""
    sets = [sorted(s) for s in sets]
    if any(not s for s in sets):
        raise ParameterError("jaccard distance needs nonempty sets")
    if universe is None:
        universe = max(max(s) for s in sets) + 1 if sets else 0
    member = np.zeros((len(sets), universe), dtype=np.float32)
    for r, s in enumerate(sets):
        member[r, s] = 1.0
    inter = member @ member.T
    sizes = member.sum(1)
    union = sizes[:, None] + sizes[None, :] - inter
    d = 1.0 - inter / union
    np.fill_diagonal(d, 0.0)
    return np.clip(d.astype(np.float64), 0.0, 1.0)


def average_linkage_clusters(dist: np.ndarray, cut_distance: float) -> np.ndarray:
    """Flat clusters from average-linkage agglomeration, merging while the
    linkage distance is <= ``cut_distance``.  Returns labels numbered by
    first appearance."""
    from scipy.cluster.hierarchy import fcluster, linkage
    from scipy.spatial.distance import squareform

    n = len(dist)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    z = linkage(squareform(dist, checks=False), method="average")
    raw = fcluster(z, t=cut_distance, criterion="distance")
    _, first, inv = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inv]


@dataclass
class ProposalCluster:
    members: list             # proposals
    representative: RegionProposal
    rank: int = 0


def cluster_proposals(proposals, cut_distance: float = 0.4,
                      min_cluster_size: int = 5) -> list:
    """Group proposals by Jaccard distance of their member sets.

    Clusters with fewer than ``min_cluster_size`` proposals are dropped.  The
    representative of each cluster is its highest-scoring proposal (ties:
    lowest seed); clusters are ranked by representative score.
    """
    proposals = list(proposals)
    if not proposals:
        return []
    dist = jaccard_matrix([p.members for p in proposals])
    labels = average_linkage_clusters(dist, cut_distance)
    clusters = []
    for lab in range(labels.max() + 1):
        group = [p for p, l in zip(proposals, labels) if l == lab]
        if len(group) < min_cluster_size:
            continue
        rep = min(group, key=lambda p: (-p.best_score, p.seed))
        clusters.append(ProposalCluster(group, rep))
    clusters.sort(key=lambda c: (-c.representative.best_score, c.representative.seed))
    for r, c in enumerate(clusters):
        c.rank = r
    return clusters


def dump_proposals(proposals, path) -> None:
    """Diagnostic JSON-lines dump, one proposal per line."""
    with open(path, "w") as fh:
        for p in proposals:
            fh.write(json.dumps(p.to_json(), sort_keys=True) + "\n")
