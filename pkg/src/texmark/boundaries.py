"""Consensus voting for robust boundary segments.

Every region proposal votes for the ordered segments (interior, exterior)
on its boundary, weighted by how much the exterior superpixel's texture
differs from the proposal's.  Segments with similar supporter sets are then
grouped into boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regions import average_linkage_clusters, jaccard_matrix
from .segmentation import AdjacencyGraph, edge_midpoints
from .stats import chi2_distances


@dataclass
class SegmentVote:
    segment: tuple          # (interior, exterior)
    supporters: frozenset   # seed ids
    vote: float


@dataclass
class BoundaryGroup:
    segments: list          # ordered along the polyline
    total_vote: float
    supporters: frozenset   # union of member supporter sets
    midpoints: np.ndarray   # (m, 2) in polyline order
    rank: int = 0


def proposal_boundary(members, graph: AdjacencyGraph) -> set:
    """Ordered segments (i, j) with i in the region and j outside it."""
    members = set(members)
    return {(i, j) for i in members for j in graph.neighbors[i] if j not in members}


def vote_boundaries(proposals, hists: np.ndarray, graph: AdjacencyGraph) -> dict:
    """Accumulate votes over proposals in seed order.

    ``proposals`` yields objects with ``seed`` and ``members``.  Returns a
    dict mapping each voted segment to its :class:`SegmentVote`.
    """
    hists = np.asarray(hists)
    acc: dict = {}
    for prop in sorted(proposals, key=lambda p: p.seed):
        members = prop.members
        h_s = hists[sorted(members)].sum(axis=0)
        segs = sorted(proposal_boundary(members, graph))
        if not segs:
            continue
        ext = sorted({j for _, j in segs})
        dist = dict(zip(ext, chi2_distances(h_s, hists[ext])))
        for seg in segs:
            entry = acc.setdefault(seg, [0.0, []])
            entry[0] += float(dist[seg[1]])
            entry[1].append(prop.seed)
    return {seg: SegmentVote(seg, frozenset(sup), v) for seg, (v, sup) in acc.items()}


def default_min_vote(votes: dict, percentile: float = 75.0) -> float:
    """Percentile of the nonzero votes (0 when nothing was voted)."""
    vals = np.array([v.vote for v in votes.values() if v.vote > 0])
    return float(np.percentile(vals, percentile)) if len(vals) else 0.0


def threshold_segments(votes: dict, min_vote: float) -> dict:
    if min_vote < 0:
        raise ValueError("min_vote must be >= 0")
    return {s: v for s, v in votes.items() if v.vote >= min_vote}


def chain_order(points: np.ndarray) -> list:
    """Greedy nearest-neighbor ordering starting from the lexicographically
    smallest point (ties: lowest index)."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        return []
    start = min(range(n), key=lambda k: (pts[k, 0], pts[k, 1], k))
    order = [start]
    left = np.ones(n, dtype=bool)
    left[start] = False
    while left.any():
        cand = np.flatnonzero(left)
        d = np.hypot(*(pts[cand] - pts[order[-1]]).T)
        nxt = int(cand[np.argmin(d)])
        order.append(nxt)
        left[nxt] = False
    return order


def group_segments(votes: dict, graph: AdjacencyGraph, cut_distance: float = 0.4,
                   midpoints: dict | None = None) -> list:
    """Average-linkage grouping of segments by supporter-set Jaccard distance.

    Groups are ranked by total vote (ties: lowest interior id).
    """
    if not votes:
        return []
    if midpoints is None:
        midpoints = edge_midpoints(graph)
    segs = sorted(votes)
    dist = jaccard_matrix([votes[s].supporters for s in segs])
    labels = average_linkage_clusters(dist, cut_distance)
    groups = []
    for lab in range(labels.max() + 1):
        members = [s for s, l in zip(segs, labels) if l == lab]
        pts = np.array([midpoints[(min(s), max(s))] for s in members])
        order = chain_order(pts)
        members = [members[k] for k in order]
        total = float(sum(votes[s].vote for s in members))
        sup = frozenset().union(*(votes[s].supporters for s in members))
        groups.append(BoundaryGroup(members, total, sup, pts[order]))
    groups.sort(key=lambda g: (-g.total_vote, min(i for i, _ in g.segments)))
    for r, g in enumerate(groups):
        g.rank = r
    return groups


def vote_map(votes: dict, graph: AdjacencyGraph, shape) -> np.ndarray:
    """Per-border-pixel vote intensity in [0, 1] (max over both orientations
    of each edge)."""
    img = np.zeros(shape)
    best: dict = {}
    for (i, j), v in votes.items():
        key = (min(i, j), max(i, j))
        best[key] = max(best.get(key, 0.0), v.vote)
    top = max(best.values(), default=0.0)
    if top <= 0:
        return img
    for key, v in best.items():
        pix = graph.border[key].astype(np.int64)
        img[pix[:, 1], pix[:, 0]] = np.maximum(img[pix[:, 1], pix[:, 0]], v / top)
    return img
