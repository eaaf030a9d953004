"""Landmark unification, the four-term landmark distance and mutual-nearest
matching between sections.

A landmark is a list of ordered boundary segments (interior, exterior).
Closed landmarks come from region proposals; open ones from boundary
groups.  Two landmarks are compared on interior texture, boundary shape
(shape contexts matched with the Hungarian algorithm), exterior texture
along the matched segments, and centroid offset beyond a tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundaries import BoundaryGroup, chain_order, proposal_boundary
from .errors import ParameterError
from .segmentation import AdjacencyGraph, edge_midpoints
from .stats import chi2_distance, chi2_distances, pairwise_chi2


@dataclass
class Landmark:
    id: int
    kind: str                    # "closed" | "open"
    segments: list               # ordered (interior, exterior) pairs
    midpoints: np.ndarray        # (m, 2) as (x, y), polyline order
    exterior_hists: np.ndarray   # (m, K): histogram of each segment's exterior
    interior_hist: np.ndarray    # (K,)
    score: float = 0.0
    members: frozenset = frozenset()
    rank: int = 0
    _sc: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def centroid(self) -> np.ndarray:
        return self.midpoints.mean(axis=0)

    def shape_descriptors(self, n_r: int = 5, n_theta: int = 12,
                          rotation_invariant: bool = False) -> np.ndarray:
        key = (n_r, n_theta, rotation_invariant)
        if self._sc is None or self._sc[0] != key:
            desc = shape_context(self.midpoints, n_r, n_theta,
                                 rotation_invariant=rotation_invariant)
            self._sc = (key, desc)
        return self._sc[1]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "rank": self.rank,
            "score": float(self.score),
            "segments": [[int(i), int(j)] for i, j in self.segments],
            "midpoints": [[round(float(x), 4), round(float(y), 4)] for x, y in self.midpoints],
            "exterior_hists": np.asarray(self.exterior_hists).astype(np.int64).tolist(),
            "interior_hist": np.asarray(self.interior_hist).astype(np.int64).tolist(),
            "members": sorted(int(m) for m in self.members),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Landmark":
        return cls(
            id=int(doc["id"]),
            kind=doc["kind"],
            segments=[tuple(s) for s in doc["segments"]],
            midpoints=np.asarray(doc["midpoints"], dtype=np.float64).reshape(-1, 2),
            exterior_hists=np.asarray(doc["exterior_hists"], dtype=np.int64),
            interior_hist=np.asarray(doc["interior_hist"], dtype=np.int64),
            score=float(doc["score"]),
            members=frozenset(doc.get("members", [])),
            rank=int(doc.get("rank", 0)),
        )


@dataclass(frozen=True)
class MatchWeights:
    interior: float = 1.0
    shape: float = 1.0
    exterior: float = 0.5
    location: float = 0.01         # per pixel
    tolerance_px: float = 500.0
    normalize_exterior: bool = False
    rotation_invariant_shape: bool = False

    def __post_init__(self):
        vals = (self.interior, self.shape, self.exterior, self.location, self.tolerance_px)
        if not all(np.isfinite(v) for v in vals):
            raise ParameterError("match weights must be finite")
        if self.tolerance_px < 0:
            raise ParameterError("location tolerance must be >= 0")


@dataclass
class LandmarkMatch:
    a: int
    b: int
    d_interior: float
    d_shape: float
    d_exterior: float
    d_location: float
    total: float
    correspondence: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "D": self.total, "D_int": self.d_interior,
                "D_shape": self.d_shape, "D_ext": self.d_exterior,
                "D_loc": self.d_location,
                "correspondence": [[int(p), int(q)] for p, q in self.correspondence]}


# --- construction -------------------------------------------------------

def _subsample(n: int, max_points: int) -> np.ndarray:
    if n <= max_points:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, max_points)).astype(np.int64))


def make_landmark(lid: int, kind: str, segments, hists: np.ndarray, midpoints: dict,
                  interior_members, score: float, max_points: int = 60,
                  members=None) -> Landmark:
    """Order segments along their midpoint polyline, subsample to at most
    ``max_points`` and attach texture histograms."""
    segments = list(segments)
    pts = np.array([midpoints[(min(s), max(s))] for s in segments], dtype=np.float64)
    order = chain_order(pts)
    keep = [order[k] for k in _subsample(len(order), max_points)]
    segs = [segments[k] for k in keep]
    hists = np.asarray(hists)
    interior = hists[sorted(interior_members)].sum(axis=0)
    ext = hists[[j for _, j in segs]]
    return Landmark(lid, kind, segs, pts[keep], ext, interior, float(score),
                    frozenset(int(m) for m in (members if members is not None
                                               else interior_members)))


def _unordered(segments) -> set:
    return {(min(s), max(s)) for s in segments}


def unify_landmarks(region_proposals, boundary_groups, graph: AdjacencyGraph,
                    hists: np.ndarray, coincide_threshold: float = 0.5,
                    max_points: int = 60, min_open_points: int = 2):
    """Turn ranked region representatives and boundary groups into one
    landmark list (closed first).

    An open boundary is dropped when the Jaccard similarity between its
    segment set and a closed landmark's (ignoring segment orientation) is
    strictly greater than ``coincide_threshold``.  Open groups with fewer
    than ``min_open_points`` distinct midpoints are skipped.
    """
    mids = edge_midpoints(graph)
    closed, closed_sets = [], []
    for prop in region_proposals:
        segs = sorted(proposal_boundary(prop.members, graph))
        if not segs:
            continue
        lm = make_landmark(len(closed), "closed", segs, hists, mids, prop.members,
                           prop.best_score, max_points)
        lm.rank = len(closed)
        closed.append(lm)
        closed_sets.append(_unordered(segs))
    opened = []
    for grp in boundary_groups:
        useg = _unordered(grp.segments)
        if len(useg) < min_open_points:
            continue
        if any(len(useg & cs) / len(useg | cs) > coincide_threshold for cs in closed_sets):
            continue
        lm = make_landmark(len(closed) + len(opened), "open", grp.segments, hists, mids,
                           grp.supporters, grp.total_vote, max_points)
        lm.rank = len(opened)
        opened.append(lm)
    return closed, opened


# --- shape context ------------------------------------------------------

def shape_context(points, n_r: int = 5, n_theta: int = 12, r_inner: float = 0.125,
                  r_outer: float = 2.0, rotation_invariant: bool = False) -> np.ndarray:
    """Log-polar histograms of the other points around each point.

    Radii are divided by the mean pairwise distance and binned on
    ``n_r`` log-spaced shells between ``r_inner`` and ``r_outer``; points
    inside the inner shell or beyond the outer one are counted in the
    first or last shell.  Angles are image-frame ``atan2(dy, dx)``, or
    relative to the mean tangent of the polyline when ``rotation_invariant``.
    Returns an ``(n, n_r * n_theta)`` integer array, bins ordered
    ``r * n_theta + theta``.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < 2:
        raise ParameterError("shape context needs at least 2 points")
    diff = pts[None, :, :] - pts[:, None, :]          # from i to j
    dist = np.hypot(diff[..., 0], diff[..., 1])
    off = ~np.eye(n, dtype=bool)
    mean = dist[off].mean()
    r = dist / mean if mean > 0 else np.zeros_like(dist)
    theta = np.arctan2(diff[..., 1], diff[..., 0])
    if rotation_invariant and n > 1:
        tang = np.diff(pts, axis=0)
        theta = theta - np.arctan2(tang[:, 1].sum(), tang[:, 0].sum())
    theta = np.mod(theta, 2 * np.pi)
    edges = np.logspace(np.log10(r_inner), np.log10(r_outer), n_r + 1)
    rbin = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, n_r - 1)
    # the small offset sends angles sitting exactly on a bin edge upward
    tbin = np.floor(theta / (2 * np.pi / n_theta) + 1e-9).astype(np.int64) % n_theta
    flat = rbin * n_theta + tbin
    out = np.zeros((n, n_r * n_theta), dtype=np.int64)
    rows = np.repeat(np.arange(n), n).reshape(n, n)
    np.add.at(out, (rows[off], flat[off]), 1)
    return out


# --- Hungarian ----------------------------------------------------------

def _hungarian_square(c: np.ndarray):
    """Shortest-augmenting-path Hungarian on a square matrix.

    Returns ``(col_of_row, u, v)`` with duals satisfying
    ``u[i] + v[j] <= c[i, j]``, equality on assigned pairs.
    """
    n = len(c)
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)      # row (1-based) assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row, u[1:], v[1:]


def _lexicographic_refine(adj, col_of_row):
    """Turn a perfect matching of the tight-edge graph into the
    lexicographically smallest one (by column sequence over rows)."""
    n = len(col_of_row)
    col = list(int(c) for c in col_of_row)
    row = [0] * n
    for r, c in enumerate(col):
        row[c] = r
    fixed_c = set()
    for r in range(n):
        for c in adj[r]:
            if c in fixed_c:
                continue
            if c == col[r]:
                break
            # reroute: r takes c; row[c] must reach r's old column
            target, start = col[r], row[c]
            prev = {}
            frontier = [start]
            seen = {c} | fixed_c
            found = False
            while frontier and not found:
                nxt = []
                for x in frontier:
                    for y in adj[x]:
                        if y in seen:
                            continue
                        seen.add(y)
                        prev[y] = x
                        if y == target:
                            found = True
                            break
                        nxt.append(row[y])
                    if found:
                        break
                frontier = nxt
            if not found:
                continue
            y = target
            while True:
                x = prev[y]
                old = col[x]
                col[x], row[y] = y, x
                if x == start:
                    break
                y = old
            col[r], row[c] = c, r
            break
        fixed_c.add(col[r])
    return np.array(col, dtype=np.int64)


def hungarian(cost):
    """Minimum-cost assignment of an ``n x m`` cost matrix.

    Returns ``(pairs, total)`` with ``min(n, m)`` (row, col) pairs sorted by
    row.  Among optimal assignments the one whose column sequence is
    lexicographically smallest is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ParameterError("cost matrix must be a nonempty 2-D array")
    if not np.isfinite(cost).all():
        raise ParameterError("cost matrix must be finite")
    n, m = cost.shape
    k = max(n, m)
    sq = np.zeros((k, k))
    sq[:n, :m] = cost
    col, u, v = _hungarian_square(sq)
    scale = max(1.0, float(np.abs(sq).max()))
    reduced = sq - u[:, None] - v[None, :]
    tight = reduced <= 1e-12 * scale * k
    adj = [list(np.flatnonzero(tight[r])) for r in range(k)]
    if any(len(a) > 1 for a in adj):
        col = _lexicographic_refine(adj, col)
    pairs = [(r, int(col[r])) for r in range(n) if col[r] < m]
    total = float(sum(cost[r, c] for r, c in pairs))
    return pairs, total


# --- distance terms -----------------------------------------------------

def d_interior(a: Landmark, b: Landmark) -> float:
    return chi2_distance(a.interior_hist, b.interior_hist)


def d_shape(a: Landmark, b: Landmark, rotation_invariant: bool = False):
    """Mean chi-squared cost of the optimal shape-context matching, and the
    matching itself as (index in a, index in b) pairs."""
    if len(a.midpoints) < 2 or len(b.midpoints) < 2:
        raise ParameterError("shape distance needs at least 2 midpoints per landmark")
    ca = a.shape_descriptors(rotation_invariant=rotation_invariant)
    cb = b.shape_descriptors(rotation_invariant=rotation_invariant)
    cost = pairwise_chi2(ca, cb)
    pairs, total = hungarian(cost)
    return total / len(pairs), pairs


def d_exterior(a: Landmark, b: Landmark, correspondence, normalize: bool = False) -> float:
    if not correspondence:
        return 0.0
    ia = [p for p, _ in correspondence]
    ib = [q for _, q in correspondence]
    ha = np.asarray(a.exterior_hists, dtype=np.float64)[ia]
    hb = np.asarray(b.exterior_hists, dtype=np.float64)[ib]
    per = np.array([chi2_distances(x, y[None, :])[0] for x, y in zip(ha, hb)])
    total = float(per.sum())
    return total / len(per) if normalize else total


def d_location(a: Landmark, b: Landmark, tolerance: float) -> float:
    return max(0.0, float(np.hypot(*(a.centroid - b.centroid))) - tolerance)


def landmark_distance(a: Landmark, b: Landmark, w: MatchWeights = MatchWeights()) -> LandmarkMatch:
    shape, corr = d_shape(a, b, w.rotation_invariant_shape)
    dint = d_interior(a, b)
    dext = d_exterior(a, b, corr, w.normalize_exterior)
    dloc = d_location(a, b, w.tolerance_px)
    total = w.interior * dint + w.shape * shape + w.exterior * dext + w.location * dloc
    return LandmarkMatch(a.id, b.id, dint, shape, dext, dloc, total, corr)


def distance_matrix(A, B, w: MatchWeights = MatchWeights()):
    """All pairwise :class:`LandmarkMatch` objects, as a nested list, plus the
    matrix of totals."""
    rows = [[landmark_distance(a, b, w) for b in B] for a in A]
    totals = np.array([[m.total for m in r] for r in rows]).reshape(len(A), len(B))
    return rows, totals


def mutual_nearest(totals: np.ndarray) -> list:
    """(i, j) such that j is i's nearest column and i is j's nearest row;
    ties go to the lowest index."""
    totals = np.asarray(totals)
    if totals.size == 0:
        return []
    best_col = np.argmin(totals, axis=1)
    best_row = np.argmin(totals, axis=0)
    return [(i, int(j)) for i, j in enumerate(best_col) if best_row[j] == i]


def mutual_nearest_match(A, B, w: MatchWeights = MatchWeights()) -> list:
    """Landmark pairs that are simultaneously each other's closest."""
    if not A or not B:
        return []
    rows, totals = distance_matrix(A, B, w)
    return [rows[i][j] for i, j in mutual_nearest(totals)]
