"""Texton histograms, chi-squared distance and chi-squared test p-values.

Histograms are plain integer (or, for rescaled counts, float) arrays of
length K.  A stack of superpixel histograms is an ``(n, K)`` array whose row
``i`` is superpixel ``i``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaincc

from .errors import ParameterError


def superpixel_histograms(tmap: np.ndarray, labels: np.ndarray, k: int,
                          n_superpixels: int | None = None) -> np.ndarray:
    """Count textons per superpixel.

    ``tmap`` and ``labels`` are per-pixel arrays of equal shape; negative
    entries in either are ignored.  Returns an ``(n_superpixels, k)`` int64
    array.
    """
    tmap = np.asarray(tmap)
    labels = np.asarray(labels)
    if tmap.shape != labels.shape:
        raise ParameterError("texton map and superpixel labels differ in shape")
    if n_superpixels is None:
        n_superpixels = int(labels.max()) + 1 if labels.size else 0
    sel = (tmap >= 0) & (labels >= 0)
    flat = labels[sel].astype(np.int64) * k + tmap[sel]
    counts = np.bincount(flat, minlength=n_superpixels * k)
    return counts.reshape(n_superpixels, k)


def region_histogram(members, hists: np.ndarray) -> np.ndarray:
    """Element-wise sum of the member superpixels' histograms."""
    members = np.fromiter(members, dtype=np.int64) if not isinstance(members, np.ndarray) \
        else members.astype(np.int64)
    if members.size == 0:
        raise ParameterError("region must have at least one member")
    return np.asarray(hists)[members].sum(axis=0)


def _normalize(h):
    h = np.asarray(h, dtype=np.float64)
    tot = h.sum(axis=-1, keepdims=True)
    if np.any(tot <= 0):
        raise ParameterError("histogram has zero total")
    return h / tot


def chi2_distance(p, q) -> float:
    """Half chi-squared distance between normalized histograms, in [0, 1]."""
    return float(chi2_distances(p, np.asarray(q)[None, :])[0])


def chi2_distances(p, qs) -> np.ndarray:
    """``chi2_distance(p, q)`` for every row ``q`` of ``qs``."""
    ph = _normalize(p)
    qh = _normalize(qs)
    num = (ph - qh) ** 2
    den = ph + qh
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(den > 0, num / den, 0.0)
    return 0.5 * terms.sum(axis=-1)


def pairwise_chi2(a, b) -> np.ndarray:
    """Matrix of ``chi2_distance(a[i], b[j])``."""
    ah = _normalize(a)[:, None, :]
    bh = _normalize(b)[None, :, :]
    den = ah + bh
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(den > 0, (ah - bh) ** 2 / den, 0.0)
    return 0.5 * terms.sum(axis=-1)


def chi2_statistics(p, qs):
    """Pearson statistic and degrees of freedom of the 2 x K tables [p; q]
    for every row ``q`` of ``qs``.  Zero-sum columns are dropped."""
    p = np.asarray(p, dtype=np.float64)
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    n_p = p.sum()
    n_q = qs.sum(axis=1, keepdims=True)
    if n_p <= 0 or np.any(n_q <= 0):
        raise ParameterError("histogram has zero total")
    return _pearson(p, n_p, qs, n_q)


def _pearson(p, n_p, qs, n_q):
    # for a 2 x K table: sum_k (n_q p_k - n_p q_k)^2 / (p_k + q_k) / (n_p n_q)
    col = p[None, :] + qs
    live = col > 0
    diff = n_q * p[None, :] - n_p * qs
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(live, diff * diff / col, 0.0)
    stat = terms.sum(axis=1) / (n_p * n_q[:, 0])
    dof = live.sum(axis=1) - 1
    return stat, dof


def chi2_pvalues(p, qs) -> np.ndarray:
    """Chi-squared independence-test p-value of [p; q] for every row of ``qs``.

    Tables with fewer than two nonzero columns carry no evidence of a
    difference and get p-value 1.
    """
    stat, dof = chi2_statistics(p, qs)
    return _pvalues(stat, dof)


def _pvalues(stat, dof):
    out = np.ones(len(stat))
    ok = dof >= 1
    # survival function of chi2(dof) = regularized upper incomplete gamma
    out[ok] = gammaincc(dof[ok] / 2.0, np.maximum(stat[ok], 0.0) / 2.0)
    return out


def chi2_pvalue(p, q) -> float:
    return float(chi2_pvalues(p, np.asarray(q)[None, :])[0])
