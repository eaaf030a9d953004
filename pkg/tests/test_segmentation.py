import numpy as np
import pytest
from scipy import ndimage as ndi

from texmark.errors import InputError, ParameterError
from texmark.segmentation import (NO_SUPERPIXEL, SuperpixelMap, build_adjacency, edge_midpoints,
                                  segment_geometry, slic)
from texmark.texture import GrayImage


def _grid_map(n_side, cell):
    labels = np.zeros((n_side * cell, n_side * cell), dtype=np.int32)
    for r in range(n_side):
        for c in range(n_side):
            labels[r * cell:(r + 1) * cell, c * cell:(c + 1) * cell] = r * n_side + c
    return SuperpixelMap.from_labels(labels)


def _check_partition(spmap, mask):
    lab = spmap.labels
    assert np.all((lab >= 0) == mask)
    assert spmap.areas.sum() == mask.sum()
    assert np.all(spmap.areas > 0)
    for k in range(spmap.n_superpixels):
        _, n = ndi.label(lab == k)  # default structure is 4-connectivity
        assert n == 1


def test_single_superpixel():
    img = GrayImage(np.random.default_rng(0).random((40, 50)))
    sp = slic(img, 1)
    assert sp.n_superpixels == 1
    assert np.all(sp.labels == 0)


def test_uniform_image_count_and_area():
    img = GrayImage(np.full((512, 512), 0.5))
    sp = slic(img, 256)
    assert 0.8 * 256 <= sp.n_superpixels <= 1.2 * 256
    assert abs(sp.areas.mean() - 1024) <= 0.25 * 1024


def test_partition_and_connectivity_with_mask(rng):
    h, w = 120, 140
    yy, xx = np.mgrid[0:h, 0:w]
    mask = (xx - 70) ** 2 / 60 ** 2 + (yy - 60) ** 2 / 50 ** 2 <= 1
    img = GrayImage(np.where(xx > 70, 0.8, 0.2) + rng.normal(0, 0.05, (h, w)), mask)
    sp = slic(img, 40, smooth_sigma=1.5)
    _check_partition(sp, mask)
    assert np.all(sp.labels[~mask] == NO_SUPERPIXEL)


def test_superpixels_follow_an_intensity_step():
    img = np.full((100, 100), 0.2)
    img[:, 50:] = 0.9
    sp = slic(GrayImage(img), 20)
    for k in range(sp.n_superpixels):
        vals = img[sp.labels == k]
        assert vals.min() == vals.max()


def test_slic_is_deterministic(rng):
    img = GrayImage(rng.random((80, 80)))
    a, b = slic(img, 30, rng_seed=4), slic(img, 30, rng_seed=4)
    assert np.array_equal(a.labels, b.labels)


@pytest.mark.parametrize("count,comp", [(0, 10.0), (5, 0.0), (5, -1.0)])
def test_slic_rejects_bad_parameters(count, comp):
    with pytest.raises(ParameterError):
        slic(GrayImage(np.zeros((10, 10))), count, comp)


def test_slic_rejects_count_above_foreground():
    mask = np.zeros((10, 10), dtype=bool)
    mask[:2, :2] = True
    with pytest.raises(ParameterError):
        slic(GrayImage(np.zeros((10, 10)), mask), 5)


def test_vertical_split_adjacency_and_midpoint():
    labels = np.zeros((10, 10), dtype=np.int32)
    labels[:, 5:] = 1
    g = build_adjacency(SuperpixelMap.from_labels(labels))
    assert g.neighbors == [(1,), (0,)]
    seg = segment_geometry(g, 0, 1)
    # border pixels on both sides of the crack: columns 4 and 5, rows 0..9
    assert len(seg.pixels) == 20
    assert seg.midpoint == pytest.approx((4.5, 4.5))
    assert segment_geometry(g, 1, 0).midpoint == seg.midpoint


def test_grid_adjacency_and_symmetry():
    g = build_adjacency(_grid_map(3, 4))
    assert g.neighbors[4] == (1, 3, 5, 7)
    for i, nb in enumerate(g.neighbors):
        assert i not in nb
        for j in nb:
            assert i in g.neighbors[j]
    assert g.has_edge(0, 1) and not g.has_edge(0, 4)


def test_l_shaped_border_midpoint():
    # 6x6 toy map: superpixel 1 is an L occupying the bottom-right corner
    labels = np.zeros((6, 6), dtype=np.int32)
    labels[3:, 3:] = 1
    labels[4:, 1:3] = 1
    g = build_adjacency(SuperpixelMap.from_labels(labels))
    seg = segment_geometry(g, 1, 0)
    # hand enumeration of pixels (x, y) with a 4-neighbor of the other label
    side0 = {(3, 2), (4, 2), (5, 2), (2, 3), (1, 3), (0, 4), (0, 5)}
    side1 = {(3, 3), (4, 3), (5, 3), (1, 4), (2, 4), (1, 5)}
    expected = np.array(sorted(side0 | side1), dtype=float)
    got = np.array(sorted(map(tuple, seg.pixels)))
    np.testing.assert_array_equal(got, expected)
    assert seg.midpoint == pytest.approx(tuple(expected.mean(axis=0)))


def test_non_edge_lookup_fails():
    g = build_adjacency(_grid_map(3, 4))
    with pytest.raises(KeyError):
        segment_geometry(g, 0, 8)
    with pytest.raises(KeyError):
        segment_geometry(g, 2, 2)


def test_edge_midpoints_cover_all_edges():
    g = build_adjacency(_grid_map(3, 4))
    mids = edge_midpoints(g)
    assert set(mids) == set(g.edges())
    assert len(mids) == 12


def test_map_roundtrip(tmp_path, rng):
    img = GrayImage(rng.random((60, 60)))
    sp = slic(img, 12)
    sp.save(tmp_path / "sp.png")
    back = SuperpixelMap.load(tmp_path / "sp.png")
    assert np.array_equal(back.labels, sp.labels)
    np.testing.assert_allclose(back.centroids, sp.centroids)


def test_map_load_errors(tmp_path):
    with pytest.raises(InputError):
        SuperpixelMap.load(tmp_path / "missing.png")
