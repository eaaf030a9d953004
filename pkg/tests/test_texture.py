import json

import numpy as np
import pytest
from PIL import Image

from conftest import grating
from texmark.errors import InputError, ParameterError
from texmark.texture import (NO_TEXTON, FeatureField, GrayImage, TextonCodebook, apply_bank,
                             assign_textons, build_gabor_bank, directional_energy, kmeans,
                             learn_codebook, load_image, merge_centroids, rotation_align)


# --- bank -------------------------------------------------------------------

def test_default_bank_has_99_kernels():
    bank = build_gabor_bank(9, 11)
    assert bank.dimension == 99
    assert len(bank.flat_kernels()) == 99


def test_degenerate_bank_has_one_kernel():
    assert len(build_gabor_bank(1, 1).flat_kernels()) == 1


@pytest.mark.parametrize("args", [(0, 3), (3, 0), (4, 2, 0.0), (4, 2, 0.6), (4, 2, 0.2, 1.0),
                                  (4, 2, 0.2, 2.0, 0.0)])
def test_bank_rejects_bad_parameters(args):
    with pytest.raises(ParameterError):
        build_gabor_bank(*args)


def test_frequency_ladder_and_orientations():
    bank = build_gabor_bank(6, 4, 0.25, 2.0)
    np.testing.assert_allclose(bank.frequencies, [0.25, 0.125, 0.0625, 0.03125])
    np.testing.assert_allclose(bank.orientations, np.arange(6) * np.pi / 6)
    assert bank.orientation_step == pytest.approx(np.pi / 6)


def test_kernels_are_dc_free():
    bank = build_gabor_bank(9, 11)
    for k in bank.flat_kernels():
        assert abs(k.sum()) <= 1e-6 * np.abs(k).sum()


def test_constant_image_gives_zero_features():
    bank = build_gabor_bank(4, 3)
    img = GrayImage(np.full((80, 80), 0.7))
    field = apply_bank(img, bank)
    assert field.values.shape == (80, 80, 12)
    assert np.abs(field.values).max() < 1e-6


def _direct_response(img, kern, r, c):
    # convolution sum evaluated without FFTs
    kh = kern.shape[0] // 2
    patch = img[r - kh:r + kh + 1, c - kh:c + kh + 1][::-1, ::-1]
    return abs((patch * kern).sum())


def test_grating_response_matches_direct_sum_and_peaks_at_normal():
    bank = build_gabor_bank(8, 2, 0.2)
    # horizontal stripes: intensity varies along y, normal at pi/2 = index 4
    img = grating((120, 120), 0.2, np.pi / 2)
    field = apply_bank(GrayImage(img), bank)
    kerns = bank.flat_kernels()
    r = c = 60
    direct = np.array([_direct_response(img, k, r, c) for k in kerns])
    np.testing.assert_allclose(field.values[r, c], direct, rtol=1e-4, atol=1e-6)
    energy = directional_energy(field.values[field.mask], 8)
    assert np.all(energy.argmax(axis=1) == 4)


def test_rotation_by_one_step_shifts_orientation_axis():
    n_o, n_s = 9, 3
    bank = build_gabor_bank(n_o, n_s, 0.2)
    step = np.pi / n_o
    theta = 0.3
    f1 = apply_bank(GrayImage(grating((128, 128), 0.14, theta)), bank)
    f2 = apply_bank(GrayImage(grating((128, 128), 0.14, theta + step)), bank)
    v1 = f1.values[64, 64].reshape(n_o, n_s)
    v2 = f2.values[64, 64].reshape(n_o, n_s)
    shifted = np.roll(v1, 1, axis=0)
    assert np.linalg.norm(v2 - shifted) <= 0.02 * np.linalg.norm(v1)


def test_border_pixels_are_masked():
    bank = build_gabor_bank(2, 2, 0.2)
    img = GrayImage(np.random.default_rng(0).random((60, 60)))
    field = apply_bank(img, bank, border=5)
    assert not field.mask[:5].any() and not field.mask[:, -5:].any()
    assert field.mask[5:-5, 5:-5].all()
    assert np.all(field.values[~field.mask] == 0)
    assert np.all(field.values >= 0)


# --- rotation_align ---------------------------------------------------------

def test_align_single_mode():
    v = np.zeros((9, 2))
    v[3] = [1.0, 2.0]
    aligned, mode = rotation_align(v.ravel(), 9)
    assert mode == 3
    out = aligned.reshape(9, 2)
    np.testing.assert_array_equal(out[0], [1.0, 2.0])
    assert out[1:].sum() == 0


def test_align_is_shift_invariant(rng):
    v = rng.random((9, 4))
    v[5] += 3.0
    a1, _ = rotation_align(v.ravel(), 9)
    for s in range(9):
        a2, _ = rotation_align(np.roll(v, s, axis=0).ravel(), 9)
        np.testing.assert_array_equal(a1, a2)


def test_align_uniform_and_zero_vectors_unchanged():
    v = np.ones(18)
    aligned, mode = rotation_align(v, 9)
    assert mode == 0 and np.array_equal(aligned, v)
    z = np.zeros(18)
    aligned, mode = rotation_align(z, 9)
    assert mode == 0 and np.array_equal(aligned, z)


def test_align_stack_matches_rowwise(rng):
    stack = rng.random((50, 12))
    aligned, modes = rotation_align(stack, 4)
    for row, a, m in zip(stack, aligned, modes):
        a1, m1 = rotation_align(row, 4)
        assert m1 == m
        np.testing.assert_array_equal(a1, a)
        assert directional_energy(a1, 4).argmax() == 0


def test_align_rejects_bad_length():
    with pytest.raises(ParameterError):
        rotation_align(np.ones(10), 4)


# --- codebook ---------------------------------------------------------------

def _clouds(rng, n=200):
    centers = np.array([[0.0, 0.0, 0.0, 0.0], [10.0, 0.0, 0.0, 0.0], [0.0, 0.0, 10.0, 10.0]])
    pts = np.concatenate([c + rng.normal(0, 0.3, (n, 4)) for c in centers])
    return centers, pts


def test_three_clouds_give_cloud_means(rng):
    _, pts = _clouds(rng)
    cb = learn_codebook(pts, 2, initial_k=3, merge_threshold=1.0, rng_seed=0)
    assert cb.k == 3
    means = np.array([pts[i * 200:(i + 1) * 200].mean(0) for i in range(3)])
    for m in means:
        assert np.min(np.linalg.norm(cb.centroids - m, axis=1)) < 1e-9


def test_zero_threshold_keeps_all_clusters(rng):
    _, pts = _clouds(rng)
    cb = learn_codebook(pts, 2, initial_k=12, merge_threshold=0.0, rng_seed=1)
    assert cb.k == 12


def test_codebook_invariants(rng):
    _, pts = _clouds(rng)
    cb = learn_codebook(pts, 2, initial_k=20, rng_seed=3)
    assert 1 <= cb.k <= 20
    d = np.linalg.norm(cb.centroids[:, None] - cb.centroids[None], axis=-1)
    assert d[np.triu_indices(cb.k, 1)].min() >= cb.merge_threshold
    hist = cb.inertia_history
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


def test_codebook_is_deterministic(rng):
    _, pts = _clouds(rng)
    a = learn_codebook(pts, 2, initial_k=10, rng_seed=7)
    b = learn_codebook(pts, 2, initial_k=10, rng_seed=7)
    assert a.digest() == b.digest()
    assert np.array_equal(a.centroids, b.centroids)


def test_too_few_samples():
    with pytest.raises(ParameterError):
        learn_codebook(np.zeros((5, 4)), 2, initial_k=10)


def test_merge_is_count_weighted():
    cents = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    merged, counts = merge_centroids(cents, np.array([1, 3, 5]), threshold=2.0)
    np.testing.assert_allclose(merged, [[0.75, 0.0], [10.0, 0.0]])
    np.testing.assert_array_equal(counts, [4, 5])


def test_merge_is_strict_at_threshold():
    cents = np.array([[0.0], [2.0]])
    merged, _ = merge_centroids(cents, np.array([1, 1]), threshold=2.0)
    assert len(merged) == 2


def test_kmeans_objective_non_increasing(rng):
    x = rng.random((500, 3))
    _, labels, hist = kmeans(x, 8, rng_seed=2)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))
    assert labels.min() >= 0 and labels.max() < 8


def test_codebook_json_roundtrip(tmp_path, rng):
    _, pts = _clouds(rng)
    cb = learn_codebook(pts, 2, initial_k=4, rng_seed=0)
    path = tmp_path / "cb.json"
    cb.save(path)
    doc = json.loads(path.read_text())
    assert doc["version"] == 1
    back = TextonCodebook.load(path)
    assert np.array_equal(back.centroids, cb.centroids)
    assert back.digest() == cb.digest()


def test_codebook_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        TextonCodebook.load(bad)
    bad.write_text(json.dumps({"version": 99}))
    with pytest.raises(InputError):
        TextonCodebook.load(bad)


# --- assignment ---------------------------------------------------------------

def test_exact_centroid_gets_its_index():
    cents = np.eye(6)[:, :6] * np.arange(1, 7)[:, None]
    cents = np.hstack([cents, np.zeros((6, 0))])
    cb = TextonCodebook(cents, 3, 2, 0.0, 0)
    values = np.zeros((2, 3, 6), dtype=np.float32)
    mask = np.ones((2, 3), dtype=bool)
    mask[0, 0] = False
    # centroid 5 has all its energy in orientation 2, scale 1: already aligned
    # only if orientation 2 is the mode; use centroid 0 (mode 0) instead
    values[1, 1] = cents[0]
    values[1, 2] = cents[1]
    tmap = assign_textons(FeatureField(values, mask, 3, 2), cb)
    assert tmap[0, 0] == NO_TEXTON
    assert tmap[1, 1] == 0 and tmap[1, 2] == 1


def test_aligned_centroid_five_is_recovered(rng):
    cents = rng.random((8, 12))
    cents, _ = rotation_align(cents, 4)
    cb = TextonCodebook(cents, 4, 3, 0.0, 0)
    # a pixel whose feature is a rotated copy of centroid 5 aligns back onto it
    grid = cents[5].reshape(4, 3)
    values = np.roll(grid, 2, axis=0).reshape(1, 1, 12).astype(np.float32)
    tmap = assign_textons(FeatureField(values, np.ones((1, 1), bool), 4, 3), cb)
    assert tmap[0, 0] == 5


def test_ties_go_to_lowest_index():
    cents = np.array([[1.0, 0.0], [1.0, 0.0]])
    cb = TextonCodebook(cents, 1, 2, 0.0, 0)
    values = np.array([[[1.0, 0.0]]], dtype=np.float32)
    assert assign_textons(FeatureField(values, np.ones((1, 1), bool), 1, 2), cb)[0, 0] == 0


def test_grating_rotated_one_step_keeps_labels():
    n_o, n_s = 9, 3
    bank = build_gabor_bank(n_o, n_s, 0.2)
    step = np.pi / n_o
    # vocabulary from three clearly different textures
    train = [apply_bank(GrayImage(grating((128, 128), f, t)), bank)
             for f, t in [(0.14, 0.2), (0.07, 1.0), (0.2, 2.0)]]
    samples, _ = rotation_align(np.concatenate([f.vectors()[::5] for f in train]).astype(float),
                                n_o)
    cb = learn_codebook(samples, n_o, initial_k=3, merge_threshold=0.0, rng_seed=0)
    f1 = apply_bank(GrayImage(grating((128, 128), 0.14, 0.2)), bank)
    f2 = apply_bank(GrayImage(grating((128, 128), 0.14, 0.2 + step)), bank)
    t1, t2 = assign_textons(f1, cb), assign_textons(f2, cb)
    inner = f1.mask & f2.mask
    assert (t1[inner] == t2[inner]).mean() >= 0.95


def test_dimension_mismatch():
    cb = TextonCodebook(np.zeros((2, 4)), 2, 2, 0.0, 0)
    field = FeatureField(np.zeros((1, 1, 6), np.float32), np.ones((1, 1), bool), 2, 3)
    with pytest.raises(ParameterError):
        assign_textons(field, cb)


# --- image I/O ----------------------------------------------------------------

def test_load_8_and_16_bit(tmp_path):
    a8 = np.array([[0, 255], [128, 64]], dtype=np.uint8)
    Image.fromarray(a8).save(tmp_path / "a.png")
    img = load_image(tmp_path / "a.png")
    np.testing.assert_allclose(img.intensities, a8 / 255.0)
    a16 = np.array([[0, 65535], [32768, 1000]], dtype=np.uint16)
    Image.fromarray(a16).save(tmp_path / "b.png")
    img = load_image(tmp_path / "b.png")
    np.testing.assert_allclose(img.intensities, a16 / 65535.0)
    assert img.foreground_mask.all()


def test_load_corrupt_image(tmp_path):
    p = tmp_path / "x.png"
    p.write_bytes(b"not an image")
    with pytest.raises(InputError):
        load_image(p)
    with pytest.raises(InputError):
        load_image(tmp_path / "missing.png")


def test_gray_image_validation():
    with pytest.raises(ParameterError):
        GrayImage(np.zeros((0, 3)))
    with pytest.raises(ParameterError):
        GrayImage(np.zeros((2, 2)), np.ones((3, 3), bool))
