import numpy as np
import pytest

from hetcd.core import (
    ConfusionCounts,
    PatchSpec,
    TrainingSet,
    extract_patch_vectors,
    patch_anchors,
)


def _coverage(dims, spec):
    cover = np.zeros(dims, dtype=int)
    for r, c in patch_anchors(dims, spec):
        cover[r:r + spec.k, c:c + spec.k] += 1
    return cover


class TestPatchAnchors:
    def test_unit_stride_enumerates_all_positions(self):
        anchors = patch_anchors((6, 6), PatchSpec(5, 1))
        assert anchors.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]

    def test_exact_fit_has_one_anchor(self):
        assert patch_anchors((5, 5), PatchSpec(5, 1)).tolist() == [[0, 0]]

    def test_border_anchor_is_clamped(self):
        anchors = patch_anchors((10, 10), PatchSpec(5, 4))
        expected = [[r, c] for r in (0, 4, 5) for c in (0, 4, 5)]
        assert anchors.tolist() == expected

    @pytest.mark.parametrize("dims,k,delta", [((17, 23), 5, 3), ((9, 40), 4, 4), ((30, 30), 10, 1)])
    def test_every_pixel_covered(self, dims, k, delta):
        assert _coverage(dims, PatchSpec(k, delta)).min() >= 1

    def test_unit_stride_count(self):
        assert len(patch_anchors((20, 13), PatchSpec(4))) == 17 * 10

    def test_patch_larger_than_image(self):
        with pytest.raises(ValueError, match="patch larger than image"):
            patch_anchors((4, 10), PatchSpec(5))

    @pytest.mark.parametrize("k,delta", [(1, 1), (3, 0), (2.5, 1), (4, 5)])
    def test_invalid_spec(self, k, delta):
        with pytest.raises(ValueError):
            PatchSpec(k, delta)


class TestExtractPatchVectors:
    def test_row_major_order(self):
        img = np.arange(1, 10, dtype=float).reshape(3, 3, 1)
        vecs = extract_patch_vectors(img, (0, 0), 2)
        assert vecs.ravel().tolist() == [1, 2, 4, 5]

    def test_single_pixel_is_channel_vector(self, rng):
        img = rng.normal(size=(4, 4, 2))
        np.testing.assert_array_equal(extract_patch_vectors(img, (2, 1), 1)[0], img[2, 1])

    def test_overlapping_patches_share_vectors(self, rng):
        img = rng.normal(size=(6, 6, 3))
        a = extract_patch_vectors(img, (0, 0), 3)
        b = extract_patch_vectors(img, (1, 1), 3)
        # pixel (1, 1) is index 4 in the first patch and 0 in the second
        np.testing.assert_array_equal(a[4], b[0])

    def test_out_of_bounds(self, rng):
        with pytest.raises(IndexError):
            extract_patch_vectors(rng.normal(size=(4, 4)), (3, 0), 2)

    def test_deterministic(self, rng):
        img = rng.normal(size=(5, 5, 2))
        a = extract_patch_vectors(img, (1, 2), 3)
        b = extract_patch_vectors(img, (1, 2), 3)
        assert a.tobytes() == b.tobytes()


class TestTrainingSet:
    def test_from_images(self, rng):
        x = rng.normal(size=(4, 5, 2))
        y = rng.normal(size=(4, 5, 3))
        ts = TrainingSet.from_images(x, y, [0, 7, 19])
        assert ts.M == 3
        np.testing.assert_array_equal(ts.x[1], x[1, 2])
        np.testing.assert_array_equal(ts.y[2], y[3, 4])

    def test_duplicate_indices_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            TrainingSet([1, 1], np.zeros((2, 1)), np.zeros((2, 1)))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            TrainingSet([0], [[np.nan]], [[0.0]])

    def test_index_outside_image(self, rng):
        with pytest.raises(ValueError):
            TrainingSet.from_images(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)), [4])


def test_confusion_counts_sum_to_total(rng):
    pred = rng.random((7, 9)) > 0.5
    truth = rng.random((7, 9)) > 0.7
    c = ConfusionCounts.from_maps(pred, truth)
    assert c.total == 63
    assert c.tp == np.sum(pred & truth)
    assert c.fn == np.sum(~pred & truth)
