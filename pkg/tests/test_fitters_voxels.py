import numpy as np
import pytest

import rhomap as rm
from rhomap.fitters import apply_roi_mask, extract_roi_vectors, reassemble_voxels


def small_roi():
    labels = np.zeros((3, 3, 2), dtype=np.uint8)
    labels[0, 0, 0] = 1
    labels[1, 1, 0] = 1
    labels[0, 0, 1] = 1
    return rm.RoiMask((3, 3, 2), labels)


def test_extraction_order_is_z_y_x_row_major():
    roi = small_roi()
    data = np.zeros((3, 3, 2))
    data[0, 0, 0] = 10.0
    data[1, 1, 0] = 20.0
    data[0, 0, 1] = 30.0
    vol = rm.Volume3D((3, 3, 2), (1, 1, 1), data)
    vecs = extract_roi_vectors([vol], roi)
    # z slowest, then y, then x: (0,0,0) then (1,1,0) then (0,0,1)
    assert vecs[:, 0].tolist() == [10.0, 20.0, 30.0]


def test_reassemble_sets_exactly_roi_voxels():
    roi = small_roi()
    out = reassemble_voxels([1.5, 2.5, 3.5], roi, (3, 3, 2))
    assert out.data[0, 0, 0] == 1.5
    assert out.data[1, 1, 0] == 2.5
    assert out.data[0, 0, 1] == 3.5
    assert out.data.sum() == 7.5


def test_extract_reassemble_roundtrip(noisy_bundle):
    vecs = extract_roi_vectors([noisy_bundle.truth_t1rho], noisy_bundle.roi)
    back = reassemble_voxels(vecs[:, 0], noisy_bundle.roi, noisy_bundle.truth_t1rho.dims)
    mask = noisy_bundle.roi.as_bool()
    assert np.array_equal(back.data[mask], noisy_bundle.truth_t1rho.data[mask])
    assert np.all(back.data[~mask] == 0.0)


def test_reassemble_length_mismatch():
    roi = small_roi()
    with pytest.raises(ValueError, match="does not match ROI voxel count"):
        reassemble_voxels([1.0, 2.0], roi, (3, 3, 2))


def test_extract_empty_mask():
    roi = rm.RoiMask((2, 2, 1), np.zeros((2, 2, 1)))
    with pytest.raises(ValueError, match="empty mask"):
        extract_roi_vectors([rm.new_volume((2, 2, 1))], roi)


def test_apply_roi_mask_identity_and_zero():
    vol = rm.new_volume((2, 2, 1), fill=3.0)
    ones = rm.RoiMask((2, 2, 1), np.ones((2, 2, 1)))
    zeros_mask = rm.RoiMask((2, 2, 1), np.zeros((2, 2, 1)))
    assert np.array_equal(apply_roi_mask(vol, ones).data, vol.data)
    assert np.all(apply_roi_mask(vol, zeros_mask).data == 0.0)


def test_apply_roi_mask_checkerboard():
    rng = np.random.default_rng(0)
    data = rng.uniform(1, 5, (4, 4, 2))
    vol = rm.Volume3D((4, 4, 2), (1, 1, 1), data)
    board = np.indices((4, 4, 2)).sum(axis=0) % 2
    roi = rm.RoiMask((4, 4, 2), board)
    out = apply_roi_mask(vol, roi)
    assert np.array_equal(out.data, data * board)


def test_apply_roi_mask_dims_mismatch():
    vol = rm.new_volume((2, 2, 2))
    roi = rm.RoiMask((2, 2, 1), np.ones((2, 2, 1)))
    with pytest.raises(ValueError, match="do not match"):
        apply_roi_mask(vol, roi)
