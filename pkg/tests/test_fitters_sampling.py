import numpy as np
import pytest

from rhomap.fitters import AugmentConfig, FitterSubject, PatchSampler


def make_subject(dims=(40, 40, 3), roi_box=(16, 24), subject_id="T000", seed=0):
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(100, 1000, size=(2, *dims))
    target = rng.uniform(30, 70, size=dims)
    valid = np.ones(dims, dtype=bool)
    roi = np.zeros(dims, dtype=bool)
    lo, hi = roi_box
    roi[lo:hi, lo:hi, :] = True
    return FitterSubject(subject_id, inputs, target, valid, roi)


def test_same_seed_same_stream():
    a = PatchSampler([make_subject()], patch=(16, 16), seed=42)
    b = PatchSampler([make_subject()], patch=(16, 16), seed=42)
    for _ in range(10):
        sa, sb = a.sample(), b.sample()
        assert np.array_equal(sa.inputs, sb.inputs)
        assert np.array_equal(sa.target, sb.target)
        assert np.array_equal(sa.loss_mask, sb.loss_mask)
        assert sa.center == sb.center and sa.z == sb.z


def test_roi_bias_one_centers_in_dilated_roi():
    subject = make_subject()
    sampler = PatchSampler(
        [subject], patch=(16, 16), roi_bias=1.0, jitter_px=8, augment=None, seed=7
    )
    for _ in range(200):
        s = sampler.sample()
        cx, cy = s.center
        xs, ys = np.nonzero(subject.roi[:, :, s.z])
        cheb = np.max(np.abs([xs - cx, ys - cy]), axis=0).min()
        assert cheb <= 8


def test_patch_shape_constant_under_augmentation():
    sampler = PatchSampler([make_subject()], patch=(16, 16), augment=AugmentConfig(), seed=3)
    for _ in range(25):
        s = sampler.sample()
        assert s.inputs.shape == (2, 16, 16)
        assert s.target.shape == (16, 16)
        assert s.loss_mask.shape == (16, 16)


def test_noise_augmentation_touches_inputs_only():
    subject = make_subject()
    noise_only = AugmentConfig(flip_p=0.0, rotate_deg=0.0, translate_px=0, noise_frac_max=0.05)
    sampler = PatchSampler([subject], patch=(16, 16), augment=noise_only, seed=11)
    for _ in range(10):
        s = sampler.sample()
        # reconstruct the un-augmented crop at the recorded position
        clean_target = sampler._crop(subject.target[:, :, s.z], s.center, "zero")
        clean_inputs = np.stack(
            [sampler._crop(subject.inputs[c, :, :, s.z], s.center, "edge") for c in range(2)]
        )
        assert np.array_equal(s.target, clean_target)
        assert not np.array_equal(s.inputs, clean_inputs)


def test_border_crops_are_padded_not_shifted():
    subject = make_subject()
    sampler = PatchSampler([subject], patch=(16, 16), augment=None, seed=0)
    plane = subject.inputs[0, :, :, 0]
    patch = sampler._crop(plane, (0, 0), "edge")
    assert patch.shape == (16, 16)
    # center honored: the in-bounds quadrant is the slice corner, the rest
    # replicates the edge (corner block = corner voxel)
    assert np.array_equal(patch[8:, 8:], plane[:8, :8])
    assert np.all(patch[:8, :8] == plane[0, 0])
    zero_patch = sampler._crop(plane, (0, 0), "zero")
    assert np.all(zero_patch[:8, :8] == 0.0)


def test_sampler_validation():
    with pytest.raises(ValueError, match="empty dataset"):
        PatchSampler([], patch=(16, 16))
    empty_roi = make_subject()
    empty_roi = FitterSubject(
        "E", empty_roi.inputs, empty_roi.target, empty_roi.target_valid, np.zeros_like(empty_roi.roi)
    )
    with pytest.raises(ValueError, match="empty mask"):
        PatchSampler([empty_roi], patch=(16, 16), loss_mask_mode="roi_masked")
    tiny = FitterSubject(
        "S",
        np.zeros((2, 4, 4, 1)),
        np.zeros((4, 4, 1)),
        np.ones((4, 4, 1), dtype=bool),
        np.ones((4, 4, 1), dtype=bool),
    )
    with pytest.raises(ValueError, match="too small"):
        PatchSampler([tiny], patch=(16, 16))


def test_roi_masked_loss_mask_subset_of_roi():
    sampler = PatchSampler(
        [make_subject()], patch=(16, 16), loss_mask_mode="roi_masked", seed=5
    )
    for _ in range(20):
        s = sampler.sample()
        assert np.all(s.loss_mask[~s.roi] == 0)
