"""ROI-biased patch sampling with geometric + noise augmentation.

Patches are cropped from per-slice planes of a subject's two input volumes
and its target map. Crops near borders are realized by edge-replicating the
inputs (masks are zero-padded), so the patch shape never changes and the
drawn center is honored exactly. With ``roi_bias=1`` every drawn center lies
within the ROI dilated by ``jitter_px`` (Chebyshev radius).

Geometric augmentation (flips, rotation, integer translation) is applied to
inputs, target, and loss mask alike; additive Gaussian noise is applied to
the inputs only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class FitterSubject:
    """Training-ready view of one subject.

    ``inputs`` is (2, nx, ny, nz): baseline-like channel then weighted
    channel, already preprocessed (smoothed, optionally masked, scaled).
    ``target`` is the ground-truth t1rho map (ms); ``target_valid`` marks
    voxels whose target is trustworthy; ``roi`` is the cartilage mask.
    """

    subject_id: str
    inputs: np.ndarray
    target: np.ndarray
    target_valid: np.ndarray
    roi: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 4 or self.inputs.shape[0] != 2:
            raise ValueError(f"inputs must be (2, nx, ny, nz), got {self.inputs.shape}")
        if self.target.shape != self.inputs.shape[1:]:
            raise ValueError("target dims do not match inputs")
        if self.roi.shape != self.target.shape or self.target_valid.shape != self.target.shape:
            raise ValueError("mask dims do not match inputs")


@dataclass(frozen=True)
class AugmentConfig:
    flip_p: float = 0.5
    rotate_deg: float = 15.0
    translate_px: int = 8
    noise_frac_max: float = 0.02  # sigma upper bound, fraction of patch max


@dataclass(frozen=True)
class PatchSample:
    inputs: np.ndarray  # (2, ph, pw)
    target: np.ndarray  # (ph, pw)
    loss_mask: np.ndarray  # (ph, pw) float 0/1
    roi: np.ndarray  # (ph, pw) bool
    subject_id: str
    center: tuple[int, int] = (0, 0)  # drawn (x, y) in slice coordinates
    z: int = 0


class PatchSampler:
    def __init__(
        self,
        subjects,
        patch=(64, 64),
        roi_bias: float = 0.8,
        jitter_px: int = 8,
        augment: AugmentConfig | None = AugmentConfig(),
        loss_mask_mode: str = "unmasked",
        seed=0,
    ):
        if not subjects:
            raise ValueError("empty dataset")
        self.subjects = list(subjects)
        self.patch = (int(patch[0]), int(patch[1]))
        self.roi_bias = float(roi_bias)
        self.jitter_px = int(jitter_px)
        self.augment = augment
        self.loss_mask_mode = loss_mask_mode
        self.rng = np.random.default_rng(seed)
        for s in self.subjects:
            nx, ny, _ = s.target.shape
            if min(nx, ny) < 8:
                raise ValueError(f"slice {nx}x{ny} too small to sample")
        if loss_mask_mode == "roi_masked":
            for s in self.subjects:
                if not s.roi.any():
                    raise ValueError(f"empty mask for subject {s.subject_id}")
        # per-subject slice lists that contain ROI voxels, for biased draws
        self._roi_slices = [np.flatnonzero(s.roi.any(axis=(0, 1))) for s in self.subjects]

    def _crop(self, plane, center, pad_mode):
        ph, pw = self.patch
        top = center[0] - ph // 2
        left = center[1] - pw // 2
        pad_x = (max(0, -top), max(0, top + ph - plane.shape[0]))
        pad_y = (max(0, -left), max(0, left + pw - plane.shape[1]))
        if any(pad_x) or any(pad_y):
            if pad_mode == "edge":
                plane = np.pad(plane, (pad_x, pad_y), mode="edge")
            else:
                plane = np.pad(plane, (pad_x, pad_y), mode="constant")
            top += pad_x[0]
            left += pad_y[0]
        return plane[top : top + ph, left : left + pw]

    def _draw_center(self, subject, subj_idx):
        nx, ny, nz = subject.target.shape
        roi_slices = self._roi_slices[subj_idx]
        if roi_slices.size and self.rng.random() < self.roi_bias:
            z = int(self.rng.choice(roi_slices))
            xs, ys = np.nonzero(subject.roi[:, :, z])
            k = int(self.rng.integers(xs.size))
            jx, jy = self.rng.integers(-self.jitter_px, self.jitter_px + 1, size=2)
            return (int(xs[k] + jx), int(ys[k] + jy)), z
        z = int(self.rng.integers(nz))
        return (int(self.rng.integers(nx)), int(self.rng.integers(ny))), z

    def _augment(self, inputs, target, loss_mask, roi):
        aug = self.augment
        rng = self.rng
        if rng.random() < aug.flip_p:
            inputs, target = inputs[:, ::-1], target[::-1]
            loss_mask, roi = loss_mask[::-1], roi[::-1]
        if rng.random() < aug.flip_p:
            inputs, target = inputs[:, :, ::-1], target[:, ::-1]
            loss_mask, roi = loss_mask[:, ::-1], roi[:, ::-1]
        angle = rng.uniform(-aug.rotate_deg, aug.rotate_deg)
        tx, ty = rng.integers(-aug.translate_px, aug.translate_px + 1, size=2)
        sigma = rng.uniform(0.0, aug.noise_frac_max) * max(float(inputs.max()), 1e-12)
        noise = rng.standard_normal(inputs.shape) * sigma

        if angle != 0.0:
            inputs = np.stack(
                [ndimage.rotate(ch, angle, reshape=False, order=1, mode="nearest") for ch in inputs]
            )
            target = ndimage.rotate(target, angle, reshape=False, order=1, mode="constant")
            loss_mask = ndimage.rotate(loss_mask, angle, reshape=False, order=0, mode="constant")
            roi = ndimage.rotate(roi.astype(np.uint8), angle, reshape=False, order=0, mode="constant")
        if tx or ty:
            inputs = np.stack([self._shift2d(ch, tx, ty, "edge") for ch in inputs])
            target = self._shift2d(target, tx, ty, "zero")
            loss_mask = self._shift2d(loss_mask, tx, ty, "zero")
            roi = self._shift2d(roi, tx, ty, "zero")
        inputs = inputs + noise  # inputs only, never the target
        return inputs, target, loss_mask, roi.astype(bool)

    @staticmethod
    def _shift2d(plane, tx, ty, fill):
        mode = "edge" if fill == "edge" else "constant"
        padded = np.pad(plane, ((abs(tx), abs(tx)), (abs(ty), abs(ty))), mode=mode)
        h, w = plane.shape
        return padded[abs(tx) - tx : abs(tx) - tx + h, abs(ty) - ty : abs(ty) - ty + w]

    def sample(self) -> PatchSample:
        subj_idx = int(self.rng.integers(len(self.subjects)))
        subject = self.subjects[subj_idx]
        center, z = self._draw_center(subject, subj_idx)

        inputs = np.stack(
            [self._crop(subject.inputs[c, :, :, z], center, "edge") for c in range(2)]
        )
        target = self._crop(subject.target[:, :, z], center, "zero")
        valid = self._crop(subject.target_valid[:, :, z].astype(np.float64), center, "zero")
        roi = self._crop(subject.roi[:, :, z].astype(np.float64), center, "zero")

        loss_mask = valid * roi if self.loss_mask_mode == "roi_masked" else valid
        if self.augment is not None:
            inputs, target, loss_mask, roi = self._augment(inputs, target, loss_mask, roi > 0.5)
            loss_mask = (loss_mask > 0.5).astype(np.float64)
        return PatchSample(inputs, target, loss_mask, roi > 0.5, subject.subject_id, center, z)

    def sample_batch(self, n):
        samples = [self.sample() for _ in range(n)]
        return (
            np.stack([s.inputs for s in samples]),
            np.stack([s.target for s in samples])[:, None],
            np.stack([s.loss_mask for s in samples])[:, None],
        )
