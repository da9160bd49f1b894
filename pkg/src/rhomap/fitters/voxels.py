"""ROI voxel-vector extraction/reassembly and input masking.

Voxel order is row-major by (z, y, x): z slowest, x fastest. The same order
is used for extraction and reassembly, so extract-then-reassemble is the
identity on the ROI.
"""

from __future__ import annotations

import numpy as np

from ..volume import RoiMask, Volume3D


def _transposed_mask(roi: RoiMask) -> np.ndarray:
    return roi.labels.transpose(2, 1, 0).astype(bool)


def extract_roi_vectors(vols, roi: RoiMask) -> np.ndarray:
    """Stack per-voxel values of each volume over the ROI; shape (n_roi, n_vols)."""
    vols = list(vols)
    for v in vols:
        roi.check_companion(v)
    mask_t = _transposed_mask(roi)
    if not mask_t.any():
        raise ValueError("empty mask")
    return np.stack([v.data.transpose(2, 1, 0)[mask_t] for v in vols], axis=1)


def reassemble_voxels(predictions, roi: RoiMask, dims, spacing=(1.0, 1.0, 1.0)) -> Volume3D:
    """Scatter a prediction vector back into a volume; non-ROI voxels are 0."""
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    dims = tuple(int(d) for d in dims)
    if dims != roi.dims:
        raise ValueError(f"dims {dims} do not match ROI dims {roi.dims}")
    if predictions.size != roi.count:
        raise ValueError(
            f"prediction length {predictions.size} does not match ROI voxel count {roi.count}"
        )
    out = np.zeros(dims, dtype=np.float64)
    view = out.transpose(2, 1, 0)
    view[_transposed_mask(roi)] = predictions
    return Volume3D(dims, spacing, out)


def apply_roi_mask(vol: Volume3D, roi: RoiMask) -> Volume3D:
    """Zero out voxels outside the ROI."""
    roi.check_companion(vol)
    return vol.with_data(vol.data * roi.labels)
