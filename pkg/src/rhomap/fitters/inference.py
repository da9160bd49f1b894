"""Whole-volume prediction: sliding-window U-Net and voxel-vector MLP."""

from __future__ import annotations

import numpy as np

from ..volume import RoiMask, Volume3D
from .voxels import extract_roi_vectors, reassemble_voxels


def _window_starts(size, window, stride):
    if size <= window:
        return [0]
    starts = list(range(0, size - window + 1, stride))
    if starts[-1] != size - window:
        starts.append(size - window)
    return starts


def infer_unet_sliding(
    net,
    baseline: Volume3D,
    weighted: Volume3D,
    window=(64, 64),
    stride: int = 32,
    input_scale: float = 1e-3,
    batch_windows: int = 32,
) -> Volume3D:
    """Tile every slice with overlapping windows and average the overlaps.

    Slices smaller than the window are edge-replicated up to window size
    (volumes under 8 px in-plane are rejected). Every voxel is covered at
    least once and the blend is a uniform average, so outputs stay within
    the limiter range.
    """
    if baseline.dims != weighted.dims:
        raise ValueError(f"dims mismatch: {baseline.dims} vs {weighted.dims}")
    nx, ny, nz = baseline.dims
    if min(nx, ny) < 8:
        raise ValueError(f"in-plane dims {nx}x{ny} too small to infer (min 8)")
    wh, ww = int(window[0]), int(window[1])

    px, py = max(wh - nx, 0), max(ww - ny, 0)
    out = np.zeros(baseline.dims)
    for z in range(nz):
        planes = np.stack([baseline.data[:, :, z], weighted.data[:, :, z]])
        if px or py:
            planes = np.pad(planes, ((0, 0), (0, px), (0, py)), mode="edge")
        h, w = planes.shape[1:]
        origins = [(i, j) for i in _window_starts(h, wh, stride) for j in _window_starts(w, ww, stride)]
        acc = np.zeros((h, w))
        cnt = np.zeros((h, w))
        for lo in range(0, len(origins), batch_windows):
            chunk = origins[lo : lo + batch_windows]
            x = np.stack([planes[:, i : i + wh, j : j + ww] for i, j in chunk])
            pred = net.forward(x * input_scale, train=False).data[:, 0]
            for (i, j), p in zip(chunk, pred):
                acc[i : i + wh, j : j + ww] += p
                cnt[i : i + wh, j : j + ww] += 1.0
        out[:, :, z] = (acc / cnt)[:nx, :ny]
    return Volume3D(baseline.dims, baseline.spacing, out)


def infer_mlp(
    net,
    baseline: Volume3D,
    weighted: Volume3D,
    roi: RoiMask,
    input_scale: float = 1e-3,
    batch: int = 8192,
) -> Volume3D:
    """Predict t1rho on ROI voxels only; non-ROI voxels come back as 0."""
    vectors = extract_roi_vectors([baseline, weighted], roi) * input_scale
    preds = np.empty(vectors.shape[0])
    for lo in range(0, vectors.shape[0], batch):
        preds[lo : lo + batch] = net.forward(vectors[lo : lo + batch], train=False).data[:, 0]
    return reassemble_voxels(preds, roi, baseline.dims, baseline.spacing)
