"""Voxel-grid data model, ROI masks, spin-lock schedules, and volume file I/O.

Everything downstream (phantom simulation, fitting, networks, metrics)
moves data around as :class:`Volume3D` objects: an immutable (nx, ny, nz)
float64 grid with voxel spacing in mm. Slices are taken at fixed z, so a
slice is the (nx, ny) plane the 2D pipeline operates on.

On-disk format is a sidecar pair: ``<base>.qvh`` (JSON header with dims,
spacing, dtype and endianness tags) plus ``<base>.qvr`` (raw little-endian
payload, C order over (x, y, z)). Default payload dtype is float32; pass
``dtype="<f8"`` when bit-exact round-trips of arbitrary float64 data matter
(e.g. reference maps in tests).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

_SUPPORTED_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
HEADER_SUFFIX = ".qvh"
PAYLOAD_SUFFIX = ".qvr"


def _as_dims(dims) -> tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ValueError(f"expected 3 dimensions, got {len(dims)}")
    if any(d <= 0 for d in dims):
        raise ValueError(f"non-positive dimension in {dims}")
    return dims


@dataclass(frozen=True)
class Volume3D:
    """Immutable scalar voxel grid with spacing metadata (mm).

    ``data`` is stored as a read-only C-order float64 array of shape
    ``dims``; its flat view is the row-major array over (x, y, z).
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _as_dims(self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be 3 strictly positive values, got {self.spacing}")
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(
                f"data length {data.size} does not match dims {dims} "
                f"({dims[0] * dims[1] * dims[2]} voxels)"
            )
        data = data.reshape(dims)
        if not np.all(np.isfinite(data)):
            raise ValueError("volume data contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "data", data)

    @property
    def n_voxels(self) -> int:
        return self.data.size

    def with_data(self, data) -> "Volume3D":
        """New volume sharing dims/spacing with fresh data."""
        return Volume3D(self.dims, self.spacing, data)

    def slice(self, z: int) -> np.ndarray:
        return self.data[:, :, z]


@dataclass(frozen=True)
class RoiMask:
    """Binary per-voxel mask; 1 marks the region of interest."""

    dims: tuple[int, int, int]
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _as_dims(self.dims)
        labels = np.ascontiguousarray(np.asarray(self.labels))
        if labels.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(f"mask length {labels.size} does not match dims {dims}")
        labels = labels.reshape(dims)
        uniq = np.unique(labels)
        if not np.all(np.isin(uniq, (0, 1))):
            raise ValueError("mask labels must be 0 or 1")
        labels = labels.astype(np.uint8)
        labels.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return int(self.labels.sum())

    def as_bool(self) -> np.ndarray:
        return self.labels.astype(bool)

    def check_companion(self, vol: Volume3D):
        if vol.dims != self.dims:
            raise ValueError(f"mask dims {self.dims} do not match volume dims {vol.dims}")


@dataclass(frozen=True)
class TslSchedule:
    """Ordered spin-lock times in ms plus spin-lock frequency metadata."""

    tsl_ms: tuple[float, ...]
    fsl_hz: float = 300.0

    def __post_init__(self):
        tsl = tuple(sorted(float(t) for t in self.tsl_ms))
        if len(tsl) < 1:
            raise ValueError("schedule needs at least one spin-lock time")
        if any(t < 0 for t in tsl):
            raise ValueError("spin-lock times must be non-negative")
        if any(b <= a for a, b in zip(tsl, tsl[1:])):
            raise ValueError(f"duplicate spin-lock times in {self.tsl_ms}")
        object.__setattr__(self, "tsl_ms", tsl)
        object.__setattr__(self, "fsl_hz", float(self.fsl_hz))

    def __len__(self) -> int:
        return len(self.tsl_ms)


def new_volume(dims, spacing=(1.0, 1.0, 1.0), fill: float = 0.0) -> Volume3D:
    """Volume with every voxel set to ``fill``."""
    dims = _as_dims(dims)
    fill = float(fill)
    if not np.isfinite(fill):
        raise ValueError("fill value must be finite")
    return Volume3D(dims, spacing, np.full(dims, fill, dtype=np.float64))


def _base_path(path) -> Path:
    path = Path(path)
    if path.suffix in (HEADER_SUFFIX, PAYLOAD_SUFFIX):
        path = path.with_suffix("")
    return path


def save_volume(vol: Volume3D, path, dtype: str = "<f4") -> Path:
    """Write ``<base>.qvh`` + ``<base>.qvr``; returns the header path.

    ``dtype`` selects the payload precision tag ("<f4" default, "<f8" for
    lossless round-trips of arbitrary float64 content).
    """
    if dtype not in _SUPPORTED_DTYPES:
        raise ValueError(f"unsupported dtype tag {dtype!r}")
    base = _base_path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": "qvol",
        "version": 1,
        "dims": list(vol.dims),
        "spacing": list(vol.spacing),
        "dtype": dtype,
        "byte_order": "little",
    }
    header_path = base.with_suffix(HEADER_SUFFIX)
    header_path.write_text(json.dumps(header, sort_keys=True, indent=1) + "\n")
    payload = np.ascontiguousarray(vol.data, dtype=_SUPPORTED_DTYPES[dtype])
    base.with_suffix(PAYLOAD_SUFFIX).write_bytes(payload.tobytes(order="C"))
    return header_path


def load_volume(path) -> Volume3D:
    """Read a volume saved by :func:`save_volume` (header or base path)."""
    base = _base_path(path)
    header_path = base.with_suffix(HEADER_SUFFIX)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed header {header_path}: {exc}") from exc
    for key in ("dims", "spacing", "dtype"):
        if key not in header:
            raise ValueError(f"missing field {key!r} in header {header_path}")
    dtype_tag = header["dtype"]
    if dtype_tag not in _SUPPORTED_DTYPES:
        raise ValueError(f"unsupported dtype tag {dtype_tag!r} in header {header_path}")
    dims = _as_dims(header["dims"])
    raw = base.with_suffix(PAYLOAD_SUFFIX).read_bytes()
    dtype = _SUPPORTED_DTYPES[dtype_tag]
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(raw) != expected:
        raise ValueError(
            f"payload size mismatch for {base}: got {len(raw)} bytes, expected {expected}"
        )
    data = np.frombuffer(raw, dtype=dtype).astype(np.float64).reshape(dims)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"non-finite values in payload {base}")
    return Volume3D(dims, tuple(header["spacing"]), data)


def save_mask(mask: RoiMask, path) -> Path:
    """Store a mask through the volume container (0/1 payload)."""
    vol = Volume3D(mask.dims, (1.0, 1.0, 1.0), mask.labels.astype(np.float64))
    return save_volume(vol, path)


def load_mask(path) -> RoiMask:
    vol = load_volume(path)
    return RoiMask(vol.dims, (vol.data > 0.5).astype(np.uint8))


def gaussian_kernel_2d(radius: int, sigma: float) -> np.ndarray:
    """Truncated 2D Gaussian of half-width ``radius``, normalized to sum 1."""
    radius = int(radius)
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (d / sigma) ** 2)
    kernel = np.outer(w, w)
    return kernel / kernel.sum()


def gaussian_smooth(vol: Volume3D, radius: int = 3, sigma: float = 1.0) -> Volume3D:
    """Per-slice 2D Gaussian smoothing with edge replication at borders.

    Each fixed-z slice is convolved with the normalized truncated kernel
    from :func:`gaussian_kernel_2d`; output dims equal input dims.
    """
    kernel = gaussian_kernel_2d(radius, sigma)
    out = np.empty(vol.dims, dtype=np.float64)
    for z in range(vol.dims[2]):
        out[:, :, z] = ndimage.convolve(vol.data[:, :, z], kernel, mode="nearest")
    return vol.with_data(out)
