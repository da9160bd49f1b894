"""Mono-exponential spin-lock signal model and synthetic knee-like phantoms.

The forward model is the two-parameter decay ``I(tsl) = I0 * exp(-tsl / t1rho)``.
Phantoms are layered cartoons of a sagittal knee: a soft-tissue ellipse, two
bone discs, and a thin curved cartilage band that doubles as the ROI. Each
tissue class carries smooth t1rho and baseline-intensity fields, weighted
images are rendered through the decay model plus Rician noise, and a
PD-weighted surrogate of the baseline image is produced with a smooth
multiplicative bias field and per-class contrast gains (the controlled
cross-sequence domain gap).

All randomness flows from ``(spec.seed, subject_index)``, so bundles are a
pure function of their spec.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import RoiMask, TslSchedule, Volume3D

# tissue class codes used in the class map
AIR, MUSCLE, BONE, CARTILAGE = 0, 1, 2, 3
CLASS_NAMES = {"air": AIR, "muscle": MUSCLE, "bone": BONE, "cartilage": CARTILAGE}

# baseline-intensity multiplier per class, applied on top of the smooth
# intensity landscape; air carries no signal
_CLASS_I0_GAIN = {AIR: 0.0, MUSCLE: 1.0, BONE: 0.30, CARTILAGE: 1.05}


def signal(i0, t1rho_ms, tsl_ms):
    """Spin-lock decay ``i0 * exp(-tsl_ms / t1rho_ms)``; broadcasts like numpy.

    ``t1rho_ms`` must be strictly positive, ``i0`` and ``tsl_ms`` non-negative.
    """
    i0 = np.asarray(i0, dtype=np.float64)
    t1rho_ms = np.asarray(t1rho_ms, dtype=np.float64)
    tsl_ms = np.asarray(tsl_ms, dtype=np.float64)
    if np.any(t1rho_ms <= 0):
        raise ValueError("non-positive t1rho_ms")
    if np.any(i0 < 0):
        raise ValueError("i0 must be non-negative")
    if np.any(tsl_ms < 0):
        raise ValueError("tsl_ms must be non-negative")
    out = i0 * np.exp(-tsl_ms / t1rho_ms)
    return float(out) if out.ndim == 0 else out


def rician_noise(vol: Volume3D, sigma_abs: float, seed) -> Volume3D:
    """Magnitude-MRI noise: ``sqrt((s + g1*sigma)^2 + (g2*sigma)^2)``.

    ``sigma_abs = 0`` returns the input unchanged. ``seed`` is anything
    ``numpy.random.default_rng`` accepts.
    """
    if sigma_abs < 0:
        raise ValueError("sigma_abs must be non-negative")
    if sigma_abs == 0:
        return vol
    rng = np.random.default_rng(seed)
    g1 = rng.standard_normal(vol.dims)
    g2 = rng.standard_normal(vol.dims)
    noisy = np.hypot(vol.data + sigma_abs * g1, sigma_abs * g2)
    return vol.with_data(noisy)


def gaussian_noise(vol: Volume3D, sigma_abs: float, seed) -> Volume3D:
    """Additive Gaussian noise clipped at zero; debugging stand-in for Rician."""
    if sigma_abs < 0:
        raise ValueError("sigma_abs must be non-negative")
    if sigma_abs == 0:
        return vol
    rng = np.random.default_rng(seed)
    noisy = np.maximum(vol.data + sigma_abs * rng.standard_normal(vol.dims), 0.0)
    return vol.with_data(noisy)


@dataclass(frozen=True)
class PhantomSpec:
    """Generative description of a synthetic cohort.

    ``noise_sigma`` is the Rician sigma as a fraction of the mean cartilage
    baseline intensity (0.02 -> cartilage SNR 50). ``bias_amplitude`` is the
    peak fractional deviation of the PD surrogate's multiplicative field;
    ``bias_jitter_frac`` adds a small per-subject random component on top of
    the shared field. ``pd_contrast_gain`` maps tissue-class names to the
    surrogate's multiplicative contrast factors.
    """

    dims: tuple[int, int, int] = (96, 96, 6)
    spacing: tuple[float, float, float] = (1.0, 1.0, 3.0)
    n_subjects: int = 10
    seed: int = 0
    schedule: TslSchedule = field(default_factory=lambda: TslSchedule((0.0, 10.0, 30.0, 50.0)))
    t1rho_range_ms: tuple[float, float] = (30.0, 70.0)
    background_t1rho_ms: dict = field(
        default_factory=lambda: {"muscle": (25.0, 45.0), "bone": (8.0, 20.0)}
    )
    i0_range: tuple[float, float] = (800.0, 1200.0)
    noise_sigma: float = 0.02
    bias_amplitude: float = 0.3
    bias_jitter_frac: float = 0.02
    pd_contrast_gain: dict = field(
        default_factory=lambda: {"air": 1.0, "muscle": 1.0, "bone": 1.0, "cartilage": 1.1}
    )
    band_thickness_px: tuple[int, int] = (5, 8)
    anatomy_jitter_px: float = 3.0
    noise_kind: str = "rician"

    def __post_init__(self):
        lo, hi = self.t1rho_range_ms
        if not (0 < lo < hi <= 200):
            raise ValueError(f"t1rho_range_ms must satisfy 0 < low < high <= 200, got {self.t1rho_range_ms}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.bias_amplitude < 0:
            raise ValueError("bias_amplitude must be non-negative")
        if self.noise_kind not in ("rician", "gaussian"):
            raise ValueError(f"unknown noise_kind {self.noise_kind!r}")
        unknown = set(self.pd_contrast_gain) - set(CLASS_NAMES)
        if unknown:
            raise ValueError(f"unknown tissue classes in pd_contrast_gain: {sorted(unknown)}")


@dataclass(frozen=True)
class PhantomBundle:
    """One subject's multi-TSL dataset with ground truth."""

    subject_id: str
    truth_t1rho: Volume3D
    i0_truth: Volume3D
    weighted: dict  # tsl_ms -> Volume3D, noisy magnitudes
    pd_surrogate: Volume3D
    roi: RoiMask
    class_map: np.ndarray  # uint8 tissue codes, same dims
    noise_sigma_abs: float = 0.0


def _normalized_coords(dims):
    """Per-axis coordinates in [-1, 1], broadcastable to the full grid."""
    axes = []
    for n in dims:
        if n == 1:
            axes.append(np.zeros(1))
        else:
            axes.append(np.linspace(-1.0, 1.0, n))
    u = axes[0][:, None, None]
    v = axes[1][None, :, None]
    w = axes[2][None, None, :]
    return u, v, w


def _smooth_field01(rng, dims):
    """Random low-order polynomial over the grid, min-max scaled to [0, 1]."""
    u, v, w = _normalized_coords(dims)
    terms = [u, v, w, u * v, u * w, v * w, u**2, v**2, w**2]
    coeff = rng.normal(size=len(terms))
    f = np.zeros(dims, dtype=np.float64)
    for c, t in zip(coeff, terms):
        f = f + c * t
    lo, hi = f.min(), f.max()
    if hi - lo < 1e-12:
        return np.full(dims, 0.5)
    return (f - lo) / (hi - lo)


def _range_field(rng, dims, lo, hi, span=0.3):
    """Smooth field inside (lo, hi) with a random per-subject level.

    The level uniform draw moves the field's center so subjects have
    genuinely different regional means; the span keeps every voxel strictly
    inside the class range.
    """
    level = rng.uniform(0.15, 0.85 - span)
    f01 = _smooth_field01(rng, dims)
    return lo + (hi - lo) * (level + span * f01)


def _bias_field(rng, dims, amplitude, jitter_frac):
    """Smooth multiplicative bias for the PD surrogate, max |field| = amplitude.

    The shared component is a quartic bowl: nearly flat (and positive) over
    the central anatomy, strongest at the corners. The jitter component is a
    small per-subject random polynomial.
    """
    if amplitude == 0:
        return np.zeros(dims, dtype=np.float64)
    u, v, w = _normalized_coords(dims)
    r2 = (u**2 + v**2) / 2.0
    shared = 0.7 + 0.3 * r2**2 + 0.0 * w
    f = np.broadcast_to(shared, dims).copy()
    if jitter_frac > 0:
        f = f + jitter_frac * (2.0 * _smooth_field01(rng, dims) - 1.0)
    return amplitude * f / np.abs(f).max()


def _render_geometry(rng, spec: PhantomSpec):
    """Class map + ROI for one subject: tissue ellipse, two bones, cartilage arc."""
    nx, ny, nz = spec.dims
    if min(nx, ny) < 32:
        raise ValueError(f"in-plane dims {nx}x{ny} too small for the geometry template (min 32)")
    jit = spec.anatomy_jitter_px
    # per-subject anatomy parameters, in normalized units
    ju = 2.0 / max(nx - 1, 1)
    jv = 2.0 / max(ny - 1, 1)
    femur_c = (rng.uniform(-jit, jit) * ju, -0.38 + rng.uniform(-jit, jit) * jv)
    femur_r = 0.36 + rng.uniform(-2, 2) * ju
    tibia_c = (rng.uniform(-jit, jit) * ju, 0.60 + rng.uniform(-jit, jit) * jv)
    tibia_r = 0.30 + rng.uniform(-2, 2) * ju
    thickness = rng.integers(spec.band_thickness_px[0], spec.band_thickness_px[1] + 1)
    th_units = thickness * ju
    arc_half_deg = rng.uniform(55.0, 70.0)
    arc_center_deg = 90.0 + rng.uniform(-8.0, 8.0)

    u, v, w = _normalized_coords(spec.dims)
    uu = np.broadcast_to(u, spec.dims)
    vv = np.broadcast_to(v, spec.dims)
    # mild through-plane scaling so slices differ
    zscale = 1.0 + 0.02 * np.broadcast_to(w, spec.dims)

    classes = np.full(spec.dims, AIR, dtype=np.uint8)
    tissue = (uu / 0.95) ** 2 + (vv / 0.95) ** 2 <= 1.0
    classes[tissue] = MUSCLE

    def disc(center, radius):
        return (uu - center[0]) ** 2 + (vv - center[1]) ** 2 <= (radius * zscale) ** 2

    classes[disc(femur_c, femur_r) & tissue] = BONE
    classes[disc(tibia_c, tibia_r) & tissue] = BONE

    # cartilage: annulus sector hugging the femur, facing the tibia
    du, dv = uu - femur_c[0], vv - femur_c[1]
    rad = np.sqrt(du**2 + dv**2)
    fr = femur_r * zscale
    in_band = (rad > fr) & (rad <= fr + th_units)
    theta = np.degrees(np.arctan2(dv, du))
    dtheta = np.abs((theta - arc_center_deg + 180.0) % 360.0 - 180.0)
    band = in_band & (dtheta <= arc_half_deg) & tissue
    classes[band & (classes != BONE)] = CARTILAGE

    roi = (classes == CARTILAGE).astype(np.uint8)
    if roi.sum() == 0:
        raise ValueError("geometry produced an empty cartilage ROI")
    return classes, roi


def generate_phantom(spec: PhantomSpec, subject_index: int) -> PhantomBundle:
    """Render one subject; deterministic in (spec.seed, subject_index)."""
    if not 0 <= subject_index < spec.n_subjects:
        raise ValueError(f"subject_index {subject_index} outside 0..{spec.n_subjects - 1}")
    root = np.random.SeedSequence([int(spec.seed), 7919, int(subject_index)])
    geo_seq, field_seq, noise_seq = root.spawn(3)
    geo_rng = np.random.default_rng(geo_seq)
    field_rng = np.random.default_rng(field_seq)

    classes, roi_labels = _render_geometry(geo_rng, spec)

    lo, hi = spec.t1rho_range_ms
    t1rho = np.full(spec.dims, 30.0, dtype=np.float64)  # air placeholder, signal is zero there
    t1rho[classes == CARTILAGE] = _range_field(field_rng, spec.dims, lo, hi)[classes == CARTILAGE]
    for name, code in (("muscle", MUSCLE), ("bone", BONE)):
        blo, bhi = spec.background_t1rho_ms.get(name, (20.0, 40.0))
        t1rho[classes == code] = _range_field(field_rng, spec.dims, blo, bhi)[classes == code]

    ilo, ihi = spec.i0_range
    landscape = ilo + (ihi - ilo) * (0.2 + 0.6 * _smooth_field01(field_rng, spec.dims))
    gain = np.zeros(spec.dims, dtype=np.float64)
    for code, g in _CLASS_I0_GAIN.items():
        gain[classes == code] = g
    i0 = landscape * gain

    sigma_abs = spec.noise_sigma * float(i0[roi_labels == 1].mean())
    noise_fn = rician_noise if spec.noise_kind == "rician" else gaussian_noise

    i0_vol = Volume3D(spec.dims, spec.spacing, i0)
    truth_vol = Volume3D(spec.dims, spec.spacing, t1rho)

    noise_children = noise_seq.spawn(len(spec.schedule) + 1)
    weighted = {}
    for k, tsl in enumerate(spec.schedule.tsl_ms):
        clean = Volume3D(spec.dims, spec.spacing, signal(i0, t1rho, tsl))
        weighted[tsl] = noise_fn(clean, sigma_abs, noise_children[k])

    bias = _bias_field(field_rng, spec.dims, spec.bias_amplitude, spec.bias_jitter_frac)
    pd_gain = np.ones(spec.dims, dtype=np.float64)
    for name, code in CLASS_NAMES.items():
        pd_gain[classes == code] = spec.pd_contrast_gain.get(name, 1.0)
    pd_clean = Volume3D(spec.dims, spec.spacing, i0 * pd_gain * (1.0 + bias))
    pd_surrogate = noise_fn(pd_clean, sigma_abs, noise_children[-1])

    return PhantomBundle(
        subject_id=f"S{subject_index:03d}",
        truth_t1rho=truth_vol,
        i0_truth=i0_vol,
        weighted=weighted,
        pd_surrogate=pd_surrogate,
        roi=RoiMask(spec.dims, roi_labels),
        class_map=classes,
        noise_sigma_abs=sigma_abs,
    )
