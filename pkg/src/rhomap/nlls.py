"""Classical decay fitting: analytic two-point inversion and bounded LM.

Both fitters run per voxel on whole volumes (vectorized across voxels) and
never emit NaN/Inf: estimates are projected into :class:`FitBounds` and a
validity flag records convergence/clamping instead. ``fit_lm`` is the
multi-point solver used both for study ground truth (four spin-lock times)
and for agreement checks against the two-point closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import TslSchedule, Volume3D

_EPS = 1e-30


@dataclass(frozen=True)
class FitBounds:
    """Box constraints for (i0, t1rho). ``i0_max=None`` means 4x the data max."""

    t1rho_min_ms: float = 1.0
    t1rho_max_ms: float = 200.0
    i0_min: float = 0.0
    i0_max: float | None = None

    def __post_init__(self):
        if not self.t1rho_min_ms < self.t1rho_max_ms:
            raise ValueError("t1rho bounds must satisfy min < max")
        if self.i0_max is not None and not self.i0_min < self.i0_max:
            raise ValueError("i0 bounds must satisfy min < max")

    def resolve_i0_max(self, data_max: float) -> float:
        if self.i0_max is not None:
            return self.i0_max
        return max(4.0 * float(data_max), self.i0_min + 1.0)


@dataclass(frozen=True)
class FitResult:
    """Per-voxel parameter maps with validity and solver diagnostics.

    ``valid`` is 1 where the fit converged with t1rho strictly inside its
    bounds (and, for the closed form, where the log ratio was defined).
    Invalid voxels hold in-bounds fallback values, never NaN. ``iterations``
    and ``residual`` are populated by the LM solver only.
    """

    t1rho_map: Volume3D
    i0_map: Volume3D
    valid: np.ndarray
    iterations: np.ndarray | None = None
    residual: np.ndarray | None = None


def fit_two_point(
    i0_img: Volume3D,
    ik_img: Volume3D,
    tsl0_ms: float,
    tslk_ms: float,
    bounds: FitBounds | None = None,
) -> FitResult:
    """Closed-form two-point fit: ``t1rho = (tslk - tsl0) / ln(i0 / ik)``.

    Voxels with an undefined log ratio (``ik >= i0`` or ``ik <= 0``) are
    clamped to the upper t1rho bound and flagged invalid, as are voxels
    whose estimate lands outside the bounds.
    """
    if i0_img.dims != ik_img.dims:
        raise ValueError(f"image dims mismatch: {i0_img.dims} vs {ik_img.dims}")
    if not tslk_ms > tsl0_ms >= 0:
        raise ValueError(f"need tslk > tsl0 >= 0, got tsl0={tsl0_ms}, tslk={tslk_ms}")
    bounds = bounds or FitBounds()
    i0_max = bounds.resolve_i0_max(max(i0_img.data.max(), ik_img.data.max()))

    a = i0_img.data
    b = ik_img.data
    defined = (b > 0) & (a > b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(defined, a / np.where(defined, b, 1.0), np.e)
        t1rho = (tslk_ms - tsl0_ms) / np.log(ratio)
    t1rho = np.where(defined, t1rho, bounds.t1rho_max_ms)

    below = t1rho < bounds.t1rho_min_ms
    above = t1rho > bounds.t1rho_max_ms
    t1rho = np.clip(t1rho, bounds.t1rho_min_ms, bounds.t1rho_max_ms)
    valid = defined & ~below & ~above

    with np.errstate(over="ignore"):
        i0_est = np.where(defined, a * np.exp(tsl0_ms / t1rho), a)
    i0_clipped = (i0_est < bounds.i0_min) | (i0_est > i0_max)
    i0_est = np.clip(i0_est, bounds.i0_min, i0_max)
    valid &= ~i0_clipped

    return FitResult(
        t1rho_map=i0_img.with_data(t1rho),
        i0_map=i0_img.with_data(i0_est),
        valid=valid.astype(np.uint8),
    )


def _loglinear_init(t, y, bounds, i0_max):
    """Least-squares line through (t, ln y) per voxel; midpoint fallback.

    Returns (a0, t0, usable) where ``usable`` marks voxels with all-positive
    intensities and a physically decaying slope; the rest start at the
    bounds midpoint and are reported invalid downstream.
    """
    n_pts, n_vox = y.shape
    pos = np.all(y > 0, axis=0)
    a0 = np.full(n_vox, 0.5 * (bounds.i0_min + i0_max))
    t0 = np.full(n_vox, 0.5 * (bounds.t1rho_min_ms + bounds.t1rho_max_ms))
    if pos.any():
        logy = np.log(y[:, pos])
        tc = t - t.mean()
        denom = float(np.sum(tc**2))
        slope = (tc @ logy) / denom
        intercept = logy.mean(axis=0) - slope * t.mean()
        decaying = slope < 0
        with np.errstate(divide="ignore", over="ignore"):
            t_est = np.where(decaying, -1.0 / np.where(decaying, slope, -1.0), t0[pos])
            a_est = np.where(decaying, np.exp(intercept), a0[pos])
        a0[pos] = np.clip(a_est, bounds.i0_min, i0_max)
        t0[pos] = np.clip(t_est, bounds.t1rho_min_ms, bounds.t1rho_max_ms)
        usable = np.zeros(n_vox, dtype=bool)
        usable[pos] = decaying
    else:
        usable = np.zeros(n_vox, dtype=bool)
    return a0, t0, usable


def fit_lm(
    images: dict,
    schedule: TslSchedule | None = None,
    bounds: FitBounds | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
    lam0: float = 1e-3,
    trace_voxels=None,
) -> FitResult:
    """Bounded Levenberg-Marquardt fit of (i0, t1rho) per voxel.

    ``images`` maps spin-lock time (ms) to a Volume3D; at least two distinct
    times are required. Initialization comes from the log-linear fit, steps
    use multiplicative damping on the normal-equation diagonal, parameters
    are projected into bounds after every accepted step, and convergence is
    a maximum relative parameter step below ``tol``.

    When ``trace_voxels`` (flat row-major voxel indices) is given, returns
    ``(result, traces)`` where ``traces`` maps each index to the SSE after
    every accepted step, for monotonicity diagnostics.
    """
    tsls = sorted(float(k) for k in images)
    if len(tsls) < 2:
        raise ValueError("fit_lm needs at least 2 distinct spin-lock times")
    if schedule is not None and tuple(tsls) != schedule.tsl_ms:
        raise ValueError(f"images TSLs {tuple(tsls)} do not match schedule {schedule.tsl_ms}")
    vols = [images[k] for k in tsls]
    dims = vols[0].dims
    for v in vols[1:]:
        if v.dims != dims:
            raise ValueError("image dims mismatch across spin-lock times")
    bounds = bounds or FitBounds()

    t = np.asarray(tsls, dtype=np.float64)
    y = np.stack([v.data.reshape(-1) for v in vols], axis=0)  # (K, V)
    n_vox = y.shape[1]
    raw_max = float(y.max())
    i0_max = bounds.resolve_i0_max(raw_max)

    # normalize intensities so the solver state is (nearly) independent of a
    # global input scale: T1rho maps come out scale-equivariant and the
    # normal equations stay well conditioned
    scale = raw_max if raw_max > 0 else 1.0
    y = y / scale
    norm_bounds = FitBounds(
        t1rho_min_ms=bounds.t1rho_min_ms,
        t1rho_max_ms=bounds.t1rho_max_ms,
        i0_min=bounds.i0_min / scale,
        i0_max=i0_max / scale,
    )
    bounds, i0_max = norm_bounds, norm_bounds.i0_max

    a, tau, usable = _loglinear_init(t, y, bounds, i0_max)

    lam = np.full(n_vox, lam0)
    converged = np.zeros(n_vox, dtype=bool)
    iterations = np.zeros(n_vox, dtype=np.int32)
    active = np.ones(n_vox, dtype=bool)

    traces = None
    if trace_voxels is not None:
        traces = {int(i): [] for i in np.atleast_1d(trace_voxels)}

    def sse_of(a_, tau_, y_):
        model = a_[None, :] * np.exp(-t[:, None] / tau_[None, :])
        r = y_ - model
        return np.einsum("kv,kv->v", r, r), r, model

    sse_all, _, _ = sse_of(a, tau, y)

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya = y[:, idx]
        aa, ta, la = a[idx], tau[idx], lam[idx]
        ea = np.exp(-t[:, None] / ta[None, :])
        model = aa[None, :] * ea
        r = ya - model
        sse = np.einsum("kv,kv->v", r, r)
        j_a = ea
        j_t = model * (t[:, None] / ta[None, :] ** 2)
        saa = np.einsum("kv,kv->v", j_a, j_a)
        sat = np.einsum("kv,kv->v", j_a, j_t)
        stt = np.einsum("kv,kv->v", j_t, j_t)
        g_a = np.einsum("kv,kv->v", j_a, r)
        g_t = np.einsum("kv,kv->v", j_t, r)

        maa = saa * (1.0 + la)
        mtt = stt * (1.0 + la)
        det = maa * mtt - sat**2
        ok = np.abs(det) > _EPS
        det_safe = np.where(ok, det, 1.0)
        da = np.where(ok, (mtt * g_a - sat * g_t) / det_safe, 0.0)
        dt = np.where(ok, (maa * g_t - sat * g_a) / det_safe, 0.0)

        a_new = np.clip(aa + da, bounds.i0_min, i0_max)
        t_new = np.clip(ta + dt, bounds.t1rho_min_ms, bounds.t1rho_max_ms)
        sse_new, _, _ = sse_of(a_new, t_new, ya)
        accept = ok & np.isfinite(sse_new) & (sse_new <= sse)

        rel_step = np.maximum(
            np.abs(a_new - aa) / np.maximum(np.abs(aa), _EPS),
            np.abs(t_new - ta) / np.maximum(np.abs(ta), _EPS),
        )
        small = accept & (rel_step < tol)

        a[idx] = np.where(accept, a_new, aa)
        tau[idx] = np.where(accept, t_new, ta)
        sse_all[idx] = np.where(accept, sse_new, sse)
        lam[idx] = np.clip(np.where(accept, la / 10.0, la * 10.0), 1e-12, 1e14)
        iterations[idx] += 1
        converged[idx] |= small
        active[idx] = ~small

        if traces is not None:
            for k, local in zip(idx, range(idx.size)):
                if int(k) in traces and accept[local]:
                    traces[int(k)].append(float(sse_new[local]))

    valid = (
        converged
        & usable
        & (tau > bounds.t1rho_min_ms)
        & (tau < bounds.t1rho_max_ms)
    )

    result = FitResult(
        t1rho_map=vols[0].with_data(tau.reshape(dims)),
        i0_map=vols[0].with_data((a * scale).reshape(dims)),
        valid=valid.reshape(dims).astype(np.uint8),
        iterations=iterations.reshape(dims),
        residual=(sse_all * scale**2).reshape(dims),
    )
    if traces is not None:
        traces = {k: [s * scale**2 for s in v] for k, v in traces.items()}
        return result, traces
    return result
