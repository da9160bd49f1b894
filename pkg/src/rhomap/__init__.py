"""T1rho mapping from two images: learned fitters vs classical NLLS, on synthetic phantoms."""

__version__ = "0.1.0"

from .volume import (  # noqa: F401
    RoiMask,
    TslSchedule,
    Volume3D,
    gaussian_smooth,
    load_mask,
    load_volume,
    new_volume,
    save_mask,
    save_volume,
)
from .phantom import PhantomBundle, PhantomSpec, generate_phantom, rician_noise, signal  # noqa: F401
from .nlls import FitBounds, FitResult, fit_lm, fit_two_point  # noqa: F401
