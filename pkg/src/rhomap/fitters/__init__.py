from .architectures import MlpConfig, UNetConfig, build_mlp, build_unet  # noqa: F401
from .inference import infer_mlp, infer_unet_sliding  # noqa: F401
from .sampling import AugmentConfig, FitterSubject, PatchSample, PatchSampler  # noqa: F401
from .training import TrainConfig, paper_profile, train_mlp, train_unet  # noqa: F401
from .voxels import apply_roi_mask, extract_roi_vectors, reassemble_voxels  # noqa: F401
