from .tensor import Param, Tensor  # noqa: F401
from .layers import (  # noqa: F401
    AddSkip,
    BatchNorm,
    ConcatSkip,
    Conv2d,
    FullyConnected,
    Limiter,
    MaxPool2,
    NearestUpsample2,
    ReLU,
    layer_from_config,
)
from .network import Network  # noqa: F401
from .losses import l1_loss, l1_loss_grad  # noqa: F401
from .optim import Adam, RMSProp, make_optimizer  # noqa: F401
from .checkpoint import load_network, save_network  # noqa: F401
