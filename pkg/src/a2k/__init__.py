"""All-to-key attention kernels with brute-force oracles and a complexity benchmark."""

from ._backend import name as backend_name
from .attention import (
    A2KConfig,
    FlopCount,
    a2k_flops,
    a2k_forward,
    all2all_forward,
    distributed_attention,
    load_config,
    progressive_step1,
    progressive_step2,
    reshuffle,
    save_config,
)
from .blocking import block, unblock
from .errors import A2KError, ConfigError, DimensionError, FormatError, ValidationError
from .stats import ada_a2k_forward, all2all_adaattn_forward, attention_moments
from .tensor import (
    ChannelProjection,
    Pattern,
    argmax_last_axis,
    contract,
    count_macs,
    instance_norm,
    project_channels,
    softmax_last_axis,
)

__version__ = "0.1.0"
