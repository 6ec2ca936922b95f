"""Joint single-image dehazing and depth estimation for varicolored haze."""
from .config import (
    AirlightConfig,
    DecoderConfig,
    EncoderConfig,
    LossWeights,
    RunConfig,
    TrainConfig,
    toy_config,
)
from .decoders import DecodedOutputs, JointModel
from .synthesis import (
    ScatterParams,
    compose_haze,
    generate_dataset,
    invert_haze,
    sample_scatter_params,
    transmission_from_depth,
)

__version__ = "0.1.0"
