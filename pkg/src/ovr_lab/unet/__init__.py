from .loss import TpcmConfig, tpcm_loss
from .model import (PRESETS, NetConfig, NetworkParams, backward, forward, identity_params,
                    init_params, load_model, reconstruct, save_model)
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainLog, finetune_decoder, run_strategy, train

__all__ = [
    "PRESETS", "AdamState", "NetConfig", "NetworkParams", "TpcmConfig", "TrainConfig",
    "TrainLog", "adam_step", "backward", "finetune_decoder", "forward", "identity_params",
    "init_params", "load_model", "reconstruct", "run_strategy", "save_model", "tpcm_loss",
    "train",
]
