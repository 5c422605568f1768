"""Toy contrastive encoder, quantification head and their training loops."""
from .checkpoint import Checkpoint, CheckpointFormatError, initial_checkpoint
from .losses import TAU, info_nce_loss, mse_head_loss
from .network import EncoderConfig
from .training import (Schedule, finetune, make_labeled, predict_batch, predict_strengths,
                       pretrain, train_joint, train_scratch)
