"""Contrastive label disambiguation on the target client."""
from .gmm import W0, W1, GmmFit, bank_entropies, divide_samples, fit_gmm2, self_entropy
from .losses import augment, batch_contrastive_loss, classification_loss, contrastive_loss
from .memory import (EmbeddingQueue, MemoryBank, PrototypeSet, bank_row_update, update_prototypes,
                     update_prototypes_batch)
from .model import TargetModel, init_target_model, query_backward, query_forward
from .train import EpochStats, GcldHyper, GcldState, init_state, train_epoch, train_step

__all__ = [
    "W0", "W1", "GmmFit", "bank_entropies", "divide_samples", "fit_gmm2", "self_entropy",
    "augment", "batch_contrastive_loss", "classification_loss", "contrastive_loss",
    "EmbeddingQueue", "MemoryBank", "PrototypeSet", "bank_row_update", "update_prototypes",
    "update_prototypes_batch", "TargetModel", "init_target_model", "query_backward", "query_forward",
    "EpochStats", "GcldHyper", "GcldState", "init_state", "train_epoch", "train_step",
]
