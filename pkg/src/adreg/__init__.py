"""Adaptive discriminative regularization: losses, exact gradients and desk-scale experiments."""
from .losses import (
    AdrCache,
    AdrHyper,
    EntropyHyper,
    LossOutput,
    adr_backward_exact,
    adr_backward_paper,
    adr_forward,
    ce_binary_derivative,
    ce_forward_backward,
    combined_forward_backward,
    entropy_binary_derivative,
    entropy_combined_forward_backward,
    entropy_reg_forward_backward,
    label_smooth_targets,
    ls_forward_backward,
)
from .simplex import normalized_entropy, softmax, topk_stats, variance_uncertainty

__version__ = "0.1.0"
