"""Agnostic-SAM and its baselines over a small reverse-mode autodiff engine."""

from .params import Layout, ParamVector
from .models import MlpSpec, batch_loss, init_model
from .optim import (AgnosticSamConfig, OptimizerState, ResearchEtaConfig, SamConfig, SgdConfig, StepTrace,
                    agnostic_sam_step, cosine_lr, research_eta_step, sam_perturb, sam_step, sgd_step)

__all__ = [
    "Layout", "ParamVector", "MlpSpec", "batch_loss", "init_model",
    "AgnosticSamConfig", "OptimizerState", "ResearchEtaConfig", "SamConfig", "SgdConfig", "StepTrace",
    "agnostic_sam_step", "cosine_lr", "research_eta_step", "sam_perturb", "sam_step", "sgd_step",
]
__version__ = "0.1.0"
