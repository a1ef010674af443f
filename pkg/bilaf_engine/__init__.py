# bilaf_engine package
"""Two-stage sample selection for active finetuning: diverse cores, then boundary samples."""

from .boundary_select import SelectionResult, run_bilaf
from .config import SelectionConfig
from .feature_store import FeaturePool, MixtureSpec, generate_mixture, load_pool, save_pool

__all__ = [
    "FeaturePool",
    "MixtureSpec",
    "SelectionConfig",
    "SelectionResult",
    "generate_mixture",
    "load_pool",
    "run_bilaf",
    "save_pool",
]
