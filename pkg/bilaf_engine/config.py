"""
Selection configuration
=======================

``SelectionConfig`` carries every user-facing hyperparameter.  Values come from
defaults, then an optional plain-text config file, then command-line flags::

    # bilaf.conf
    budget = 100
    cores = 20
    knn-k = 10
    denoise = idc
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .activeft_core import DEFAULT_LAMBDA, DEFAULT_TAU, OptimizerConfig
from .boundary_select import BoundaryConfig, SelectionCriterion, SelectionProcess
from .denoiser import DenoiseConfig, DenoiseStrategy
from .errors import ConfigurationError, InfeasibleBudgetError, PoolIOError
from .feature_store import FeaturePool

logger = logging.getLogger(__name__)

CORE_METHODS = ("activeft", "kmeans", "fds", "random")

# file keys that differ from the field names
KEY_ALIASES = {
    "cores": "core_count",
    "delta": "opponent_delta",
    "lambda": "lambda_weight",
    "lr": "learning_rate",
}
OPTIMIZER_KEYS = {"learning_rate", "max_iters", "rel_tol", "adam_beta1", "adam_beta2", "adam_eps",
                  "restarts"}
_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def parse_switch(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ConfigurationError(f"expected on/off, got '{value}'")


@dataclass(frozen=True)
class SelectionConfig:
    budget: int
    # None when only baselines run; BiLAF needs it
    core_count: Optional[int]
    knn_k: int = 10
    removal_ratio: float = 0.10
    include_fraction: float = 0.10
    opponent_delta: float = 1.1
    denoise: DenoiseStrategy = DenoiseStrategy.IDC
    criterion: SelectionCriterion = SelectionCriterion.BOUNDARY_SCORE
    process: SelectionProcess = SelectionProcess.ITERATIVE_REMOVAL
    opponent_penalty: bool = True
    freeze_intra: bool = True
    core_method: str = "activeft"
    tau: float = DEFAULT_TAU
    lambda_weight: float = DEFAULT_LAMBDA
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "denoise", DenoiseStrategy(self.denoise))
            object.__setattr__(self, "criterion", SelectionCriterion(self.criterion))
            object.__setattr__(self, "process", SelectionProcess(self.process))
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        object.__setattr__(self, "opponent_penalty", parse_switch(self.opponent_penalty))
        object.__setattr__(self, "freeze_intra", parse_switch(self.freeze_intra))
        if self.core_method not in CORE_METHODS:
            raise ConfigurationError(
                f"unknown core method '{self.core_method}' (expected one of {CORE_METHODS})")
        if self.budget < 1:
            raise ConfigurationError(f"budget must be positive, got B={self.budget}")
        if self.core_count is not None:
            if self.core_count < 2:
                raise ConfigurationError(f"need at least two cores, got K={self.core_count}")
            if self.budget < self.core_count:
                raise InfeasibleBudgetError(
                    f"budget B={self.budget} is smaller than the core count K={self.core_count}")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.lambda_weight < 0:
            raise ConfigurationError(f"lambda_weight must be non-negative, got {self.lambda_weight}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        # sub-configs validate the remaining ranges
        self.denoise_config()
        self.boundary_config()

    def validate_for(self, pool: FeaturePool) -> None:
        if self.budget > pool.n:
            raise InfeasibleBudgetError(f"budget B={self.budget} exceeds pool size N={pool.n}")

    def denoise_config(self) -> DenoiseConfig:
        return DenoiseConfig(self.denoise, self.removal_ratio, self.include_fraction, self.knn_k)

    def boundary_config(self) -> BoundaryConfig:
        return BoundaryConfig(self.opponent_delta, self.criterion, self.process,
                              self.opponent_penalty, self.freeze_intra)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        for key in ("denoise", "criterion", "process"):
            out[key] = getattr(self, key).value
        return out

    def merged(self, overrides: Mapping[str, Any]) -> "SelectionConfig":
        """Copy with ``overrides`` applied (optimizer keys go to the nested config)."""
        top = {k: v for k, v in overrides.items() if k not in OPTIMIZER_KEYS}
        opt = {k: v for k, v in overrides.items() if k in OPTIMIZER_KEYS}
        unknown = set(top) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        if opt:
            top["optimizer"] = replace(self.optimizer, **opt)
        return replace(self, **top)


_TYPES = {f.name: f.type for f in fields(SelectionConfig)}
_INT_KEYS = {"budget", "core_count", "knn_k", "seed", "max_iters", "restarts"}
_FLOAT_KEYS = {"removal_ratio", "include_fraction", "opponent_delta", "tau", "lambda_weight",
               "learning_rate", "rel_tol", "adam_beta1", "adam_beta2", "adam_eps"}


def _coerce(key: str, raw: str, line_no: int, path) -> Any:
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError as e:
        raise ConfigurationError(f"{path}, line {line_no}: bad value '{raw}' for {key}") from e
    return raw


def canonical_key(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    return KEY_ALIASES.get(key, key)


def load_config_file(path) -> Dict[str, Any]:
    """Parse ``key = value`` lines; '#' starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise PoolIOError(f"cannot read config file ({e.strerror})", path) from e

    known = set(_TYPES) | OPTIMIZER_KEYS
    values: Dict[str, Any] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}, line {line_no}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = canonical_key(key)
        if key not in known or key == "optimizer":
            raise ConfigurationError(f"{path}, line {line_no}: unknown key '{key}'")
        values[key] = _coerce(key, raw, line_no, path)
    logger.debug("Read %d settings from %s", len(values), path)
    return values


def build_config(file_values: Mapping[str, Any], flag_values: Mapping[str, Any]) -> SelectionConfig:
    """Defaults < config file < flags.  ``None`` flag values mean "not given"."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    if "budget" not in merged:
        raise ConfigurationError("missing required setting 'budget'")
    opt = {k: merged.pop(k) for k in list(merged) if k in OPTIMIZER_KEYS}
    try:
        config = SelectionConfig(budget=merged.pop("budget"),
                                 core_count=merged.pop("core_count", None),
                                 optimizer=OptimizerConfig(**opt))
    except TypeError as e:
        raise ConfigurationError(str(e)) from e
    return config.merged(merged)
