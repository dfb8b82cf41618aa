from .experiment import (
    EvaluationConfig,
    ExperimentConfig,
    LanguageConfig,
    ModelConfig,
    NetConfig,
    QuotaConfig,
    StageConfig,
    StagesConfig,
    TaskConfig,
    WorldConfig,
    load_config,
    validate_config,
)


__all__ = [
    "EvaluationConfig",
    "ExperimentConfig",
    "LanguageConfig",
    "ModelConfig",
    "NetConfig",
    "QuotaConfig",
    "StageConfig",
    "StagesConfig",
    "TaskConfig",
    "WorldConfig",
    "load_config",
    "validate_config",
]
