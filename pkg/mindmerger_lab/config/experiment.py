from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
import yaml

from mindmerger_lab.core import (
    BASE_STAGES,
    BRIDGE_STAGES,
    VARIANT_STAGES,
    ConfigError,
    MappingVariant,
    StageKind,
    Tier,
    VariantId,
)
from mindmerger_lab.utils import stable_hash


SCHEMA_VERSION = 1
DATASETS = (
    "lm_pretrain",
    "encoder_pairs",
    "mapping_pairs",
    "english_tasks",
    "query_translation",
)
# Datasets each stage may train on.
STAGE_DATASETS = {
    StageKind.LM_PRETRAIN: ("lm_pretrain",),
    StageKind.TASK_FINETUNE: ("english_tasks",),
    StageKind.ENCODER_PRETRAIN: ("encoder_pairs", "mapping_pairs"),
    StageKind.MAPPING: ("mapping_pairs", "encoder_pairs"),
    StageKind.AUGMENTATION: ("query_translation", "english_tasks"),
    StageKind.MULTIREASON_SFT: ("english_tasks", "query_translation"),
}


class LanguageConfig(BaseModel):
    id: str
    tier: Tier
    seed: int | None = None

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("id")
    def id_is_a_plain_word(cls, value):
        if not value or not value.isidentifier():
            raise ValueError(f"language id '{value}' must be a non-empty identifier")
        return value


class WorldConfig(BaseModel):
    seed: int = 7
    content_vocab_size: int = 180
    languages: list[LanguageConfig] = Field(
        default_factory=lambda: [
            LanguageConfig(id="en", tier=Tier.ENGLISH),
            LanguageConfig(id="hi1", tier=Tier.HIGH),
            LanguageConfig(id="hi2", tier=Tier.HIGH),
            LanguageConfig(id="hi3", tier=Tier.HIGH),
            LanguageConfig(id="lo1", tier=Tier.LOW),
            LanguageConfig(id="lo2", tier=Tier.LOW),
            LanguageConfig(id="lo3", tier=Tier.LOW),
        ]
    )

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("languages")
    def one_english_and_unique_ids(cls, value):
        ids = [language.id for language in value]
        if len(set(ids)) != len(ids):
            raise ValueError(f"language ids must be unique, got {ids}")
        english = [language.id for language in value if language.tier is Tier.ENGLISH]
        if len(english) != 1:
            raise ValueError(f"exactly one english-tier language is required, got {english}")
        return value

    @property
    def english_id(self) -> str:
        return next(language.id for language in self.languages if language.tier is Tier.ENGLISH)

    @property
    def language_ids(self) -> list[str]:
        return [language.id for language in self.languages]

    def ids_by_tier(self, tier: Tier) -> list[str]:
        return [language.id for language in self.languages if language.tier is tier]


class QuotaConfig(BaseModel):
    lm_pretrain_english: int = 4000
    high_tier_fraction: float = 0.1
    echo_rate: float = 0.1
    encoder_pairs_per_language: int = 1500
    mapping_pairs_per_language: int = 1000
    english_tasks: int = 3000
    query_translation_per_language: int = 1000
    eval_per_language: int = 100
    ood_eval_per_language: int = 50
    translation_heldout_per_language: int = 50
    alignment_pool_size: int = 200

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator(
        "lm_pretrain_english",
        "encoder_pairs_per_language",
        "mapping_pairs_per_language",
        "english_tasks",
        "query_translation_per_language",
        "eval_per_language",
        "ood_eval_per_language",
        "translation_heldout_per_language",
        "alignment_pool_size",
    )
    def must_not_be_negative(cls, value):
        if value < 0:
            raise ValueError(f"quota must be >= 0, got {value}")
        return value

    @field_validator("high_tier_fraction", "echo_rate")
    def must_be_a_fraction(cls, value):
        if not 0 <= value <= 1:
            raise ValueError(f"must lie in [0, 1], got {value}")
        return value


class TaskConfig(BaseModel):
    math_share: float = 0.5
    math_difficulties: list[int] = Field(default_factory=lambda: [1])
    compare_label_mix: dict[str, float] = Field(
        default_factory=lambda: {"yes": 0.4, "no": 0.4, "equal": 0.2}
    )

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("math_share")
    def share_is_a_fraction(cls, value):
        if not 0 <= value <= 1:
            raise ValueError(f"math_share must lie in [0, 1], got {value}")
        return value

    @field_validator("math_difficulties")
    def known_difficulties(cls, value):
        if not value or any(level not in (1, 2, 3) for level in value):
            raise ValueError(f"math_difficulties must be a non-empty subset of [1, 2, 3], got {value}")
        return sorted(set(value))

    @field_validator("compare_label_mix")
    def mix_is_a_distribution(cls, value):
        if set(value) != {"yes", "no", "equal"}:
            raise ValueError(f"compare_label_mix needs exactly yes/no/equal, got {sorted(value)}")
        if any(share < 0 for share in value.values()) or abs(sum(value.values()) - 1) > 1e-9:
            raise ValueError(f"compare_label_mix must be non-negative and sum to 1, got {value}")
        return value


class NetConfig(BaseModel):
    dim: int
    layers: int
    heads: int
    max_positions: int = 128

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @model_validator(mode="after")
    def heads_divide_width(self):
        if min(self.dim, self.layers, self.heads, self.max_positions) <= 0:
            raise ValueError("dim, layers, heads and max_positions must be positive")
        if self.dim % self.heads:
            raise ValueError(f"dim={self.dim} is not divisible by heads={self.heads}")
        return self


class ModelConfig(BaseModel):
    encoder: NetConfig = Field(default_factory=lambda: NetConfig(dim=64, layers=2, heads=4))
    llm: NetConfig = Field(default_factory=lambda: NetConfig(dim=96, layers=4, heads=4))
    mapping_variant: MappingVariant = MappingVariant.MLP2

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"


class StageConfig(BaseModel):
    kind: StageKind
    lr: float = 1e-3
    batch_size: int = 32
    max_length: int = 128
    epochs: int = 3
    seed: int = 0
    datasets: list[str] = Field(default_factory=list)
    train_encoder: bool = False
    train_llm: bool = False
    max_steps: int | None = None

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("lr")
    def lr_is_positive(cls, value):
        if value <= 0:
            raise ValueError(f"lr must be positive, got {value}")
        return value

    @field_validator("batch_size", "max_length", "epochs")
    def is_positive(cls, value):
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value

    @field_validator("datasets")
    def known_datasets(cls, value):
        unknown = sorted(set(value) - set(DATASETS))
        if unknown:
            raise ValueError(f"unknown datasets {unknown}, expected names from {list(DATASETS)}")
        return value

    @model_validator(mode="after")
    def bridge_stages_keep_backbones_frozen(self):
        if self.kind in BRIDGE_STAGES and (self.train_encoder or self.train_llm):
            raise ValueError(
                f"stage '{self.kind.value}' trains only the bridge; the encoder and the LLM "
                "must stay frozen"
            )
        if self.max_steps is not None and self.max_steps <= 0:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        return self


def _stage(kind: StageKind, **kwargs: Any) -> StageConfig:
    return StageConfig(kind=kind, **kwargs)


class StagesConfig(BaseModel):
    lm_pretrain: StageConfig = Field(
        default_factory=lambda: _stage(
            StageKind.LM_PRETRAIN, lr=3e-4, epochs=4, datasets=["lm_pretrain"], train_llm=True
        )
    )
    task_finetune: StageConfig = Field(
        default_factory=lambda: _stage(
            StageKind.TASK_FINETUNE, lr=3e-4, epochs=6, datasets=["english_tasks"], train_llm=True
        )
    )
    encoder_pretrain: StageConfig = Field(
        default_factory=lambda: _stage(
            StageKind.ENCODER_PRETRAIN,
            lr=3e-4,
            epochs=4,
            datasets=["encoder_pairs"],
            train_encoder=True,
        )
    )
    mapping: StageConfig = Field(
        default_factory=lambda: _stage(StageKind.MAPPING, datasets=["mapping_pairs"])
    )
    augmentation: StageConfig = Field(
        default_factory=lambda: _stage(StageKind.AUGMENTATION, datasets=["query_translation"])
    )
    multireason_sft: StageConfig = Field(
        default_factory=lambda: _stage(
            StageKind.MULTIREASON_SFT,
            lr=3e-4,
            datasets=["english_tasks", "query_translation"],
            train_llm=True,
        )
    )

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @model_validator(mode="before")
    def fill_stage_defaults(cls, values):
        if isinstance(values, dict):
            for name, stage in values.items():
                if not isinstance(stage, dict):
                    continue
                stage.setdefault("kind", name.replace("_", "-"))
                if name in cls.model_fields:
                    default = cls.model_fields[name].default_factory()
                    stage.setdefault("datasets", default.datasets)
        return values

    @model_validator(mode="after")
    def kinds_match_slots(self):
        for name in type(self).model_fields:
            stage = getattr(self, name)
            if stage.kind.value != name.replace("_", "-"):
                raise ValueError(f"stage '{name}' has kind '{stage.kind.value}'")
        return self

    @model_validator(mode="after")
    def datasets_fit_stages(self):
        for name in type(self).model_fields:
            stage = getattr(self, name)
            allowed = STAGE_DATASETS[stage.kind]
            if not stage.datasets:
                raise ValueError(
                    f"stage '{name}' needs at least one dataset from {list(allowed)}"
                )
            foreign = sorted(set(stage.datasets) - set(allowed))
            if foreign:
                raise ValueError(
                    f"stage '{name}' cannot train on {foreign}, "
                    f"expected names from {list(allowed)}"
                )
        return self

    def of(self, kind: StageKind) -> StageConfig:
        return getattr(self, kind.value.replace("-", "_"))


class EvaluationConfig(BaseModel):
    max_new_tokens: int = 34
    batch_size: int = 64

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("max_new_tokens", "batch_size")
    def is_positive(cls, value):
        if value <= 0:
            raise ValueError(f"must be positive, got {value}")
        return value


class ExperimentConfig(BaseModel):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "mindlab"
    world: WorldConfig = Field(default_factory=WorldConfig)
    quotas: QuotaConfig = Field(default_factory=QuotaConfig)
    tasks: TaskConfig = Field(default_factory=TaskConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    stages: StagesConfig = Field(default_factory=StagesConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    variants: list[VariantId] = Field(default_factory=lambda: list(VariantId))
    seeds: list[int] = Field(default_factory=lambda: [1, 2, 3])
    base_seed: int = 0
    output_root: Path = Path("runs")
    workers: int = 1

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"

    @field_validator("variants")
    def unique_variants(cls, value):
        if not value:
            raise ValueError("at least one variant is required")
        return list(dict.fromkeys(value))

    @field_validator("seeds")
    def unique_seeds(cls, value):
        if not value:
            raise ValueError("at least one seed is required")
        if len(set(value)) != len(value):
            raise ValueError(f"seeds must be unique, got {value}")
        return value

    @field_validator("workers")
    def workers_positive(cls, value):
        if value <= 0:
            raise ValueError(f"workers must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def training_stages_have_data(self):
        """Every stage the selected variants run, apart from augmentation, needs training data."""
        kinds = set(BASE_STAGES).union(*(VARIANT_STAGES[variant] for variant in self.variants))
        kinds.discard(StageKind.AUGMENTATION)
        for kind in StageKind:
            if kind not in kinds:
                continue
            datasets = self.stages.of(kind).datasets
            if all(self.dataset_is_empty(name) for name in datasets):
                raise ValueError(
                    f"stage '{kind.value}' would train on empty datasets {datasets}; raise their "
                    "quotas or drop the variants that need the stage"
                )
        return self

    def dataset_is_empty(self, name: str) -> bool:
        """Whether the quotas leave the named training dataset without examples."""
        quotas = self.quotas
        has_foreign = len(self.world.languages) > 1
        sizes = {
            "lm_pretrain": quotas.lm_pretrain_english,
            "encoder_pairs": quotas.encoder_pairs_per_language,
            "mapping_pairs": quotas.mapping_pairs_per_language if has_foreign else 0,
            "english_tasks": quotas.english_tasks,
            "query_translation": quotas.query_translation_per_language if has_foreign else 0,
        }
        return sizes[name] == 0

    def normalized(self) -> dict[str, Any]:
        """Result-relevant fields; where outputs go and how many workers run them is excluded."""
        return self.model_dump(mode="json", exclude={"output_root", "workers"})

    def fingerprint(self) -> str:
        return stable_hash(self.normalized())

    def base_fingerprint(self) -> str:
        """Hash of what the frozen base models and their corpora depend on."""
        data = self.model_dump(mode="json")
        return stable_hash(
            {
                "schema_version": data["schema_version"],
                "world": data["world"],
                "quotas": {
                    key: value
                    for key, value in data["quotas"].items()
                    if key not in ("query_translation_per_language", "mapping_pairs_per_language")
                },
                "tasks": data["tasks"],
                "model": {"encoder": data["model"]["encoder"], "llm": data["model"]["llm"]},
                "stages": {
                    key: data["stages"][key]
                    for key in ("lm_pretrain", "task_finetune", "encoder_pretrain")
                },
                "base_seed": data["base_seed"],
            }
        )

    def with_overrides(self, **updates: Any) -> "ExperimentConfig":
        """Re-validated copy with ``updates`` applied; ``None`` values are ignored."""
        data = self.model_dump(mode="json")
        data.update({key: value for key, value in updates.items() if value is not None})
        return validate_config(data)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def validate_config(data: Any) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"Config must be a mapping, got {type(data).__name__}")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"Unsupported config schema_version {version}, expected {SCHEMA_VERSION}"
        )
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {_format_validation_error(e)}") from e


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file '{path}' does not exist")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file '{path}' is not valid YAML: {e}") from e
    return validate_config(data or {})
