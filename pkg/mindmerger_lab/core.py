from enum import Enum, IntEnum


class MindLabError(Exception):
    pass


class ConfigError(MindLabError):
    pass


class ShapeMismatchError(MindLabError):
    pass


class UnknownPrimitiveError(MindLabError):
    pass


class NonFiniteError(MindLabError):
    pass


class TapeError(MindLabError):
    pass


class NonDeterministicBuilderError(MindLabError):
    pass


class FreezingLeakError(MindLabError):
    pass


class OutOfVocabularyError(MindLabError):
    pass


class CompositionError(MindLabError):
    pass


class CorpusCapacityError(MindLabError):
    pass


class EmptyDatasetError(MindLabError):
    pass


class StageOrderError(MindLabError):
    pass


class CheckpointError(MindLabError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


class MissingCheckpointError(MindLabError):
    pass


class UnknownVariantError(MindLabError):
    pass


class TrainingDivergedError(MindLabError):
    pass


class FingerprintCollisionError(MindLabError):
    pass


class RunComparisonError(MindLabError):
    pass


class Tier(Enum):
    ENGLISH = "english"
    HIGH = "high"
    LOW = "low"


class TaskKind(Enum):
    MATH = "math"
    COMPARE = "compare"
    TRANSLATE = "translate"


class StageKind(Enum):
    LM_PRETRAIN = "lm-pretrain"
    TASK_FINETUNE = "task-finetune"
    ENCODER_PRETRAIN = "encoder-pretrain"
    MAPPING = "mapping"
    AUGMENTATION = "augmentation"
    MULTIREASON_SFT = "multireason-sft"


BRIDGE_STAGES = frozenset({StageKind.MAPPING, StageKind.AUGMENTATION})
BASE_STAGES = (StageKind.LM_PRETRAIN, StageKind.TASK_FINETUNE, StageKind.ENCODER_PRETRAIN)


class VariantId(Enum):
    FULL = "full"
    NO_MAPPING_STAGE = "no_mapping_stage"
    NO_AUGMENTATION_STAGE = "no_augmentation_stage"
    REPLACEMENT_ONLY = "replacement_only"
    MONOREASON = "monoreason"
    MULTIREASON_SFT = "multireason_sft"


# Stages each variant runs on top of the shared base models, in order.
VARIANT_STAGES: dict[VariantId, tuple[StageKind, ...]] = {
    VariantId.FULL: (StageKind.MAPPING, StageKind.AUGMENTATION),
    VariantId.NO_MAPPING_STAGE: (StageKind.AUGMENTATION,),
    VariantId.NO_AUGMENTATION_STAGE: (StageKind.MAPPING,),
    VariantId.REPLACEMENT_ONLY: (StageKind.MAPPING, StageKind.AUGMENTATION),
    VariantId.MONOREASON: (),
    VariantId.MULTIREASON_SFT: (StageKind.MULTIREASON_SFT,),
}


class ComposeMode(Enum):
    AUGMENTED = "augmented"
    REPLACEMENT = "replacement"


class Space(Enum):
    ENCODER = "encoder"
    LLM = "llm"


class Role(Enum):
    X = "X"
    X_MAPPED = "X~"
    T = "T"


class MappingVariant(Enum):
    LINEAR = "linear"
    MLP2 = "mlp2"
    MLP3 = "mlp3"


class ProbeLocation(Enum):
    ENCODER_EMBEDDING = "encoder-embedding"
    ENCODER_LAST = "encoder-last"
    MAPPING_OUTPUT = "mapping-output"
    LLM_EMBEDDING = "llm-embedding"
    LLM_LAST = "llm-last"
    MERGED_LLM_LAST = "merged-llm-last"


class SweepAxis(Enum):
    STAGE2_SIZE = "stage2-size"
    MAPPING_VARIANT = "mapping-variant"


class Event(Enum):
    STARTED = "STARTED"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"


class ExitCode(IntEnum):
    SUCCESS = 0
    VALIDATION_FAILURE = 3
    RUNTIME_FAILURE = 4
