import pytest

from mindmerger_lab.config.experiment import ExperimentConfig, validate_config
from mindmerger_lab.core import MappingVariant, VariantId
from mindmerger_lab.evalkit.accuracy import MetricsRecord, aggregate_groups
from mindmerger_lab.nets.bridge import init_bridge
from mindmerger_lab.nets.encoder import init_encoder
from mindmerger_lab.nets.lm import init_lm
from mindmerger_lab.pipeline.base import train_base_models
from mindmerger_lab.synthlang.corpora import build_corpora
from mindmerger_lab.tensorcore.rng import rng_stream


TINY_VOCAB = 91


def tiny_config_data() -> dict:
    """A full config dump shrunk to a few seconds of work."""
    data = ExperimentConfig().model_dump(mode="json")
    data["name"] = "tiny"
    data["world"]["content_vocab_size"] = TINY_VOCAB
    data["world"]["languages"] = [
        {"id": "en", "tier": "english", "seed": None},
        {"id": "hi1", "tier": "high", "seed": None},
        {"id": "lo1", "tier": "low", "seed": None},
    ]
    data["quotas"].update(
        {
            "lm_pretrain_english": 24,
            "high_tier_fraction": 0.5,
            "encoder_pairs_per_language": 8,
            "mapping_pairs_per_language": 6,
            "english_tasks": 12,
            "query_translation_per_language": 6,
            "eval_per_language": 4,
            "ood_eval_per_language": 2,
            "translation_heldout_per_language": 3,
            "alignment_pool_size": 4,
        }
    )
    data["model"]["encoder"] = {"dim": 16, "layers": 1, "heads": 2, "max_positions": 32}
    data["model"]["llm"] = {"dim": 16, "layers": 1, "heads": 2, "max_positions": 64}
    for stage in data["stages"].values():
        stage.update({"epochs": 1, "batch_size": 8, "max_steps": 2})
    data["evaluation"] = {"max_new_tokens": 4, "batch_size": 8}
    data["variants"] = ["full", "no_augmentation_stage", "monoreason"]
    data["seeds"] = [1]
    return data


def metrics_record(
    variant: VariantId, seed: int, accuracy: dict[str, float], low_tier: tuple[str, ...] = ("lo1",)
) -> MetricsRecord:
    record = MetricsRecord(
        variant=variant,
        seed=seed,
        languages=list(accuracy),
        accuracy=accuracy,
        counts={lang: 4 for lang in accuracy},
    )
    return aggregate_groups(record, low_tier)


@pytest.fixture(scope="session")
def tiny_config():
    return validate_config(tiny_config_data())


@pytest.fixture(scope="session")
def tiny_bundle(tiny_config):
    return build_corpora(tiny_config, rng_stream(tiny_config.world.seed))


@pytest.fixture(scope="session")
def tiny_base(tiny_config, tiny_bundle):
    return train_base_models(tiny_config, tiny_bundle)


@pytest.fixture(scope="function")
def tiny_encoder():
    return init_encoder(12, 8, 1, 2, 16, rng_stream(0).fork("encoder"))


@pytest.fixture(scope="function")
def tiny_lm():
    return init_lm(14, 8, 1, 2, 24, rng_stream(0).fork("llm"))


@pytest.fixture(scope="function")
def tiny_bridge(tiny_lm):
    return init_bridge(MappingVariant.MLP2, 8, 8, tiny_lm, rng_stream(0).fork("bridge"))


@pytest.fixture(scope="function")
def frozen_backbones(tiny_encoder, tiny_lm):
    tiny_encoder.params.freeze()
    tiny_lm.params.freeze()
    return tiny_encoder, tiny_lm
