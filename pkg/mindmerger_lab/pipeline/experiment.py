"""End-to-end orchestration: corpora, cached base models, variant pipelines and reports."""

from collections.abc import Sequence
from dataclasses import dataclass, field
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from mindmerger_lab.config.experiment import ExperimentConfig, validate_config
from mindmerger_lab.core import (
    ConfigError,
    MappingVariant,
    MissingCheckpointError,
    ProbeLocation,
    SweepAxis,
    VariantId,
)
from mindmerger_lab.evalkit.accuracy import MetricsRecord
from mindmerger_lab.evalkit.alignment import alignment_reports, probe_states
from mindmerger_lab.evalkit.report import AGGREGATES, export_report
from mindmerger_lab.pipeline.base import BaseModels, load_base_models, prepare_base_models
from mindmerger_lab.pipeline.rundir import RunLayout, base_layout, prepare_run_dir, resolve_cache_dir
from mindmerger_lab.pipeline.variants import (
    evaluate_variant,
    load_variant_state,
    run_variants,
    variant_spec,
)
from mindmerger_lab.synthlang.corpora import CorpusBundle, build_corpora
from mindmerger_lab.tensorcore.rng import rng_stream
from mindmerger_lab.utils import canonical_json, write_text_atomic


SWEEP_DIR = "sweeps"
SWEEP_COLUMNS = ["axis", "value", "variant", "seed", *AGGREGATES, "base_fingerprint", "run"]
PLAIN_PROJECTIONS = (
    ProbeLocation.ENCODER_LAST,
    ProbeLocation.LLM_EMBEDDING,
    ProbeLocation.LLM_LAST,
)

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    layout: RunLayout
    records: dict[tuple[VariantId, int], MetricsRecord]
    base_fingerprint: str
    reports: dict[str, Path] = field(default_factory=dict)

    def ordered(self) -> list[MetricsRecord]:
        return list(self.records.values())


def output_root_of(config: ExperimentConfig, output_root: Path | None = None) -> Path:
    return Path(output_root) if output_root is not None else Path(config.output_root)


def corpora_for(config: ExperimentConfig) -> CorpusBundle:
    return build_corpora(config, rng_stream(config.world.seed))


def write_metrics(layout: RunLayout, record: MetricsRecord) -> Path:
    path = layout.metrics_file(record.variant.value, record.seed)
    write_text_atomic(path, canonical_json(record.model_dump(mode="json")) + "\n")
    return path


def _projections(
    config: ExperimentConfig,
    bundle: CorpusBundle,
    base: BaseModels,
    layout: RunLayout,
) -> dict[str, dict[str, np.ndarray]]:
    """Pooled vectors of the base models, plus the mapping output of the first bridge variant."""
    batch_size = config.evaluation.batch_size
    pool, world = bundle.alignment_pool, bundle.world
    projections = {
        location.value: probe_states(location, pool, world, base.theta, base.phi, batch_size=batch_size)
        for location in PLAIN_PROJECTIONS
    }
    for variant in config.variants:
        spec = variant_spec(variant)
        if spec.uses_bridge:
            sigma, _ = load_variant_state(spec, config.seeds[0], layout, base)
            projections[ProbeLocation.MAPPING_OUTPUT.value] = probe_states(
                ProbeLocation.MAPPING_OUTPUT, pool, world, base.theta, base.phi, sigma, batch_size
            )
            break
    return projections


def run_experiment(
    config: ExperimentConfig,
    output_root: Path | None = None,
    cache: Path | None = None,
) -> ExperimentResult:
    """Build corpora, reuse or train the base models, run every (variant, seed) and export reports."""
    root = output_root_of(config, output_root)
    layout = prepare_run_dir(config, root)
    logger.info(f"Run directory '{layout.root}' (fingerprint {config.fingerprint()})")
    bundle = corpora_for(config)
    base = prepare_base_models(config, bundle, resolve_cache_dir(root, cache))

    specs = [variant_spec(variant) for variant in config.variants]
    records = run_variants(specs, config.seeds, config, bundle, base, layout, config.workers)
    for record in records.values():
        write_metrics(layout, record)

    base_alignment = alignment_reports(
        bundle.alignment_pool,
        bundle.world,
        base.theta,
        base.phi,
        batch_size=config.evaluation.batch_size,
    )
    reports = export_report(
        list(records.values()),
        layout.report_dir,
        alignment=base_alignment,
        projections=_projections(config, bundle, base, layout),
    )
    return ExperimentResult(layout, records, base.fingerprint, reports)


def _sweep_config(config: ExperimentConfig, axis: SweepAxis, value: str) -> ExperimentConfig:
    data = config.model_dump(mode="json")
    if axis is SweepAxis.STAGE2_SIZE:
        try:
            size = int(value)
        except ValueError as e:
            raise ConfigError(f"stage2-size values must be integers, got '{value}'") from e
        if size < 0:
            raise ConfigError(f"stage2-size values must not be negative, got {size}")
        data["quotas"]["query_translation_per_language"] = size
    else:
        valid = [variant.value for variant in MappingVariant]
        if value not in valid:
            raise ConfigError(f"Unknown mapping variant '{value}', expected one of {valid}")
        data["model"]["mapping_variant"] = value
    return validate_config(data)


def sweep(
    config: ExperimentConfig,
    axis: SweepAxis,
    values: Sequence[str],
    output_root: Path | None = None,
    cache: Path | None = None,
) -> tuple[pd.DataFrame, Path]:
    """One full run per axis value; returns the Lrl/Hrl/Avg table and where it was written.

    Every value is validated before the first run starts.
    """
    if not values:
        raise ConfigError(f"Sweep over '{axis.value}' needs at least one value")
    root = output_root_of(config, output_root)
    configs = [(value, _sweep_config(config, axis, value)) for value in values]
    rows = []
    for value, swept in configs:
        logger.info(f"Sweep {axis.value}={value}")
        result = run_experiment(swept, root, cache)
        for record in result.ordered():
            rows.append(
                [
                    axis.value,
                    value,
                    record.variant.value,
                    record.seed,
                    record.lrl,
                    record.hrl,
                    record.avg,
                    result.base_fingerprint,
                    result.layout.root.name,
                ]
            )
    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    path = root / SWEEP_DIR / f"{config.fingerprint()}-{axis.value}.csv"
    write_text_atomic(path, table.to_csv(index=False, lineterminator="\n"))
    return table, path


def eval_only(
    config: ExperimentConfig,
    output_root: Path | None = None,
    cache: Path | None = None,
    variants: Sequence[VariantId] | None = None,
    seeds: Sequence[int] | None = None,
) -> dict[tuple[VariantId, int], MetricsRecord]:
    """Re-evaluate the checkpoints a finished run left behind; nothing is trained.

    ``variants`` and ``seeds`` select a subset of the run without changing its fingerprint.
    """
    root = output_root_of(config, output_root)
    layout = prepare_run_dir(config, root)
    bundle = corpora_for(config)
    cached = base_layout(resolve_cache_dir(root, cache), config)
    if not cached.is_complete():
        raise MissingCheckpointError(f"No cached base models at '{cached.root}'")
    base = load_base_models(cached, bundle.world, config)
    records = {}
    for variant in variants if variants is not None else config.variants:
        spec = variant_spec(variant)
        for seed in seeds if seeds is not None else config.seeds:
            sigma, phi = load_variant_state(spec, seed, layout, base)
            records[(variant, seed)] = evaluate_variant(spec, seed, config, bundle, base, sigma, phi)
    return records


def stored_metrics_match(layout: RunLayout, record: MetricsRecord) -> bool:
    """Whether ``record`` serializes to exactly the bytes of the stored metrics file."""
    path = layout.metrics_file(record.variant.value, record.seed)
    if not path.is_file():
        return False
    expected = canonical_json(record.model_dump(mode="json")) + "\n"
    return path.read_text(encoding="utf-8") == expected
