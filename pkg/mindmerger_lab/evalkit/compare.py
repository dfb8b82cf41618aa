from collections.abc import Sequence
import json
from pathlib import Path

import numpy as np
import pandas as pd

from mindmerger_lab.core import RunComparisonError, VariantId
from mindmerger_lab.evalkit.accuracy import MetricsRecord
from mindmerger_lab.evalkit.report import AGGREGATES


METRICS_DIR = "metrics"
DELTA_COLUMNS = ["run", "variant", "metric", "baseline", "value", "delta", "positive", "negative", "ties"]


def metrics_path(run_dir: Path, record: MetricsRecord) -> Path:
    return Path(run_dir) / METRICS_DIR / f"{record.variant.value}-{record.seed}.json"


def load_run_metrics(run_dir: Path) -> list[MetricsRecord]:
    """Every metrics record of a run, ordered by (variant, seed)."""
    paths = sorted((Path(run_dir) / METRICS_DIR).glob("*.json"))
    if not paths:
        raise RunComparisonError(f"Run directory '{run_dir}' has no metrics files")
    records = [
        MetricsRecord.model_validate(json.loads(path.read_text(encoding="utf-8"))) for path in paths
    ]
    return sorted(records, key=lambda record: (record.variant.value, record.seed))


def _cells(record: MetricsRecord) -> dict[str, float | None]:
    cells: dict[str, float | None] = {lang: record.accuracy[lang] for lang in record.languages}
    cells.update({"Lrl": record.lrl, "Hrl": record.hrl, "Avg": record.avg})
    return cells


def compare_records(
    baseline: Sequence[MetricsRecord], other: Sequence[MetricsRecord], run: str = "other"
) -> pd.DataFrame:
    """Seed-paired deltas ``other - baseline`` per (variant, metric) with per-seed sign counts.

    ``baseline``/``value``/``delta`` are means over the seeds both sides share.
    """
    base_languages = {tuple(sorted(record.languages)) for record in baseline}
    other_languages = {tuple(sorted(record.languages)) for record in other}
    if len(base_languages | other_languages) > 1:
        raise RunComparisonError(
            f"Runs cover different language sets: {sorted(base_languages | other_languages)}"
        )
    base_index = {(record.variant, record.seed): record for record in baseline}
    other_index = {(record.variant, record.seed): record for record in other}
    shared = sorted(set(base_index) & set(other_index), key=lambda key: (key[0].value, key[1]))
    if not shared:
        raise RunComparisonError("Runs share no (variant, seed) pair")

    rows = []
    variants = list(dict.fromkeys(variant for variant, _ in shared))
    for variant in variants:
        seeds = [seed for key_variant, seed in shared if key_variant is variant]
        first = base_index[(variant, seeds[0])]
        for metric in [*first.languages, *AGGREGATES]:
            pairs = [
                (_cells(base_index[(variant, seed)])[metric], _cells(other_index[(variant, seed)])[metric])
                for seed in seeds
            ]
            pairs = [(b, o) for b, o in pairs if b is not None and o is not None]
            if not pairs:
                continue
            base_values = np.array([b for b, _ in pairs], dtype=np.float64)
            other_values = np.array([o for _, o in pairs], dtype=np.float64)
            deltas = other_values - base_values
            rows.append(
                {
                    "run": run,
                    "variant": variant.value,
                    "metric": metric,
                    "baseline": float(base_values.mean()),
                    "value": float(other_values.mean()),
                    "delta": float(deltas.mean()),
                    "positive": int((deltas > 0).sum()),
                    "negative": int((deltas < 0).sum()),
                    "ties": int((deltas == 0).sum()),
                }
            )
    return pd.DataFrame(rows, columns=DELTA_COLUMNS)


def compare_runs(baseline_dir: Path, run_dirs: Sequence[Path]) -> pd.DataFrame:
    """Delta table of every run in ``run_dirs`` against ``baseline_dir``."""
    if not run_dirs:
        raise RunComparisonError("At least one run to compare against the baseline is required")
    baseline = load_run_metrics(baseline_dir)
    frames = [
        compare_records(baseline, load_run_metrics(run_dir), run=Path(run_dir).name)
        for run_dir in run_dirs
    ]
    return pd.concat(frames, ignore_index=True)


def compare_variants(
    records: Sequence[MetricsRecord], baseline_variant: VariantId, run: str = "variants"
) -> pd.DataFrame:
    """Deltas of every other variant of one run against ``baseline_variant``, paired by seed."""
    base = [record for record in records if record.variant is baseline_variant]
    if not base:
        raise RunComparisonError(f"Run has no records for variant '{baseline_variant.value}'")
    frames = []
    for variant in dict.fromkeys(record.variant for record in records):
        if variant is baseline_variant:
            continue
        relabeled = [
            record.model_copy(update={"variant": baseline_variant})
            for record in records
            if record.variant is variant
        ]
        frame = compare_records(base, relabeled, run=run)
        frame["variant"] = variant.value
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=DELTA_COLUMNS)
    return pd.concat(frames, ignore_index=True)
