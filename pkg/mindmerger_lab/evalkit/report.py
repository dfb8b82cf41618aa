"""Report files of a run: accuracy table, structured metrics and 2D projections."""

from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from mindmerger_lab.evalkit.accuracy import MetricsRecord
from mindmerger_lab.evalkit.alignment import AlignmentReport
from mindmerger_lab.utils import canonical_json, write_text_atomic


ACCURACY_TABLE = "accuracy.csv"
METRICS_FILE = "metrics.json"
PROJECTION_FILE = "projection.csv"
AGGREGATES = ("Lrl", "Hrl", "Avg")


def accuracy_table(records: Sequence[MetricsRecord]) -> pd.DataFrame:
    """One row per (variant, seed): language columns in config order, then Lrl, Hrl, Avg."""
    if not records:
        raise ValueError("At least one metrics record is required")
    languages = list(records[0].languages)
    rows = []
    for record in records:
        if record.languages != languages:
            raise ValueError(f"Record languages {record.languages} differ from {languages}")
        row = {"variant": record.variant.value, "seed": record.seed}
        row.update({lang: record.accuracy[lang] for lang in languages})
        row.update({"Lrl": record.lrl, "Hrl": record.hrl, "Avg": record.avg})
        rows.append(row)
    return pd.DataFrame(rows, columns=["variant", "seed", *languages, *AGGREGATES])


def read_accuracy_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"variant": str}, float_precision="round_trip")


def pca_projection(vectors: np.ndarray, components: int = 2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Principal-component coordinates of ``vectors`` with a fixed sign convention.

    Returns (coordinates, component axes, mean). Each axis is flipped so its largest-magnitude
    entry is positive, which makes the projection a pure function of the data.
    """
    data = np.asarray(vectors, dtype=np.float64)
    mean = data.mean(axis=0)
    centered = data - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:components].copy()
    for row in axes:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    if axes.shape[0] < components:
        axes = np.vstack([axes, np.zeros((components - axes.shape[0], data.shape[1]))])
    return centered @ axes.T, axes, mean


def projection_frame(vectors: Mapping[str, np.ndarray], location: str) -> pd.DataFrame:
    """Joint 2D projection of every language's pooled vectors at one probe location."""
    languages = list(vectors)
    stacked = np.concatenate([np.asarray(vectors[lang], dtype=np.float64) for lang in languages])
    coords, _, _ = pca_projection(stacked)
    labels = [lang for lang in languages for _ in range(len(vectors[lang]))]
    indices = [index for lang in languages for index in range(len(vectors[lang]))]
    return pd.DataFrame(
        {
            "location": location,
            "language": labels,
            "index": indices,
            "x": coords[:, 0],
            "y": coords[:, 1],
        }
    )


def export_report(
    records: Sequence[MetricsRecord],
    out_dir: Path,
    alignment: Sequence[AlignmentReport] = (),
    projections: Mapping[str, Mapping[str, np.ndarray]] | None = None,
) -> dict[str, Path]:
    """Write the accuracy table, the metrics file and (optionally) the projection table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = accuracy_table(records)
    paths = {"table": out_dir / ACCURACY_TABLE, "metrics": out_dir / METRICS_FILE}
    write_text_atomic(paths["table"], table.to_csv(index=False, lineterminator="\n"))
    metrics = {
        "schema_version": records[0].schema_version,
        "records": [record.model_dump(mode="json") for record in records],
        "alignment": [report.model_dump(mode="json") for report in alignment],
    }
    write_text_atomic(paths["metrics"], canonical_json(metrics) + "\n")
    if projections:
        frame = pd.concat(
            [projection_frame(vectors, location) for location, vectors in projections.items()],
            ignore_index=True,
        )
        paths["projection"] = out_dir / PROJECTION_FILE
        write_text_atomic(paths["projection"], frame.to_csv(index=False, lineterminator="\n"))
    return paths
