"""Run directory and cache layout.

::

    <output_root>/<fingerprint>/
        config.yml  seeds.json  audit.jsonl
        checkpoints/<variant>-<seed>/<stage>.mmlb
        logs/<variant>-<seed>/<stage>.jsonl
        metrics/<variant>-<seed>.json
        report/accuracy.csv  report/metrics.json  report/projection.csv
    <cache>/base-<base fingerprint>/
        llm.mmlb  encoder.mmlb  translator.mmlb  logs/<stage>.jsonl
"""

from dataclasses import dataclass
import os
from pathlib import Path

import yaml

from mindmerger_lab.config.experiment import ExperimentConfig
from mindmerger_lab.core import FingerprintCollisionError
from mindmerger_lab.utils import canonical_json, write_text_atomic


CACHE_ENV = "MINDLAB_CACHE_DIR"
CONFIG_FILE = "config.yml"
SEEDS_FILE = "seeds.json"


def resolve_cache_dir(output_root: Path, cache: Path | None = None) -> Path:
    """``--cache`` flag, then ``MINDLAB_CACHE_DIR``, then ``<output_root>/.cache``."""
    if cache is not None:
        return Path(cache)
    env_value = os.getenv(CACHE_ENV)
    if env_value:
        return Path(env_value)
    return Path(output_root) / ".cache"


@dataclass(frozen=True)
class RunLayout:
    root: Path

    @property
    def config(self) -> Path:
        return self.root / CONFIG_FILE

    @property
    def seeds(self) -> Path:
        return self.root / SEEDS_FILE

    @property
    def audit(self) -> Path:
        return self.root / "audit.jsonl"

    @property
    def metrics_dir(self) -> Path:
        return self.root / "metrics"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    def metrics_file(self, variant: str, seed: int) -> Path:
        return self.metrics_dir / f"{variant}-{seed}.json"

    def checkpoint(self, variant: str, seed: int, stage: str) -> Path:
        return self.root / "checkpoints" / f"{variant}-{seed}" / f"{stage}.mmlb"

    def training_log(self, variant: str, seed: int, stage: str) -> Path:
        return self.root / "logs" / f"{variant}-{seed}" / f"{stage}.jsonl"


@dataclass(frozen=True)
class BaseLayout:
    root: Path

    @property
    def llm(self) -> Path:
        return self.root / "llm.mmlb"

    @property
    def encoder(self) -> Path:
        return self.root / "encoder.mmlb"

    @property
    def translator(self) -> Path:
        return self.root / "translator.mmlb"

    def training_log(self, stage: str) -> Path:
        return self.root / "logs" / f"{stage}.jsonl"

    def is_complete(self) -> bool:
        return all(path.is_file() for path in (self.llm, self.encoder, self.translator))


def base_layout(cache_dir: Path, config: ExperimentConfig) -> BaseLayout:
    return BaseLayout(Path(cache_dir) / f"base-{config.base_fingerprint()}")


def snapshot_text(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.normalized(), sort_keys=True)


def prepare_run_dir(config: ExperimentConfig, output_root: Path | None = None) -> RunLayout:
    """Create (or reopen) the run directory named by the config fingerprint.

    A directory whose stored config differs from ``config`` is a fingerprint collision.
    """
    root = Path(output_root if output_root is not None else config.output_root)
    layout = RunLayout(root / config.fingerprint())
    snapshot = snapshot_text(config)
    if layout.config.is_file():
        stored = yaml.safe_load(layout.config.read_text(encoding="utf-8"))
        if stored != yaml.safe_load(snapshot):
            raise FingerprintCollisionError(
                f"Run directory '{layout.root}' holds a different config with the same fingerprint"
            )
    layout.root.mkdir(parents=True, exist_ok=True)
    write_text_atomic(layout.config, snapshot)
    write_text_atomic(layout.seeds, canonical_json(config.seeds) + "\n")
    return layout
