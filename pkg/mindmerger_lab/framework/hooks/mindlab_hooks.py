from datetime import datetime
import logging
from pathlib import Path
import threading
from typing import Any

from kedro.framework.hooks import hook_impl
from kedro.pipeline.node import Node
from ulid import ULID

from mindmerger_lab.core import Event
from mindmerger_lab.framework.hooks.stage_audit_row import StageAuditRow
from mindmerger_lab.utils import canonical_json, exception_to_str


AUDIT_FILE = "audit.jsonl"


class MindLabHooks:
    """Appends one audit row per node event of a variant pipeline to ``audit.jsonl``.

    Without an audit path the rows are only kept in ``rows``.
    """

    def __init__(self, audit_path: Path | None = None):
        self._audit_path = Path(audit_path) if audit_path is not None else None
        self._run_id = None
        self._run_params: dict[str, Any] = {}
        self._lock = threading.Lock()
        self.rows: list[StageAuditRow] = []

    @property
    def _logger(self) -> logging.Logger:
        return logging.getLogger(__name__)

    @hook_impl
    def before_pipeline_run(self, run_params: dict[str, Any]):
        self._run_id = run_params.get("run_id") or str(ULID())
        self._run_params = dict(run_params)
        self._logger.info(
            f"Starting pipeline '{self._pipeline_name}' (run {self._run_id}, "
            f"runner {run_params.get('runner')})"
        )

    @hook_impl
    def before_node_run(self, node: Node, inputs: dict[str, Any]):
        self._log_event(
            node=node.name,
            event=Event.STARTED,
            node_inputs=list(inputs.keys()) if inputs else None,
        )

    @hook_impl
    def after_node_run(self, node: Node, inputs: dict[str, Any], outputs: dict[str, Any]):
        self._log_event(
            node=node.name,
            event=Event.COMPLETED,
            node_inputs=list(inputs.keys()) if inputs else None,
            node_outputs=list(outputs.keys()) if outputs else None,
        )

    @hook_impl
    def on_node_error(self, error: Exception, node: Node, inputs: dict[str, Any]):
        self._logger.error(f"Node '{node.name}' failed: {exception_to_str(error)}")
        self._log_event(
            node=node.name,
            event=Event.FAILED,
            node_inputs=list(inputs.keys()) if inputs else None,
            exception=error,
        )

    @property
    def _pipeline_name(self) -> str:
        return self._run_params.get("pipeline_name") or "__default__"

    @staticmethod
    def _node_labels(node: str) -> tuple[str | None, int | None]:
        """Variant and seed encoded in a ``<variant>.s<seed>.<step>`` node name."""
        parts = node.split(".")
        if len(parts) < 3 or not parts[1].startswith("s") or not parts[1][1:].isdigit():
            return None, None
        return parts[0], int(parts[1][1:])

    def _log_event(
        self,
        node: str,
        event: Event,
        node_inputs: list[str] | None = None,
        node_outputs: list[str] | None = None,
        exception: Exception | None = None,
    ):
        """Logs an event.

        Args:
            node: The name of the node being executed.
            event: The event being logged.
            node_inputs: A list with the name of the input datasets of the node.
            node_outputs: A list with the name of the output datasets of the node.
            exception: If the node execution failed, the exception occurred.
        """
        variant, seed = self._node_labels(node)
        row = StageAuditRow(
            run_id=self._run_id or str(ULID()),
            pipeline_name=self._pipeline_name,
            node_name=node,
            variant=variant,
            seed=seed,
            inputs=node_inputs,
            outputs=node_outputs,
            fingerprint=self._run_params.get("fingerprint"),
            kedro_version=self._run_params.get("kedro_version"),
            runner=self._run_params.get("runner"),
            exception=exception_to_str(exception) if exception else None,
            event=event.value,
            event_time=datetime.now(),
        )
        with self._lock:
            self.rows.append(row)
            if self._audit_path is not None:
                self._audit_path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._audit_path, "a", encoding="utf-8") as file:
                    file.write(canonical_json(row.model_dump(mode="json")) + "\n")
