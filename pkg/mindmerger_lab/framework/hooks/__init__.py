from .mindlab_hooks import MindLabHooks
from .stage_audit_row import StageAuditRow


__all__ = ["MindLabHooks", "StageAuditRow"]
