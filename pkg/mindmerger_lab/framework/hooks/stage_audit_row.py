from datetime import datetime

from pydantic import BaseModel


class StageAuditRow(BaseModel):
    run_id: str
    pipeline_name: str
    node_name: str
    variant: str | None = None
    seed: int | None = None
    inputs: list[str] | None = None
    outputs: list[str] | None = None
    fingerprint: str | None = None
    kedro_version: str | None = None
    runner: str | None = None
    exception: str | None = None
    event: str
    event_time: datetime

    class Config:
        # raise an error if an unknown key is passed to the constructor
        extra = "forbid"
