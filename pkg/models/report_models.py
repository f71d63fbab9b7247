"""
Pydantic models for run reports
"""

from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

__all__ = ['StageRecord', 'RunManifest']


class StageRecord(BaseModel):
    stage: str = Field(..., description="Stage name")
    status: str = Field("ok", pattern="^(ok|error)$")
    outputs: Dict[str, str] = Field(default_factory=dict, description="File name -> sha256")
    error: Optional[str] = Field(None, description="Error message when the stage failed")


class RunManifest(BaseModel):
    config: Dict[str, Any] = Field(..., description="Echo of the validated config")
    version: str = Field(..., description="Library version")
    timestamp: datetime = Field(default_factory=datetime.now)
    wall_time: float = Field(0.0, ge=0, description="Seconds spent in the run")
    stages: List[StageRecord] = Field(default_factory=list)
    exit_status: int = Field(0, description="Process exit status for this run")
