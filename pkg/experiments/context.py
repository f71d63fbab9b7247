"""
Shared state handed from stage to stage within one run.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from models.config_models import ExperimentConfig
from spectral.fourier_core import Lattice, PeriodicField


@dataclass
class RunContext:
    config: ExperimentConfig
    lattice: Optional[Lattice] = None
    A: Optional[PeriodicField] = None
    V: Optional[PeriodicField] = None
    state: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def workers(self) -> Optional[int]:
        return self.config.workers

    @property
    def direction(self):
        return tuple(self.config.quasimomentum.direction(self.config.lattice.d))
