"""Base protocol class."""

from abc import ABC, abstractmethod
from typing import List

import numpy as np
from pydantic import BaseModel, Field

from .logging_utils import get_logger
from .schemas import RoundRecord

logger = get_logger(__name__)

PROGRESS_EVERY = 10_000


class SimulationConfig(BaseModel):
    """Simulation configuration."""
    total_rounds: int = Field(gt=0, description="Number of rounds L")
    random_seed: int = Field(default=0, ge=0, lt=2**64, description="Single source of randomness")


class BaseProtocol(ABC):
    """Base class for round-based protocol simulations. Implement run_round()."""

    def __init__(self, config: SimulationConfig):
        self.config = config
        self.rng = np.random.default_rng(config.random_seed)

    @abstractmethod
    def run_round(self, round_index: int) -> RoundRecord:
        """Simulate a single round. Implement this in your protocol."""

    def run_rounds(self) -> List[RoundRecord]:
        """Simulate all rounds in order."""
        records = []
        for i in range(self.config.total_rounds):
            records.append(self.run_round(i))
            if (i + 1) % PROGRESS_EVERY == 0:
                logger.debug("simulated %d/%d rounds", i + 1, self.config.total_rounds)
        return records
