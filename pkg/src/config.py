"""
╔══════════════════════════════════════════════════════════════════════════════╗
║                           RUN CONFIGURATION                                   ║
║                                                                               ║
║  ProtocolParams drives the round machine; RunConfig adds noise, code and      ║
║  key-rate settings for the full pipeline. Both inherit from                   ║
║  core.SimulationConfig.                                                       ║
╚══════════════════════════════════════════════════════════════════════════════╝
"""

from enum import Enum
from pathlib import Path

from pydantic import Field, field_validator

from core import SimulationConfig

from .postprocess import SUPPORTED_BLOCK_LENGTHS, CodeRate
from .quantum_core import NoiseKind, NoiseModel
from .settings import Configuration


class Scheduling(str, Enum):
    """How the biased coin picks round types."""
    PER_ROUND = "per_round"
    PER_RUN = "per_run"


class ProtocolParams(SimulationConfig):
    """
    Protocol parameters.

    Inherited from SimulationConfig:
        - total_rounds: int   # L
        - random_seed: int    # every random draw of a run derives from it
    """

    configuration: Configuration = Field(
        default=Configuration.X2,
        description="Network configuration: which party sits out and how it disentangles"
    )

    p: float = Field(
        default=0.1,
        gt=0.0,
        lt=1.0,
        description="Probability that a round (or run) is a verification round"
    )

    scheduling: Scheduling = Field(
        default=Scheduling.PER_ROUND,
        description="Draw the round type for every round or once per run"
    )

    run_length: int = Field(
        default=1000,
        gt=0,
        description="Rounds per run, used only with per_run scheduling"
    )


class RunConfig(ProtocolParams):
    """Everything one pipeline invocation needs; serializes to JSON."""

    # enough key-generation rounds at p = 0.1 for the bundled 128x96 image
    total_rounds: int = Field(default=14500, gt=0, description="Number of rounds L")

    # ══════════════════════════════════════════════════════════════════════════
    #  NOISE
    # ══════════════════════════════════════════════════════════════════════════

    noise_kind: NoiseKind = Field(default=NoiseKind.IDEAL)

    visibility: float = Field(
        default=1.0,
        ge=0.0,
        le=1.0,
        description="Weight of the ideal state in the white-noise mixture"
    )

    # ══════════════════════════════════════════════════════════════════════════
    #  ERROR CORRECTION
    # ══════════════════════════════════════════════════════════════════════════

    block_n: int = Field(default=16200, description="LDPC block length N")

    rate: CodeRate = Field(default=CodeRate.HALF, description="Code rate k/N")

    column_weight: int = Field(default=3, ge=2, le=8, description="Ones per column of H'")

    max_iters: int = Field(default=60, gt=0, description="Belief propagation iteration cap")

    code_seed: int = Field(default=0, ge=0, lt=2**64, description="Seed of the parity-check matrix")

    # ══════════════════════════════════════════════════════════════════════════
    #  KEY RATE / OUTPUT
    # ══════════════════════════════════════════════════════════════════════════

    eps_s: float = Field(default=1e-5, gt=0.0, lt=1.0, description="Security level")

    output_dir: Path = Field(default=Path("output"))

    @field_validator("block_n")
    @classmethod
    def _check_block_n(cls, value: int) -> int:
        if value not in SUPPORTED_BLOCK_LENGTHS:
            raise ValueError(f"block_n must be one of {SUPPORTED_BLOCK_LENGTHS}, got {value}")
        return value

    def noise_model(self) -> NoiseModel:
        return NoiseModel(kind=self.noise_kind, visibility=self.visibility)

    def protocol_params(self) -> ProtocolParams:
        return ProtocolParams(**{name: getattr(self, name) for name in ProtocolParams.model_fields})

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.model_validate_json(text)
