"""
Core utilities for the conference key agreement toolkit.

Framework code shared by every protocol: round loop, records, errors,
logging, image and file output. Domain logic lives in src/.
"""

from .base_protocol import BaseProtocol, SimulationConfig
from .errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    EstimationError,
    KeyLengthError,
    ModelError,
    QubitIndexError,
    SizeError,
    ToolkitError,
)
from .image_utils import ImageRenderer
from .logging_utils import configure_logging, get_logger
from .output_writer import OutputWriter, pack_bits, unpack_bits
from .schemas import BinaryImage, ErrorEstimate, RoundRecord, RoundType

__all__ = [
    "BaseProtocol",
    "SimulationConfig",
    "ToolkitError",
    "SizeError",
    "QubitIndexError",
    "ContractError",
    "ModelError",
    "EstimationError",
    "ConfigurationError",
    "DomainError",
    "KeyLengthError",
    "ImageRenderer",
    "configure_logging",
    "get_logger",
    "OutputWriter",
    "pack_bits",
    "unpack_bits",
    "BinaryImage",
    "ErrorEstimate",
    "RoundRecord",
    "RoundType",
]
