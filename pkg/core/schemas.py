"""Pydantic schemas for protocol records and images."""

import math
from enum import Enum
from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator


class RoundType(str, Enum):
    """The two measurement types of a protocol round."""
    KEYGEN = "keygen"
    VERIFICATION = "verification"


class RoundRecord(BaseModel):
    """Outcome of one round (one fourfold event)."""
    round_index: int = Field(ge=0)
    round_type: RoundType
    outcomes: Tuple[int, ...]  # +1/-1 per qubit, qubit 1 first
    np_outcome: int
    key_bits: Optional[Tuple[int, int, int]] = None  # (a, b, c) after bitflips
    success: bool

    class Config:
        frozen = True

    @field_validator("outcomes")
    @classmethod
    def _check_outcomes(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(o not in (1, -1) for o in value):
            raise ValueError(f"outcomes must be +1/-1, got {value}")
        return value

    @model_validator(mode="after")
    def _check_key_bits(self) -> "RoundRecord":
        has_bits = self.key_bits is not None
        if has_bits != (self.round_type is RoundType.KEYGEN):
            raise ValueError("key bits are carried by key-generation rounds only")
        if has_bits and any(b not in (0, 1) for b in self.key_bits):
            raise ValueError(f"key bits must be 0/1, got {self.key_bits}")
        return self


class ErrorEstimate(BaseModel):
    """Q parameters estimated from a transcript, with binomial standard errors."""
    q_keygen: float = Field(ge=0.0, le=1.0)
    q_keygen_ab: float = Field(ge=0.0, le=1.0)
    q_keygen_ac: float = Field(ge=0.0, le=1.0)
    q_keygen_bc: float = Field(ge=0.0, le=1.0, description="auxiliary B-C rate")
    q_verif: float = Field(ge=0.0, le=1.0)
    num_keygen: int = Field(ge=1)
    num_verif: int = Field(ge=1)
    std_keygen: float
    std_keygen_ab: float
    std_keygen_ac: float
    std_keygen_bc: float
    std_verif: float

    class Config:
        frozen = True

    @property
    def q_keygen_max(self) -> float:
        """max(Q_keygen^AB, Q_keygen^AC), the input to error correction."""
        return max(self.q_keygen_ab, self.q_keygen_ac)

    @property
    def std_keygen_max(self) -> float:
        if self.q_keygen_ab >= self.q_keygen_ac:
            return self.std_keygen_ab
        return self.std_keygen_ac

    @staticmethod
    def binomial_std(q: float, m: int) -> float:
        return math.sqrt(q * (1.0 - q) / m)


class BinaryImage(BaseModel):
    """Row-major bilevel image; pixel 1 is black as in PBM."""
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    pixels: Any  # np.ndarray of uint8, length width * height

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @field_validator("pixels")
    @classmethod
    def _check_pixels(cls, value: Any, info: ValidationInfo) -> np.ndarray:
        pixels = np.array(value, dtype=np.uint8).reshape(-1)
        expected = info.data.get("width", 0) * info.data.get("height", 0)
        if pixels.size != expected:
            raise ValueError(f"image has {pixels.size} pixels, expected {expected}")
        if np.any(pixels > 1):
            raise ValueError("pixels must be 0/1")
        pixels.flags.writeable = False
        return pixels

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    def as_grid(self) -> np.ndarray:
        """Pixels reshaped to (height, width)."""
        return self.pixels.reshape(self.height, self.width)

    def count_differences(self, other: "BinaryImage") -> int:
        if (self.width, self.height) != (other.width, other.height):
            raise ValueError("images differ in size")
        return int(np.count_nonzero(self.pixels != other.pixels))
