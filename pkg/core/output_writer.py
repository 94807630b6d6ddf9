"""Output writer for run directories."""

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import ContractError
from .image_utils import ImageRenderer
from .logging_utils import get_logger
from .schemas import BinaryImage

logger = get_logger(__name__)


def pack_bits(bits: np.ndarray) -> bytes:
    """8 bits per byte, most significant bit first, last byte zero-padded."""
    bits = np.asarray(bits, dtype=np.uint8)
    if np.any(bits > 1):
        raise ContractError("bit strings hold 0/1 values only")
    return np.packbits(bits, bitorder="big").tobytes()


def unpack_bits(data: bytes, num_bits: int) -> np.ndarray:
    if num_bits > 8 * len(data):
        raise ContractError(f"{len(data)} bytes cannot hold {num_bits} bits")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=num_bits, bitorder="big")


class OutputWriter:
    """Writes run artifacts below a single output directory."""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def write_key(self, name: str, bits: np.ndarray) -> Path:
        target = self.path(name)
        target.write_bytes(pack_bits(bits))
        logger.debug("wrote %d bits to %s", len(bits), target)
        return target

    @staticmethod
    def read_key(path: Path, num_bits: int) -> np.ndarray:
        """Inverse of write_key; the bit length travels separately."""
        return unpack_bits(Path(path).read_bytes(), num_bits)

    def write_json(self, name: str, payload: Any) -> Path:
        # sorted keys and no timestamps keep files byte-identical per seed
        target = self.path(name)
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return target

    @staticmethod
    def read_json(path: Path) -> Any:
        return json.loads(Path(path).read_text())

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        target = self.path(name)
        with open(target, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return target

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        target.write_text(text)
        return target

    def write_image(self, name: str, image: BinaryImage, plain: bool = False) -> Path:
        return ImageRenderer.write_pbm(image, self.path(name), plain=plain)

    def write_png(self, name: str, image: Image.Image) -> Path:
        target = self.path(name)
        ImageRenderer.ensure_rgb(image).save(target, format="PNG")
        return target
