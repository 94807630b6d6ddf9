"""Image utilities: PBM read/write and the PNG comparison panel."""

from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from .errors import ContractError
from .schemas import BinaryImage

PathLike = Union[str, Path]

# netpbm asks for at most 70 characters per line in plain files
PLAIN_LINE_WIDTH = 64


class ImageRenderer:
    """Helper for bilevel image I/O and rendering."""

    def __init__(self, scale: int = 3, margin: int = 12, label_height: int = 16):
        self.scale = scale
        self.margin = margin
        self.label_height = label_height

    # ══════════════════════════════════════════════════════════════════════════
    #  PBM
    # ══════════════════════════════════════════════════════════════════════════

    @staticmethod
    def read_pbm(path: PathLike) -> BinaryImage:
        """Read a P1 or P4 file. Pillow maps black to False, so bits are inverted."""
        with Image.open(path) as img:
            if img.format != "PPM" or img.mode != "1":
                raise ContractError(f"{path} is not a PBM image (format {img.format}, mode {img.mode})")
            grid = ~np.array(img, dtype=bool)
        height, width = grid.shape
        return BinaryImage(width=width, height=height, pixels=grid.astype(np.uint8))

    @staticmethod
    def to_pil(image: BinaryImage) -> Image.Image:
        """Mode "1" Pillow image, black where the bit is 1."""
        gray = ((1 - image.as_grid()) * 255).astype(np.uint8)
        return Image.fromarray(gray, mode="L").convert("1", dither=Image.Dither.NONE)

    @classmethod
    def write_pbm(cls, image: BinaryImage, path: PathLike, plain: bool = False) -> Path:
        """Write P4 through Pillow, or P1 when plain is set."""
        path = Path(path)
        if not plain:
            cls.to_pil(image).save(path, format="PPM")
            return path

        # Pillow only writes the raw variant
        lines = ["P1", f"{image.width} {image.height}"]
        for row in image.as_grid():
            text = "".join("1" if bit else "0" for bit in row)
            lines.extend(text[i:i + PLAIN_LINE_WIDTH] for i in range(0, len(text), PLAIN_LINE_WIDTH))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
        return path

    # ══════════════════════════════════════════════════════════════════════════
    #  PANEL
    # ══════════════════════════════════════════════════════════════════════════

    def create_blank_image(self, size: Tuple[int, int],
                           bg_color: Tuple[int, int, int] = (255, 255, 255)) -> Image.Image:
        """Create blank RGB image."""
        return Image.new("RGB", size, bg_color)

    def draw_text(self, image: Image.Image, text: str, position: Tuple[int, int]) -> Image.Image:
        """Draw text on image."""
        draw = ImageDraw.Draw(image)
        draw.text(position, text, fill=(0, 0, 0))
        return image

    def render_panel(self, tiles: Sequence[Tuple[str, BinaryImage]]) -> Image.Image:
        """Lay labelled images out left to right, each scaled up by self.scale."""
        if not tiles:
            raise ContractError("panel needs at least one image")
        tile_w = max(img.width for _, img in tiles) * self.scale
        tile_h = max(img.height for _, img in tiles) * self.scale
        width = len(tiles) * (tile_w + self.margin) + self.margin
        height = tile_h + self.label_height + 2 * self.margin
        panel = self.create_blank_image((width, height))

        for i, (label, img) in enumerate(tiles):
            x = self.margin + i * (tile_w + self.margin)
            scaled = self.to_pil(img).resize(
                (img.width * self.scale, img.height * self.scale), Image.Resampling.NEAREST
            )
            panel.paste(self.ensure_rgb(scaled), (x, self.margin + self.label_height))
            self.draw_text(panel, label, (x, self.margin // 2))
        return panel

    @staticmethod
    def ensure_rgb(image: Image.Image) -> Image.Image:
        """Convert image to RGB."""
        return image.convert("RGB") if image.mode != "RGB" else image
