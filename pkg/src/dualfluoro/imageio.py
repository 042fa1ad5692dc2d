"""8-bit image files: binary PGM (written here, with header comments) and PNG."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, PngImagePlugin

from .errors import ParseError


def write_pgm(path: str | Path, image: np.ndarray, comments: Sequence[str] = ()) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM output needs a 2D uint8 array")
    h, w = img.shape
    head = "P5\n" + "".join(f"# {c}\n" for c in comments) + f"{w} {h}\n255\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def write_image(path: str | Path, image: np.ndarray, comments: Sequence[str] = ()) -> None:
    """Write a grayscale ``uint8`` (or RGB ``(h, w, 3)``) image by file suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        write_pgm(path, image, comments)
    elif suffix == ".png":
        info = PngImagePlugin.PngInfo()
        for i, c in enumerate(comments):
            info.add_text(f"comment{i}", c)
        Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, pnginfo=info)
    else:
        raise ValueError(f"unsupported image format {suffix!r}")


def read_image(path: str | Path) -> np.ndarray:
    """Read an image as a float grayscale array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=float)
    except OSError as exc:
        raise ParseError(f"cannot read image {path}: {exc}") from None
