from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from src.core.models import MaskGrid, RgbGrid, TokenGrid
from src.core.repositories.base import BaseRepository

TOKEN_HEADER = "BATTOK 1"


class ImageRepository(BaseRepository):
    """Binary PPM (P6) images and PGM (P5) masks, maxval 255."""

    def _open(self, path: Path, mode: str) -> np.ndarray:
        try:
            with Image.open(path) as image:
                self._expect(image.format == "PPM", path, f"expected a PPM/PGM file, got {image.format}")
                self._expect(image.mode == mode, path, f"expected pixel mode {mode}, got {image.mode}")
                return np.array(image, dtype=np.uint8)
        except UnidentifiedImageError:
            raise self._error(path, "unreadable image") from None

    def read_rgb(self, path) -> RgbGrid:
        return RgbGrid(self._open(self.resolve(path), "RGB"))

    def write_rgb(self, path, grid: RgbGrid):
        Image.fromarray(np.ascontiguousarray(grid.pixels)).save(self._prepare(path), format="PPM")

    def read_mask(self, path) -> MaskGrid:
        path = self.resolve(path)
        values = self._open(path, "L")
        self._expect(bool(np.isin(values, (0, 255)).all()), path, "mask values must be 0 (valid) or 255 (missing)")
        return MaskGrid(values == 255, allow_all_missing=True)

    def write_mask(self, path, mask: MaskGrid):
        values = np.where(mask.missing, 255, 0).astype(np.uint8)
        Image.fromarray(values).save(self._prepare(path), format="PPM")

    def read_dir(self, directory) -> list[tuple[str, RgbGrid]]:
        directory = self.resolve(directory)
        paths = sorted(directory.glob("*.ppm"))
        self._expect(bool(paths), directory, "no .ppm images found")
        return [(p.stem, self.read_rgb(p)) for p in paths]


class TokenGridRepository(BaseRepository):
    def dumps(self, grid: TokenGrid, k: int) -> str:
        lines = [f"{TOKEN_HEADER} {grid.height} {grid.width} {k}"]
        lines += [" ".join(str(int(v)) for v in row) for row in grid.tokens]
        return "\n".join(lines) + "\n"

    def write(self, path, grid: TokenGrid, k: int | None = None):
        k = k if k is not None else grid.k
        if k is None:
            raise ValueError("vocabulary size k is required to write a token grid")
        self._prepare(path).write_text(self.dumps(grid, k), encoding="ascii")

    def read(self, path) -> TokenGrid:
        path = self.resolve(path)
        lines = self._read_text(path).splitlines()
        self._expect(bool(lines), path, "empty token file")
        head = lines[0].split()
        self._expect(len(head) == 5 and " ".join(head[:2]) == TOKEN_HEADER, path, "not a BATTOK 1 file")
        try:
            h, w, k = (int(v) for v in head[2:])
            rows = [[int(v) for v in line.split()] for line in lines[1 : 1 + h]]
        except ValueError:
            raise self._error(path, "malformed token grid") from None
        self._expect(len(rows) == h and all(len(r) == w for r in rows), path, f"expected {h} rows of {w} ids")
        tokens = np.array(rows, dtype=np.int64)
        self._expect(bool((tokens >= 0).all() and (tokens < k).all()), path, f"ids must lie in [0, {k})")
        return TokenGrid(tokens, k)
