import numpy as np

from src.core.models import Palette
from src.core.repositories.base import BaseRepository

HEADER = "BATPAL 1"


class PaletteRepository(BaseRepository):
    def dumps(self, palette: Palette) -> str:
        colors = np.clip(np.rint(palette.centroids), 0, 255).astype(int)
        lines = [HEADER, str(palette.k)] + [f"{r} {g} {b}" for r, g, b in colors]
        return "\n".join(lines) + "\n"

    def write(self, path, palette: Palette):
        self._prepare(path).write_text(self.dumps(palette), encoding="ascii")

    def read(self, path) -> Palette:
        path = self.resolve(path)
        lines = self._read_text(path).splitlines()
        self._expect(len(lines) >= 2 and lines[0].strip() == HEADER, path, "not a BATPAL 1 file")
        try:
            k = int(lines[1])
            rows = [[int(v) for v in line.split()] for line in lines[2 : 2 + k]]
        except ValueError:
            raise self._error(path, "malformed palette entry") from None
        self._expect(k >= 1 and len(rows) == k, path, f"expected {k} colors, found {len(rows)}")
        self._expect(all(len(r) == 3 and all(0 <= v <= 255 for v in r) for r in rows), path, "colors must be 'r g b' in 0..255")
        return Palette(np.array(rows, dtype=np.float64))
