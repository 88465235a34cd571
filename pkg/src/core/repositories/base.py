import hashlib
from abc import ABC
from pathlib import Path

from src.core.errors import FormatError


class BaseRepository(ABC):
    """Reads and writes one artifact format; relative paths resolve against ``root``."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None

    def resolve(self, path: str | Path) -> Path:
        path = Path(path)
        if self.root is not None and not path.is_absolute():
            path = self.root / path
        return path

    def _prepare(self, path: str | Path) -> Path:
        path = self.resolve(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _error(self, path: Path, message: str) -> FormatError:
        return FormatError(f"{path}: {message}")

    def _expect(self, condition: bool, path: Path, message: str):
        if not condition:
            raise self._error(path, message)

    def _read_text(self, path: Path, encoding: str = "ascii") -> str:
        try:
            return path.read_text(encoding=encoding)
        except UnicodeDecodeError:
            raise self._error(path, "not a text file") from None


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
