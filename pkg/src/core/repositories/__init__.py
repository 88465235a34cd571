from src.core.repositories.base import BaseRepository, sha256_file
from src.core.repositories.checkpoint import CheckpointRepository
from src.core.repositories.grids import ImageRepository, TokenGridRepository
from src.core.repositories.manifest import ManifestRepository, RunManifest
from src.core.repositories.palette import PaletteRepository
from src.core.repositories.reports import CsvRepository

__all__ = [
    "BaseRepository",
    "CheckpointRepository",
    "CsvRepository",
    "ImageRepository",
    "ManifestRepository",
    "PaletteRepository",
    "RunManifest",
    "TokenGridRepository",
    "sha256_file",
]

checkpoints = CheckpointRepository()
csvs = CsvRepository()
images = ImageRepository()
manifests = ManifestRepository()
palettes = PaletteRepository()
token_grids = TokenGridRepository()
