import argparse
from pathlib import Path
from typing import Any

from loguru import logger

from src.core import repositories
from src.core.errors import ShapeError
from src.core.models import Palette, TokenGrid
from src.core.repositories import RunManifest
from src.engine.palette import encode


def load_token_corpus(directory, palette: Palette) -> tuple[list[str], list[TokenGrid]]:
    named = repositories.images.read_dir(directory)
    shapes = {(g.height, g.width) for _, g in named}
    if len(shapes) != 1:
        raise ShapeError(f"{directory}: images have mixed sizes {sorted(shapes)}")
    logger.info(f"encoding {len(named)} images from {directory} with a {palette.k}-color palette")
    return [n for n, _ in named], [encode(g, palette) for _, g in named]


def new_manifest(args: argparse.Namespace, config: dict[str, Any] | None = None, /, **inputs) -> RunManifest:
    return RunManifest(
        subcommand=args.subcommand,
        argv=list(getattr(args, "argv", []) or []),
        config=config or {},
        seed=getattr(args, "seed", None),
        inputs={k: str(v) for k, v in inputs.items() if v is not None},
    )


def finish(manifest: RunManifest, directory: Path, filename: str | None = None, **outputs: Path) -> Path:
    manifest.record_outputs(**outputs)
    path = repositories.manifests.write(directory, manifest, filename)
    logger.info(f"wrote {len(outputs)} artifact(s); manifest at {path}")
    return path
