import argparse
from pathlib import Path

from src.cli.router import Router, arg
from src.cli.utils import finish, new_manifest
from src.core import repositories
from src.engine.palette import fit_palette

router = Router()


@router.command(
    "fit-palette",
    arg("--images", required=True, help="directory of .ppm images"),
    arg("--k", type=int, default=512),
    arg("--seed", type=int, default=0),
    arg("--max-iters", type=int, default=100),
    arg("--out", required=True, help="palette file to write"),
    help="fit a k-means color palette on a directory of images",
)
async def fit_palette_command(args: argparse.Namespace) -> int:
    images = [grid for _, grid in repositories.images.read_dir(args.images)]
    palette = fit_palette(images, args.k, seed=args.seed, max_iters=args.max_iters)

    out = Path(args.out)
    repositories.palettes.write(out, palette)
    manifest = new_manifest(args, {"k": args.k, "max_iters": args.max_iters}, images=args.images)
    finish(manifest, out.parent, f"{out.stem}.manifest.json", palette=out)
    return 0
