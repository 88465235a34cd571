import argparse
from pathlib import Path

import numpy as np

from src.cli.router import Router, arg
from src.cli.utils import finish, new_manifest
from src.core import repositories
from src.core.enums import DatasetKind, MaskBucket, MaskPolicy
from src.engine.datasets import make_dataset
from src.engine.maskgen import mask_maker

router = Router()


@router.command(
    "make-data",
    arg("--kind", choices=[k.value for k in DatasetKind], required=True),
    arg("--count", type=int, default=16),
    arg("--height", type=int, default=8),
    arg("--width", type=int, default=8),
    arg("--seed", type=int, default=0),
    arg("--out", required=True, help="output directory"),
    help="write a synthetic PPM corpus",
)
async def make_data_command(args: argparse.Namespace) -> int:
    corpus = make_dataset(DatasetKind(args.kind), args.count, args.height, args.width, args.seed)
    out = Path(args.out)
    outputs = {}
    for i, image in enumerate(corpus.images):
        path = out / f"img_{i:04d}.ppm"
        repositories.images.write_rgb(path, image)
        outputs[path.stem] = path

    labels = out / "labels.csv"
    repositories.csvs.write_rows(
        labels, ("name", "label"), ({"name": n, "label": l} for n, l in zip(outputs, corpus.labels))
    )
    manifest = new_manifest(
        args, {"kind": args.kind, "count": args.count, "height": args.height, "width": args.width}
    )
    finish(manifest, out, labels=labels, **outputs)
    return 0


@router.command(
    "make-masks",
    arg("--bucket", choices=[b.value for b in MaskBucket], default=MaskBucket.mid.value),
    arg("--lo", type=float, default=None, help="overrides the bucket lower bound"),
    arg("--hi", type=float, default=None, help="overrides the bucket upper bound"),
    arg("--policy", choices=[p.value for p in MaskPolicy], default=MaskPolicy.irregular.value),
    arg("--count", type=int, default=16),
    arg("--height", type=int, default=8),
    arg("--width", type=int, default=8),
    arg("--seed", type=int, default=0),
    arg("--out", required=True, help="output directory"),
    help="write PGM hole masks whose missing ratio lies in a bucket",
)
async def make_masks_command(args: argparse.Namespace) -> int:
    lo, hi = MaskBucket(args.bucket).bounds
    lo = lo if args.lo is None else args.lo
    hi = hi if args.hi is None else args.hi
    make = mask_maker(args.policy)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.count)
    out = Path(args.out)
    outputs = {}
    for i, seed in enumerate(seeds):
        path = out / f"mask_{i:04d}.pgm"
        repositories.images.write_mask(path, make(args.height, args.width, lo, hi, int(seed)))
        outputs[path.stem] = path
    manifest = new_manifest(
        args, {"lo": lo, "hi": hi, "policy": args.policy, "height": args.height, "width": args.width}
    )
    finish(manifest, out, **outputs)
    return 0
