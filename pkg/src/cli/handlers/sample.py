import argparse
from pathlib import Path

from src.cli.router import Router, arg
from src.cli.utils import finish, new_manifest
from src.core import repositories
from src.core.config import SampleConfig
from src.core.enums import Mode, PredictedPosition
from src.core.errors import NothingToPredictError, ShapeError
from src.engine.palette import decode, encode
from src.engine.sampler import sample_diverse_async

router = Router()


@router.command(
    "sample",
    arg("--checkpoint", required=True),
    arg("--image", required=True, help="PPM image with holes"),
    arg("--mask", required=True, help="PGM mask, 255 marks missing pixels"),
    arg("--palette", required=True),
    arg("--n", type=int, default=1, help="number of diverse completions"),
    arg("--topk", type=int, default=50),
    arg("--temperature", type=float, default=1.0),
    arg("--seed", type=int, default=0),
    arg("--mode", type=Mode.parse, default=Mode.bat),
    arg("--gibbs-sweeps", type=int, default=2),
    arg(
        "--predicted-position",
        choices=[p.value for p in PredictedPosition],
        default=PredictedPosition.target.value,
        help="position ids of predicted slots, as the BAT model was trained",
    ),
    arg("--out", required=True, help="output directory"),
    help="complete the masked pixels of an image with a trained model",
)
async def sample_command(args: argparse.Namespace) -> int:
    params = repositories.checkpoints.read(args.checkpoint)
    palette = repositories.palettes.read(args.palette)
    image = repositories.images.read_rgb(args.image)
    mask = repositories.images.read_mask(args.mask)

    if (image.height, image.width) != (mask.height, mask.width):
        raise ShapeError(
            f"image is {image.height}x{image.width} but mask is {mask.height}x{mask.width}"
        )
    if palette.k != params.config.vocab_size:
        raise ShapeError(f"palette has k={palette.k} but the model was trained with V={params.config.vocab_size}")
    if mask.count == 0:
        raise NothingToPredictError("the mask marks no missing pixels")

    cfg = SampleConfig(
        top_k=args.topk,
        temperature=args.temperature,
        n_samples=args.n,
        seed=args.seed,
        gibbs_sweeps=args.gibbs_sweeps,
    )
    samples = await sample_diverse_async(
        params,
        encode(image, palette),
        mask,
        cfg,
        args.mode,
        predicted_position=PredictedPosition(args.predicted_position),
    )

    out = Path(args.out)
    stem = Path(args.image).stem
    outputs = {}
    for i, tokens in enumerate(samples):
        ppm = out / f"{stem}_s{i}.ppm"
        tok = out / f"{stem}_s{i}.tok"
        repositories.images.write_rgb(ppm, decode(tokens, palette))
        repositories.token_grids.write(tok, tokens, palette.k)
        outputs[f"{ppm.stem}_ppm"] = ppm
        outputs[f"{tok.stem}_tok"] = tok

    manifest = new_manifest(
        args,
        {
            **cfg.model_dump(mode="json"),
            "mode": args.mode.value,
            "predicted_position": args.predicted_position,
        },
        checkpoint=args.checkpoint,
        image=args.image,
        mask=args.mask,
        palette=args.palette,
    )
    finish(manifest, out, **outputs)
    return 0
