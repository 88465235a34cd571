import argparse
from pathlib import Path

from src.cli.router import Router, arg
from src.cli.utils import finish, load_token_corpus, new_manifest
from src.core import repositories
from src.core.config import build_train_config, dump_train_config, load_train_config
from src.core.enums import MaskPolicy, Mode
from src.engine.objectives import train

router = Router()

FLAG_KEYS = {
    "mode": "mode",
    "preset": "preset",
    "steps": "steps",
    "batch": "batch_size",
    "lr": "lr",
    "seed": "seed",
    "mask_lo": "mask_lo",
    "mask_hi": "mask_hi",
    "mask_policy": "mask_policy",
}


def resolve_config(args: argparse.Namespace):
    overrides = {key: getattr(args, flag) for flag, key in FLAG_KEYS.items()}
    if args.config:
        return load_train_config(args.config, **overrides)
    return build_train_config({k: v for k, v in overrides.items() if v is not None})


@router.command(
    "train",
    arg("--config", default=None, help="key = value training config"),
    arg("--data", required=True, help="directory of .ppm images"),
    arg("--palette", required=True),
    arg("--out", required=True, help="output directory"),
    arg("--mode", type=Mode.parse, default=None),
    arg("--preset", default=None),
    arg("--steps", type=int, default=None),
    arg("--batch", type=int, default=None),
    arg("--lr", type=float, default=None),
    arg("--seed", type=int, default=None),
    arg("--mask-lo", type=float, default=None),
    arg("--mask-hi", type=float, default=None),
    arg("--mask-policy", choices=[p.value for p in MaskPolicy], default=None),
    help="train a model under the AR, MLM or BAT objective",
)
async def train_command(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    palette = repositories.palettes.read(args.palette)
    _, dataset = load_token_corpus(args.data, palette)

    result = train(dataset, palette, cfg)

    out = Path(args.out)
    checkpoint = out / "model.batf"
    curve = out / "loss.csv"
    resolved = out / "train.cfg"
    repositories.checkpoints.write(checkpoint, result.params)
    repositories.csvs.write_loss_curve(curve, result.curve)
    resolved.write_text(dump_train_config(cfg), encoding="utf-8")

    args.seed = cfg.seed
    manifest = new_manifest(
        args, cfg.model_dump(mode="json"), data=args.data, palette=args.palette, config=args.config
    )
    finish(manifest, out, checkpoint=checkpoint, loss=curve, config=resolved)
    return 0
