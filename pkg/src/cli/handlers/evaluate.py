import argparse
from pathlib import Path

from loguru import logger

from src.cli.router import Router, arg
from src.cli.utils import finish, load_token_corpus, new_manifest
from src.core import repositories
from src.core.config import AblationConfig, SampleConfig, TrainConfig, load_train_config
from src.core.enums import DatasetKind, MaskPolicy, Mode
from src.core.errors import ConfigError, ShapeError
from src.engine.datasets import reference_patterns
from src.engine.evaluation import EvalItem, ablate, summarize
from src.engine.palette import encode

router = Router()


@router.command(
    "eval",
    arg("--pred", nargs="+", required=True, help="predicted .tok grids for one hole"),
    arg("--truth", required=True, help="ground-truth PPM image"),
    arg("--mask", required=True),
    arg("--palette", required=True),
    arg("--label", default="pred"),
    arg("--out", required=True, help="report CSV"),
    help="score predicted completions against the ground truth",
)
async def eval_command(args: argparse.Namespace) -> int:
    palette = repositories.palettes.read(args.palette)
    truth = encode(repositories.images.read_rgb(args.truth), palette)
    mask = repositories.images.read_mask(args.mask)
    preds = [repositories.token_grids.read(p) for p in args.pred]
    for path, grid in zip(args.pred, preds):
        if grid.k != palette.k:
            raise ShapeError(f"{path}: token grid has k={grid.k}, palette has k={palette.k}")

    report = summarize(args.label, [(EvalItem(truth, mask), preds)], palette)
    out = Path(args.out)
    repositories.csvs.write_reports(out, [report])
    logger.info(f"{report.mode}: accuracy={report.accuracy:.4f} psnr={report.psnr:.2f}")

    manifest = new_manifest(args, {"label": args.label}, truth=args.truth, mask=args.mask, palette=args.palette)
    finish(manifest, out.parent, f"{out.stem}.manifest.json", report=out)
    return 0


def _budget(args: argparse.Namespace) -> TrainConfig | dict[Mode, TrainConfig]:
    per_mode = {Mode.ar: args.ar_config, Mode.mlm: args.mlm_config, Mode.bat: args.bat_config}
    if args.config and any(per_mode.values()):
        raise ConfigError("use either --config or the per-mode config flags, not both")
    if args.config:
        return load_train_config(args.config)
    if not all(per_mode.values()):
        raise ConfigError("ablation needs --config or all of --ar-config, --mlm-config and --bat-config")
    return {mode: load_train_config(path, mode=mode) for mode, path in per_mode.items()}


@router.command(
    "ablate",
    arg("--data", required=True, help="directory of .ppm images"),
    arg("--palette", required=True),
    arg("--held-out", type=int, default=4, help="trailing images kept for evaluation"),
    arg("--config", default=None, help="budget shared by all three modes"),
    arg("--ar-config", default=None),
    arg("--mlm-config", default=None),
    arg("--bat-config", default=None),
    arg("--mask-policy", choices=[p.value for p in MaskPolicy], default=MaskPolicy.irregular.value),
    arg("--topk", type=int, default=1),
    arg("--samples", type=int, default=4),
    arg("--gibbs-sweeps", type=int, default=1),
    arg("--patterns-kind", choices=[k.value for k in DatasetKind], default=None),
    arg("--out", required=True, help="report CSV"),
    help="train AR, MLM and BAT on equal budgets and compare them",
)
async def ablate_command(args: argparse.Namespace) -> int:
    budget = _budget(args)
    palette = repositories.palettes.read(args.palette)
    _, grids = load_token_corpus(args.data, palette)
    if not 0 < args.held_out < len(grids):
        raise ShapeError(f"--held-out must lie in [1, {len(grids) - 1}], got {args.held_out}")
    train_grids, held_out = grids[: -args.held_out], grids[-args.held_out :]

    cfg = AblationConfig(
        sample=SampleConfig(top_k=args.topk),
        gibbs_sweeps=args.gibbs_sweeps,
        n_eval_samples=args.samples,
        mask_policy=MaskPolicy(args.mask_policy),
    )
    patterns = None
    if args.patterns_kind:
        h, w = grids[0].height, grids[0].width
        patterns = [encode(p, palette) for p in reference_patterns(DatasetKind(args.patterns_kind), h, w)]

    reports = ablate(train_grids, held_out, palette, budget, cfg, patterns)
    out = Path(args.out)
    repositories.csvs.write_reports(out, reports)

    budgets = budget if isinstance(budget, dict) else {Mode.bat: budget}
    args.seed = next(iter(budgets.values())).seed
    manifest = new_manifest(
        args,
        {
            "budgets": {m.value: b.model_dump(mode="json") for m, b in budgets.items()},
            "ablation": cfg.model_dump(mode="json"),
        },
        data=args.data,
        palette=args.palette,
    )
    finish(manifest, out.parent, f"{out.stem}.manifest.json", report=out)
    return 0
