import argparse

import numpy as np
from loguru import logger

from src.cli.router import Router, arg
from src.core.enums import Mode
from src.core.errors import NumericsError
from src.core.models import TokenGrid
from src.engine.maskgen import random_irregular_mask
from src.engine.model import ModelConfig, init
from src.engine.numerics import grad_check
from src.engine.objectives import loss_for

router = Router()

GRADCHECK_PRESETS = {
    "tiny": {"vocab_size": 5, "d_model": 8, "n_heads": 2, "n_layers": 1, "side": 3},
    "small": {"vocab_size": 8, "d_model": 16, "n_heads": 2, "n_layers": 2, "side": 4},
}


@router.command(
    "gradcheck",
    arg("--preset", choices=sorted(GRADCHECK_PRESETS), default="tiny"),
    arg("--mode", type=Mode.parse, default=Mode.bat),
    arg("--seed", type=int, default=0),
    arg("--tolerance", type=float, default=1e-4),
    arg("--max-per-tensor", type=int, default=None, help="check at most this many entries per tensor"),
    help="compare tape gradients with central differences in float64",
)
async def gradcheck_command(args: argparse.Namespace) -> int:
    dims = dict(GRADCHECK_PRESETS[args.preset])
    side = dims.pop("side")
    config = ModelConfig(max_positions=side * side, mlp_ratio=4, **dims)
    params = init(config, seed=args.seed, dtype=np.float64)

    rng = np.random.default_rng(args.seed)
    tokens = TokenGrid(rng.integers(0, config.vocab_size, size=(side, side)), config.vocab_size)
    mask = random_irregular_mask(side, side, 0.2, 0.6, args.seed)

    error = grad_check(
        lambda: loss_for(args.mode, params, tokens, mask),
        params,
        max_per_tensor=args.max_per_tensor,
        seed=args.seed,
    )
    logger.info(
        f"gradcheck {args.mode.value} preset={args.preset}: "
        f"{params.n_parameters()} parameters, max relative error {error:.3e}"
    )
    if not error < args.tolerance:
        raise NumericsError(f"gradient check failed: relative error {error:.3e} >= {args.tolerance:g}")
    return 0
