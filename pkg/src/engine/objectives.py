import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from loguru import logger

from src.core.config import TrainConfig, settings
from src.core.enums import Mode, PredictedPosition
from src.core.errors import NumericsError, ShapeError
from src.core.models import MaskGrid, Palette, TokenGrid
from src.engine import numerics as nx
from src.engine.maskgen import mask_maker
from src.engine.model import ModelConfig, ModelParams, forward, init
from src.engine.numerics import Tape, Tensor
from src.engine.sequence import (
    BatSequence,
    build_ar_sequence,
    build_mlm_sequence,
    build_sequence,
    permute,
)


def bat_loss(logits: Tensor, targets) -> Tensor:
    return nx.cross_entropy(logits, targets)


def sequence_loss(params: ModelParams, seq: BatSequence) -> Tensor:
    return nx.cross_entropy(forward(params, seq), seq.target_ids)


def ar_loss(params: ModelParams, tokens: TokenGrid, mask: MaskGrid) -> Tensor:
    return sequence_loss(params, build_ar_sequence(tokens, mask, params.config.mask_token_id))


def mlm_loss(params: ModelParams, tokens: TokenGrid, mask: MaskGrid) -> Tensor:
    return sequence_loss(params, build_mlm_sequence(tokens, mask, params.config.mask_token_id))


def bat_objective(
    params: ModelParams,
    tokens: TokenGrid,
    mask: MaskGrid,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> Tensor:
    return sequence_loss(
        params, permute(tokens, mask, params.config.mask_token_id, predicted_position)
    )


@dataclass
class OptState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, Tensor]) -> "OptState":
        return cls(
            m={n: np.zeros_like(t.data) for n, t in params.items()},
            v={n: np.zeros_like(t.data) for n, t in params.items()},
        )


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup then cosine decay to ``final_lr_frac`` of the peak."""
    if cfg.steps <= 0:
        return cfg.lr
    warmup = int(round(cfg.warmup_frac * cfg.steps))
    if step < warmup:
        return cfg.lr * (step + 1) / warmup
    progress = min(1.0, (step - warmup) / max(1, cfg.steps - warmup))
    cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
    return cfg.lr * (cfg.final_lr_frac + (1.0 - cfg.final_lr_frac) * cosine)


def _decays(name: str) -> bool:
    return ModelParams.decays(name)


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    norm = math.sqrt(
        sum(float((t.grad.astype(np.float64) ** 2).sum()) for t in params.values() if t.grad is not None)
    )
    if norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for t in params.values():
            if t.grad is not None:
                t.grad *= factor
    return norm


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray] | None,
    state: OptState,
    cfg: TrainConfig,
    lr: float | None = None,
) -> tuple[Mapping[str, Tensor], OptState]:
    """Decoupled-weight-decay Adam; updates ``params`` in place and returns them."""
    lr = cfg.lr if lr is None else lr
    if grads is None:
        grads = {n: t.grad for n, t in params.items() if t.grad is not None}
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            bad = int((~np.isfinite(g)).sum())
            raise NumericsError(f"non-finite gradient in '{name}' ({bad} entries) at step {state.step + 1}")

    state.step += 1
    t = state.step
    bias1 = 1.0 - cfg.beta1**t
    bias2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        if cfg.weight_decay and _decays(name):
            p.data *= 1.0 - lr * cfg.weight_decay
        update = (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)
        p.data -= (lr * update).astype(p.dtype)
    return params, state


@dataclass(frozen=True)
class LossPoint:
    step: int
    loss: float
    lr: float


@dataclass
class TrainResult:
    params: ModelParams
    state: OptState
    curve: list[LossPoint] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.curve[-1].loss if self.curve else float("nan")


def check_dataset(dataset: Sequence[TokenGrid], palette: Palette) -> tuple[int, int]:
    if not dataset:
        raise ShapeError("dataset is empty")
    height, width = dataset[0].height, dataset[0].width
    for i, grid in enumerate(dataset):
        if (grid.height, grid.width) != (height, width):
            raise ShapeError(f"dataset item {i} is {grid.height}x{grid.width}, expected {height}x{width}")
        if grid.flat().max() >= palette.k:
            raise ShapeError(
                f"dataset/palette mismatch: item {i} uses id {int(grid.flat().max())} but palette has {palette.k} colors"
            )
    return height, width


def _dtype():
    return np.float64 if settings.DTYPE == "float64" else np.float32


class Trainer:
    def __init__(self, cfg: TrainConfig, params: ModelParams):
        self.cfg = cfg
        self.params = params
        self.state = OptState.zeros_like(params)
        self.rng = np.random.default_rng(cfg.seed)
        self.make_mask = mask_maker(cfg.mask_policy)

    def sample_batch(self, dataset: Sequence[TokenGrid]) -> list[BatSequence]:
        cfg = self.cfg
        V = self.params.config.mask_token_id
        picks = self.rng.integers(0, len(dataset), size=cfg.batch_size)
        seeds = self.rng.integers(0, 2**31 - 1, size=cfg.batch_size)
        batch = []
        for i, seed in zip(picks, seeds):
            grid = dataset[int(i)]
            mask = self.make_mask(grid.height, grid.width, cfg.mask_lo, cfg.mask_hi, int(seed))
            batch.append(build_sequence(cfg.mode, grid, mask, V, cfg.predicted_position))
        return batch

    def step(self, dataset: Sequence[TokenGrid]) -> LossPoint:
        cfg = self.cfg
        lr = lr_at(self.state.step, cfg)
        batch = self.sample_batch(dataset)
        self.params.zero_grad()
        losses = []
        for seq in batch:
            with Tape() as tape:
                loss = sequence_loss(self.params, seq)
                tape.backward(loss, np.asarray(1.0 / len(batch)))
            losses.append(loss.item())
        if cfg.clip_norm is not None:
            clip_grad_norm(self.params, cfg.clip_norm)
        adamw_step(self.params, None, self.state, cfg, lr=lr)
        return LossPoint(step=self.state.step, loss=float(np.mean(losses)), lr=lr)


def train(
    dataset: Sequence[TokenGrid],
    palette: Palette,
    cfg: TrainConfig,
    params: ModelParams | None = None,
) -> TrainResult:
    height, width = check_dataset(dataset, palette)
    if params is None:
        config = ModelConfig.from_preset(cfg.preset, palette.k, height * width)
        params = init(config, cfg.seed, dtype=_dtype())
    elif params.config.vocab_size != palette.k:
        raise ShapeError(f"model V={params.config.vocab_size} does not match palette k={palette.k}")

    trainer = Trainer(cfg, params)
    curve: list[LossPoint] = []
    logger.info(
        f"training {cfg.mode.value} for {cfg.steps} steps on {len(dataset)} grids "
        f"({params.n_parameters()} parameters)"
    )
    for _ in range(cfg.steps):
        point = trainer.step(dataset)
        curve.append(point)
        if point.step % cfg.log_every == 0 or point.step == cfg.steps:
            logger.info(f"step={point.step} loss={point.loss:.4f} lr={point.lr:.2e}")
    return TrainResult(params=trainer.params, state=trainer.state, curve=curve)


def loss_for(mode: Mode, params: ModelParams, tokens: TokenGrid, mask: MaskGrid) -> Tensor:
    if mode is Mode.ar:
        return ar_loss(params, tokens, mask)
    if mode is Mode.mlm:
        return mlm_loss(params, tokens, mask)
    return bat_objective(params, tokens, mask)
