import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from loguru import logger

from src.core.config import AblationConfig, SampleConfig, TrainConfig
from src.core.enums import MaskPolicy, Mode, PredictedPosition
from src.core.errors import BudgetMismatchError, NothingToPredictError, ShapeError
from src.core.models import MaskGrid, Palette, RgbGrid, TokenGrid
from src.engine.maskgen import mask_maker
from src.engine.model import ModelParams
from src.engine.objectives import train
from src.engine.palette import decode
from src.engine.sampler import sample_diverse

REPORT_COLUMNS = ("mode", "accuracy", "l1", "psnr", "diversity", "coherence")


@dataclass(frozen=True)
class EvalReport:
    """Desk-scale metrics; diversity is a proxy for LPIPS between sample pairs."""

    mode: str
    accuracy: float
    l1: float
    psnr: float
    diversity: float
    coherence: float | None = None

    def as_row(self) -> dict[str, str]:
        return {
            "mode": self.mode,
            "accuracy": f"{self.accuracy:.6f}",
            "l1": f"{self.l1:.6f}",
            "psnr": "inf" if math.isinf(self.psnr) else f"{self.psnr:.6f}",
            "diversity": f"{self.diversity:.6f}",
            "coherence": "" if self.coherence is None else f"{self.coherence:.6f}",
        }


def _same_shape(a, b):
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(f"shape mismatch: {a.height}x{a.width} vs {b.height}x{b.width}")


def token_accuracy(pred: TokenGrid, truth: TokenGrid, mask: MaskGrid) -> float:
    _same_shape(pred, truth)
    mask.check_pair(pred)
    if mask.count == 0:
        raise NothingToPredictError("accuracy over an empty mask")
    hole = mask.missing
    return float((pred.tokens[hole] == truth.tokens[hole]).mean())


def _mse(a: RgbGrid, b: RgbGrid) -> float:
    _same_shape(a, b)
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float((diff**2).mean())


def pixel_l1(a: RgbGrid, b: RgbGrid) -> float:
    _same_shape(a, b)
    return float(np.abs(a.pixels.astype(np.float64) - b.pixels.astype(np.float64)).mean())


def psnr_from_mse(mse: float) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def psnr(a: RgbGrid, b: RgbGrid) -> float:
    """Peak signal-to-noise ratio in dB; identical images give ``math.inf``."""
    return psnr_from_mse(_mse(a, b))


def diversity(samples: Sequence[TokenGrid], mask: MaskGrid) -> float:
    if len(samples) < 2:
        raise ShapeError("diversity needs at least two samples")
    if mask.count == 0:
        raise NothingToPredictError("diversity over an empty mask")
    hole = mask.missing
    values = [s.tokens[hole] for s in samples]
    pairs = [float((a != b).mean()) for a, b in itertools.combinations(values, 2)]
    return float(np.mean(pairs))


def coherence_rate(samples: Sequence[TokenGrid], patterns: Sequence[TokenGrid]) -> float:
    """Fraction of samples equal to one of the global patterns."""
    if not samples:
        raise ShapeError("coherence needs at least one sample")
    hits = sum(any(s == p for p in patterns) for s in samples)
    return hits / len(samples)


@dataclass(frozen=True)
class EvalItem:
    truth: TokenGrid
    mask: MaskGrid


def eval_items(
    grids: Sequence[TokenGrid],
    seed: int,
    ratio_lo: float,
    ratio_hi: float,
    policy: MaskPolicy = MaskPolicy.irregular,
) -> list[EvalItem]:
    make = mask_maker(policy)
    seeds = np.random.SeedSequence(seed).generate_state(len(grids))
    return [
        EvalItem(g, make(g.height, g.width, ratio_lo, ratio_hi, int(s)))
        for g, s in zip(grids, seeds)
    ]


def summarize(
    label: str,
    groups: Sequence[tuple[EvalItem, Sequence[TokenGrid]]],
    palette: Palette,
    patterns: Sequence[TokenGrid] | None = None,
) -> EvalReport:
    """One report row over completions grouped by the hole they fill."""
    accuracies, l1s, mses, diversities, samples_all = [], [], [], [], []
    for item, samples in groups:
        truth_rgb = decode(item.truth, palette)
        for s in samples:
            accuracies.append(token_accuracy(s, item.truth, item.mask))
            rgb = decode(s, palette)
            l1s.append(pixel_l1(rgb, truth_rgb))
            mses.append(_mse(rgb, truth_rgb))
        if len(samples) >= 2:
            diversities.append(diversity(samples, item.mask))
        samples_all.extend(samples)
    if not accuracies:
        raise ShapeError("nothing to evaluate")

    return EvalReport(
        mode=label,
        accuracy=float(np.mean(accuracies)),
        l1=float(np.mean(l1s)),
        psnr=psnr_from_mse(float(np.mean(mses))),
        diversity=float(np.mean(diversities)) if diversities else 0.0,
        coherence=coherence_rate(samples_all, patterns) if patterns else None,
    )


def evaluate(
    mode: Mode,
    params: ModelParams,
    items: Sequence[EvalItem],
    palette: Palette,
    cfg: SampleConfig,
    patterns: Sequence[TokenGrid] | None = None,
    label: str | None = None,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> EvalReport:
    groups = [
        (
            item,
            sample_diverse(
                params,
                item.truth,
                item.mask,
                cfg.model_copy(update={"seed": cfg.seed + i}),
                mode,
                predicted_position,
            ),
        )
        for i, item in enumerate(items)
    ]
    return summarize(label or mode.value, groups, palette, patterns)


_UNBUDGETED = {"mode", "log_every"}


def _budgets(budget: "TrainConfig | Mapping[Mode, TrainConfig]") -> dict[Mode, TrainConfig]:
    if isinstance(budget, TrainConfig):
        return {m: budget.model_copy(update={"mode": m}) for m in (Mode.ar, Mode.mlm, Mode.bat)}
    budgets = {Mode.parse(m): cfg for m, cfg in budget.items()}
    reference = next(iter(budgets.values()))
    for mode, cfg in budgets.items():
        if cfg.mode is not mode:
            raise BudgetMismatchError(f"budget for {mode.value} is configured as {cfg.mode.value}")
        ours = cfg.model_dump(exclude=_UNBUDGETED)
        theirs = reference.model_dump(exclude=_UNBUDGETED)
        for name in ours:
            if ours[name] != theirs[name]:
                raise BudgetMismatchError(
                    f"budget mismatch on '{name}': {mode.value} has {ours[name]}, "
                    f"{reference.mode.value} has {theirs[name]}"
                )
    return budgets


def ablate(
    dataset: Sequence[TokenGrid],
    held_out: Sequence[TokenGrid],
    palette: Palette,
    budget: "TrainConfig | Mapping[Mode, TrainConfig]",
    cfg: AblationConfig | None = None,
    patterns: Sequence[TokenGrid] | None = None,
) -> list[EvalReport]:
    """Trains AR, MLM and BAT on identical budgets and scores them on identical holes."""
    cfg = cfg or AblationConfig()
    budgets = _budgets(budget)
    reference = next(iter(budgets.values()))
    items = eval_items(held_out, reference.seed, reference.mask_lo, reference.mask_hi, cfg.mask_policy)

    reports = []
    for mode in (Mode.ar, Mode.mlm, Mode.bat):
        if mode not in budgets:
            continue
        logger.info(f"ablation: training {mode.value}")
        result = train(dataset, palette, budgets[mode])
        sample_cfg = cfg.sample.model_copy(
            update={"n_samples": cfg.n_eval_samples, "gibbs_sweeps": cfg.gibbs_sweeps}
        )
        label = f"MLM-Gibbs({cfg.gibbs_sweeps})" if mode is Mode.mlm else mode.value
        report = evaluate(
            mode, result.params, items, palette, sample_cfg, patterns, label, budgets[mode].predicted_position
        )
        logger.info(f"ablation: {label} accuracy={report.accuracy:.3f} coherence={report.coherence}")
        reports.append(report)
    return reports
