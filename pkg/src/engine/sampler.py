import asyncio
from typing import MutableMapping

import numpy as np
from loguru import logger

from src.core.config import SampleConfig, settings
from src.core.enums import Mode, PredictedPosition
from src.core.models import MaskGrid, TokenGrid
from src.engine.model import ModelParams, forward
from src.engine.sequence import (
    BatSequence,
    build_ar_sequence,
    build_mlm_sequence,
    permute,
    scatter,
)

PrefixCache = MutableMapping[tuple[int, ...], np.ndarray]


def top_k_sample(logits, k: int, temperature: float, rng: np.random.Generator) -> int:
    logits = np.asarray(logits, dtype=np.float64)
    if not 1 <= k <= len(logits):
        raise ValueError(f"top_k={k} must lie in [1, {len(logits)}]")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    keep = np.argsort(-logits, kind="stable")[:k]
    if k == 1:
        return int(keep[0])
    z = logits[keep] / temperature
    p = np.exp(z - z.max())
    p /= p.sum()
    return int(keep[rng.choice(k, p=p)])


def _step_logits(
    params: ModelParams, seq: BatSequence, slot: int, prefix: tuple[int, ...], cache: PrefixCache | None
) -> np.ndarray:
    if cache is not None and prefix in cache:
        return cache[prefix]
    logits = forward(params, seq, slots=[slot]).data[0].astype(np.float64)
    if cache is not None:
        cache[prefix] = logits
    return logits


def complete_bat(
    params: ModelParams,
    tokens: TokenGrid,
    mask: MaskGrid,
    cfg: SampleConfig,
    rng: np.random.Generator,
    cache: PrefixCache | None = None,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> TokenGrid:
    """Raster-order completion: hole i is sampled from the predicted slot L+i.

    ``cache`` maps the already-sampled prefix to the next step's logits; it is
    only valid for one (params, tokens, mask) triple.
    """
    cfg.check_vocab(params.config.vocab_size)
    seq = permute(_clean(tokens, mask), mask, params.config.mask_token_id, predicted_position)
    sampled: list[int] = []
    for i in range(seq.K):
        slot = seq.predicted_offset + i
        logits = _step_logits(params, seq, slot, tuple(sampled), cache)
        token = top_k_sample(logits, cfg.top_k, cfg.temperature, rng)
        sampled.append(token)
        if i + 1 < seq.K:
            seq = seq.with_contents([slot + 1], [token])
    return scatter(seq, sampled)


def complete_ar(
    params: ModelParams,
    tokens: TokenGrid,
    mask: MaskGrid,
    cfg: SampleConfig,
    rng: np.random.Generator,
    cache: PrefixCache | None = None,
) -> TokenGrid:
    """Unidirectional baseline: each hole sees only earlier raster positions."""
    cfg.check_vocab(params.config.vocab_size)
    seq = build_ar_sequence(
        _clean(tokens, mask), mask, params.config.mask_token_id, teacher_forcing=False
    )
    sampled: list[int] = []
    for position in seq.masked_positions:
        logits = _step_logits(params, seq, int(position), tuple(sampled), cache)
        token = top_k_sample(logits, cfg.top_k, cfg.temperature, rng)
        sampled.append(token)
        if position + 1 < seq.L:
            seq = seq.with_contents([position + 1], [token])
    return scatter(seq, sampled)


def complete_mlm_gibbs(
    params: ModelParams,
    tokens: TokenGrid,
    mask: MaskGrid,
    cfg: SampleConfig,
    rng: np.random.Generator,
) -> TokenGrid:
    cfg.check_vocab(params.config.vocab_size)
    seq = build_mlm_sequence(_clean(tokens, mask), mask, params.config.mask_token_id)
    current = np.full(seq.K, -1, dtype=np.int64)
    for _ in range(cfg.gibbs_sweeps):
        for i, position in enumerate(seq.masked_positions):
            # the visited cell is hidden again so it is resampled from its conditional
            seq = seq.with_contents([position], [seq.mask_token_id])
            logits = forward(params, seq, slots=[int(position)]).data[0]
            current[i] = top_k_sample(logits, cfg.top_k, cfg.temperature, rng)
            seq = seq.with_contents([position], [current[i]])
    return scatter(seq, current)


def _clean(tokens: TokenGrid, mask: MaskGrid) -> TokenGrid:
    """Zeroes hole pixels so nothing under the hole reaches the model."""
    mask.check_pair(tokens)
    return tokens.with_values(mask.positions(), np.zeros(mask.count, dtype=np.int64))


def complete(
    mode: Mode,
    params: ModelParams,
    tokens: TokenGrid,
    mask: MaskGrid,
    cfg: SampleConfig,
    rng: np.random.Generator,
    cache: PrefixCache | None = None,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> TokenGrid:
    if mode is Mode.bat:
        return complete_bat(params, tokens, mask, cfg, rng, cache, predicted_position)
    if mode is Mode.ar:
        return complete_ar(params, tokens, mask, cfg, rng, cache)
    return complete_mlm_gibbs(params, tokens, mask, cfg, rng)


def sample_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def sample_diverse(
    params: ModelParams,
    tokens: TokenGrid,
    mask: MaskGrid,
    cfg: SampleConfig,
    mode: Mode = Mode.bat,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> list[TokenGrid]:
    cache: dict = {}
    return [
        complete(mode, params, tokens, mask, cfg, rng, cache, predicted_position)
        for rng in sample_streams(cfg.seed, cfg.n_samples)
    ]


async def sample_diverse_async(
    params: ModelParams,
    tokens: TokenGrid,
    mask: MaskGrid,
    cfg: SampleConfig,
    mode: Mode = Mode.bat,
    threads: int | None = None,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> list[TokenGrid]:
    """Same samples as ``sample_diverse``; completions run on worker threads."""
    limit = asyncio.Semaphore(threads or settings.THREADS)

    async def _one(index: int, rng: np.random.Generator) -> TokenGrid:
        async with limit:
            logger.debug(f"sample {index} started")
            return await asyncio.to_thread(
                complete, mode, params, tokens, mask, cfg, rng, None, predicted_position
            )

    streams = sample_streams(cfg.seed, cfg.n_samples)
    return list(await asyncio.gather(*(_one(i, rng) for i, rng in enumerate(streams))))
