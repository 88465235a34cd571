"""Sequence layouts for the three training modes.

A BAT sequence has ``L + K`` slots. Slots ``[0, L-K)`` hold the valid tokens in
raster order, slots ``[L-K, L)`` hold one ``[M]`` placeholder per hole pixel
carrying that pixel's position, and slots ``[L, L+K)`` form the predicted part:
slot ``L+i`` holds ``[M]`` for ``i == 0`` and the ``i-1``-th hole token
otherwise, and is read out to predict the ``i``-th hole token. The predicted
part attends causally among itself and fully to the first ``L`` slots.

AR and MLM sequences have ``L`` slots in raster order and read their logits at
the hole positions.
"""

from dataclasses import dataclass, replace

import numpy as np

from src.core.enums import Mode, PredictedPosition
from src.core.errors import NothingToPredictError, ShapeError
from src.core.models import MaskGrid, TokenGrid


@dataclass(frozen=True, eq=False)
class BatSequence:
    layout: Mode
    height: int
    width: int
    mask_token_id: int
    content_ids: np.ndarray
    position_ids: np.ndarray
    attention: np.ndarray
    predicted_offset: int
    output_slots: np.ndarray
    target_ids: np.ndarray
    masked_positions: np.ndarray
    visible_ids: np.ndarray

    @property
    def L(self) -> int:
        return self.height * self.width

    @property
    def K(self) -> int:
        return int(len(self.masked_positions))

    @property
    def length(self) -> int:
        return int(len(self.content_ids))

    def with_contents(self, slots, values) -> "BatSequence":
        content = self.content_ids.copy()
        content[np.asarray(slots, dtype=np.int64)] = values
        return replace(self, content_ids=content)

    def with_storage_order(self, order: np.ndarray) -> "BatSequence":
        """Reorders slots physically; the attention matrix follows the slots."""
        order = np.asarray(order, dtype=np.int64)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(len(order))
        return replace(
            self,
            content_ids=self.content_ids[order],
            position_ids=self.position_ids[order],
            attention=self.attention[np.ix_(order, order)],
            output_slots=inverse[self.output_slots],
        )


def build_attention_mask(L: int, K: int) -> np.ndarray:
    if L < 0 or K < 0 or K > L:
        raise ShapeError(f"attention mask needs 0 <= K <= L, got L={L}, K={K}")
    size = L + K
    q = np.arange(size)[:, None]
    c = np.arange(size)[None, :]
    return ((q < L) & (c < L)) | ((q >= L) & ((c < L) | (c <= q)))


def _prepare(tokens: TokenGrid, mask: MaskGrid, mask_token_id: int) -> tuple[np.ndarray, np.ndarray]:
    mask.check_pair(tokens)
    flat = tokens.flat()
    if flat.max() >= mask_token_id:
        raise ShapeError(f"token id {int(flat.max())} collides with [M]={mask_token_id}")
    masked = mask.positions()
    if len(masked) == 0:
        raise NothingToPredictError("mask has no missing pixel")
    return flat, masked


def _visible(flat: np.ndarray, masked: np.ndarray, mask_token_id: int) -> np.ndarray:
    visible = flat.copy()
    visible[masked] = mask_token_id
    return visible


def permute(
    tokens: TokenGrid,
    mask: MaskGrid,
    mask_token_id: int,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> BatSequence:
    flat, masked = _prepare(tokens, mask, mask_token_id)
    L, K = len(flat), len(masked)
    valid = mask.valid_positions()
    M = mask_token_id

    content = np.concatenate(
        [flat[valid], np.full(K, M), np.array([M]), flat[masked[:-1]]]
    ).astype(np.int64)
    if predicted_position is PredictedPosition.target:
        predicted_pos = masked
    else:
        predicted_pos = np.concatenate([masked[:1], masked[:-1]])
    positions = np.concatenate([valid, masked, predicted_pos]).astype(np.int64)

    return BatSequence(
        layout=Mode.bat,
        height=tokens.height,
        width=tokens.width,
        mask_token_id=M,
        content_ids=content,
        position_ids=positions,
        attention=build_attention_mask(L, K),
        predicted_offset=L,
        output_slots=np.arange(L, L + K),
        target_ids=flat[masked].copy(),
        masked_positions=masked,
        visible_ids=_visible(flat, masked, M),
    )


def build_ar_sequence(
    tokens: TokenGrid, mask: MaskGrid, mask_token_id: int, teacher_forcing: bool = True
) -> BatSequence:
    """Raster causal layout: slot t reads token t-1 ([M] at t=0) and predicts token t."""
    flat, masked = _prepare(tokens, mask, mask_token_id)
    L = len(flat)
    source = flat if teacher_forcing else _visible(flat, masked, mask_token_id)
    content = np.concatenate([[mask_token_id], source[:-1]]).astype(np.int64)
    return BatSequence(
        layout=Mode.ar,
        height=tokens.height,
        width=tokens.width,
        mask_token_id=mask_token_id,
        content_ids=content,
        position_ids=np.arange(L),
        attention=np.tril(np.ones((L, L), dtype=bool)),
        predicted_offset=0,
        output_slots=masked.copy(),
        target_ids=flat[masked].copy(),
        masked_positions=masked,
        visible_ids=_visible(flat, masked, mask_token_id),
    )


def build_mlm_sequence(tokens: TokenGrid, mask: MaskGrid, mask_token_id: int) -> BatSequence:
    flat, masked = _prepare(tokens, mask, mask_token_id)
    L = len(flat)
    visible = _visible(flat, masked, mask_token_id)
    return BatSequence(
        layout=Mode.mlm,
        height=tokens.height,
        width=tokens.width,
        mask_token_id=mask_token_id,
        content_ids=visible.copy(),
        position_ids=np.arange(L),
        attention=np.ones((L, L), dtype=bool),
        predicted_offset=0,
        output_slots=masked.copy(),
        target_ids=flat[masked].copy(),
        masked_positions=masked,
        visible_ids=visible,
    )


def build_sequence(
    mode: Mode,
    tokens: TokenGrid,
    mask: MaskGrid,
    mask_token_id: int,
    predicted_position: PredictedPosition = PredictedPosition.target,
) -> BatSequence:
    if mode is Mode.bat:
        return permute(tokens, mask, mask_token_id, predicted_position)
    if mode is Mode.ar:
        return build_ar_sequence(tokens, mask, mask_token_id)
    return build_mlm_sequence(tokens, mask, mask_token_id)


def scatter(seq: BatSequence, sampled) -> TokenGrid:
    sampled = np.asarray(sampled, dtype=np.int64)
    if sampled.shape != (seq.K,):
        raise ShapeError(f"expected {seq.K} sampled ids, got shape {sampled.shape}")
    if seq.K and (sampled.min() < 0 or sampled.max() >= seq.mask_token_id):
        raise ShapeError("sampled ids must lie in [0, V)")
    grid = seq.visible_ids.copy()
    grid[seq.masked_positions] = sampled
    return TokenGrid(grid.reshape(seq.height, seq.width), seq.mask_token_id)


def render_sequence(seq: BatSequence) -> str:
    M = seq.mask_token_id

    def _tok(i: int) -> str:
        return "[M]" if i == M else str(int(i))

    lines = [
        f"layout={seq.layout.value} L={seq.L} K={seq.K} offset={seq.predicted_offset}",
        "content:   " + " ".join(_tok(i) for i in seq.content_ids),
        "positions: " + " ".join(str(int(p)) for p in seq.position_ids),
        "targets:   " + " ".join(str(int(t)) for t in seq.target_ids),
        "attention:",
    ]
    lines += ["  " + "".join("#" if a else "." for a in row) for row in seq.attention]
    return "\n".join(lines)
