import math
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from src.core.config import MODEL_PRESETS
from src.core.errors import ShapeError
from src.engine import numerics as nx
from src.engine.numerics import Tensor
from src.engine.sequence import BatSequence


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 32
    n_heads: int = 2
    n_layers: int = 2
    max_positions: int = 64
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ShapeError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_positions < 1:
            raise ShapeError(f"max_positions must be >= 1, got {self.max_positions}")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ShapeError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.n_layers < 0 or self.mlp_ratio < 1:
            raise ShapeError("n_layers must be >= 0 and mlp_ratio >= 1")

    @classmethod
    def from_preset(cls, preset: str, vocab_size: int, max_positions: int) -> "ModelConfig":
        try:
            dims = MODEL_PRESETS[preset]
        except KeyError:
            raise ShapeError(f"unknown model preset: {preset}") from None
        return cls(vocab_size=vocab_size, max_positions=max_positions, **dims)

    @property
    def mask_token_id(self) -> int:
        return self.vocab_size

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def d_hidden(self) -> int:
        return self.mlp_ratio * self.d_model

    def as_fields(self) -> tuple[int, ...]:
        return (
            self.vocab_size,
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.max_positions,
            self.mlp_ratio,
        )


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, h, V = config.d_model, config.d_hidden, config.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (V + 1, d),
        "pos_emb": (config.max_positions, d),
    }
    for i in range(config.n_layers):
        p = f"blocks.{i}."
        shapes[p + "ln1.gain"] = (d,)
        shapes[p + "ln1.bias"] = (d,)
        for name in ("q", "k", "v", "o"):
            shapes[p + f"attn.w{name}"] = (d, d)
            shapes[p + f"attn.b{name}"] = (d,)
        shapes[p + "ln2.gain"] = (d,)
        shapes[p + "ln2.bias"] = (d,)
        shapes[p + "mlp.w1"] = (d, h)
        shapes[p + "mlp.b1"] = (h,)
        shapes[p + "mlp.w2"] = (h, d)
        shapes[p + "mlp.b2"] = (d,)
    shapes["ln_f.gain"] = (d,)
    shapes["ln_f.bias"] = (d,)
    shapes["head.weight"] = (d, V)
    return shapes


class ModelParams(Mapping[str, Tensor]):
    """Named learnable tensors of the transformer, in a fixed order."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        expected = parameter_shapes(config)
        if list(tensors) != list(expected):
            raise ShapeError("parameter names do not match the model config")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {tensors[name].shape}")
        self.config = config
        self._tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def dtype(self):
        return self._tensors["tok_emb"].dtype

    def layer(self, index: int) -> dict[str, Tensor]:
        prefix = f"blocks.{index}."
        return {n[len(prefix) :]: t for n, t in self._tensors.items() if n.startswith(prefix)}

    def zero_grad(self):
        for t in self._tensors.values():
            t.zero_grad()

    def n_parameters(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def all_finite(self) -> bool:
        return all(np.isfinite(t.data).all() for t in self._tensors.values())

    @staticmethod
    def decays(name: str) -> bool:
        """Weight decay applies to projection matrices only."""
        leaf = name.rsplit(".", 1)[-1]
        return leaf in ("wq", "wk", "wv", "wo", "w1", "w2", "weight")


def init(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            data = np.ones(shape)
        elif leaf == "bias" or leaf.startswith("b"):
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, 0.02, size=shape)
        tensors[name] = nx.parameter(data.astype(dtype), name=name)
    return ModelParams(config, tensors)


def attention_block(
    x: Tensor, layer: Mapping[str, Tensor], allowed: np.ndarray, n_heads: int
) -> Tensor:
    d = x.shape[1]
    d_head = d // n_heads
    h = nx.layer_norm(x, layer["ln1.gain"], layer["ln1.bias"])
    q = nx.linear(h, layer["attn.wq"], layer["attn.bq"])
    k = nx.linear(h, layer["attn.wk"], layer["attn.bk"])
    v = nx.linear(h, layer["attn.wv"], layer["attn.bv"])

    heads = []
    for i in range(n_heads):
        lo, hi = i * d_head, (i + 1) * d_head
        qs, ks, vs = (
            (q, k, v) if n_heads == 1 else (nx.columns(t, lo, hi) for t in (q, k, v))
        )
        scores = nx.scale(nx.matmul(qs, nx.transpose(ks)), 1.0 / math.sqrt(d_head))
        weights = nx.masked_softmax(scores, allowed)
        heads.append(nx.matmul(weights, vs))

    merged = heads[0] if n_heads == 1 else nx.concat_columns(heads)
    return nx.add(x, nx.linear(merged, layer["attn.wo"], layer["attn.bo"]))


def mlp_block(x: Tensor, layer: Mapping[str, Tensor]) -> Tensor:
    h = nx.layer_norm(x, layer["ln2.gain"], layer["ln2.bias"])
    h = nx.gelu(nx.linear(h, layer["mlp.w1"], layer["mlp.b1"]))
    return nx.add(x, nx.linear(h, layer["mlp.w2"], layer["mlp.b2"]))


def _check_sequence(params: ModelParams, seq: BatSequence):
    config = params.config
    if seq.position_ids.max() >= config.max_positions:
        raise ShapeError(
            f"position {int(seq.position_ids.max())} exceeds max_positions={config.max_positions}"
        )
    if seq.content_ids.max() > config.vocab_size or seq.mask_token_id != config.mask_token_id:
        raise ShapeError(
            f"sequence vocabulary [M]={seq.mask_token_id} does not match model V={config.vocab_size}"
        )


def forward(params: ModelParams, seq: BatSequence, slots=None) -> Tensor:
    """Logits over the V palette classes at ``slots`` (default: the target slots)."""
    _check_sequence(params, seq)
    config = params.config
    x = nx.add(
        nx.embedding(params["tok_emb"], seq.content_ids),
        nx.embedding(params["pos_emb"], seq.position_ids),
    )
    for i in range(config.n_layers):
        layer = params.layer(i)
        x = attention_block(x, layer, seq.attention, config.n_heads)
        x = mlp_block(x, layer)

    x = nx.rows(x, seq.output_slots if slots is None else slots)
    x = nx.layer_norm(x, params["ln_f.gain"], params["ln_f.bias"])
    return nx.matmul(x, params["head.weight"])
