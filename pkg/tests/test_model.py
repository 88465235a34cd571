import numpy as np
import pytest

from src.core.errors import ShapeError
from src.core.models import MaskGrid
from src.engine import numerics as nx
from src.engine.model import ModelConfig, attention_block, forward, init, parameter_shapes
from src.engine.numerics import grad_check
from src.engine.objectives import bat_objective
from src.engine.sequence import build_ar_sequence, permute
from tests.helpers import make_mask, make_tokens, random_grid


def noisy_params(config, seed, scale=0.5):
    params = init(config, seed=seed, dtype=np.float64)
    noise = np.random.default_rng(seed + 1)
    for name, t in params.items():
        if not name.endswith("gain"):
            t.data += noise.normal(0.0, scale, size=t.shape)
    return params


def random_instance(rng, max_side=6, max_vocab=16):
    h, w = (int(v) for v in rng.integers(1, max_side + 1, size=2))
    V = int(rng.integers(2, max_vocab + 1))
    tokens = random_grid(rng, h, w, V)
    missing = rng.random(h * w) < rng.uniform(0.2, 0.8)
    if not missing.any():
        missing[rng.integers(h * w)] = True
    return tokens, MaskGrid(missing.reshape(h, w), allow_all_missing=True), V


def test_init_is_seeded(tiny_config):
    a, b = init(tiny_config, seed=1), init(tiny_config, seed=1)
    for name in a:
        assert np.array_equal(a[name].data, b[name].data)
    assert not np.array_equal(a["tok_emb"].data, init(tiny_config, seed=2)["tok_emb"].data)


def test_parameter_layout(tiny_config):
    shapes = parameter_shapes(tiny_config)
    assert shapes["tok_emb"] == (6, 8)
    assert shapes["pos_emb"] == (9, 8)
    assert shapes["head.weight"] == (8, 5)
    assert shapes["blocks.0.mlp.w1"] == (8, 32)


def test_bad_config():
    with pytest.raises(ShapeError):
        ModelConfig(vocab_size=5, d_model=9, n_heads=2)
    with pytest.raises(ShapeError):
        ModelConfig(vocab_size=1)


def test_logits_shape_and_finite(tiny_params):
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    seq = permute(tokens, make_mask(3, 3, [4]), 5)
    logits = forward(tiny_params, seq)

    assert logits.shape == (1, 5)
    assert np.isfinite(logits.data).all()
    assert tiny_params.all_finite()


def test_sequence_longer_than_positions(tiny_params):
    tokens = make_tokens([[0] * 4] * 4, k=5)
    with pytest.raises(ShapeError):
        forward(tiny_params, permute(tokens, make_mask(4, 4, [3]), 5))


def test_predicted_slots_do_not_see_the_future():
    rng = np.random.default_rng(11)
    trial = 0
    while trial < 100:
        tokens, mask, V = random_instance(rng)
        if mask.count < 2:
            continue
        config = ModelConfig(vocab_size=V, d_model=8, n_heads=2, n_layers=2, max_positions=36)
        params = noisy_params(config, seed=trial)
        seq = permute(tokens, mask, V)

        j = int(rng.integers(1, seq.K))
        changed = seq.with_contents([seq.predicted_offset + j], [(seq.content_ids[seq.predicted_offset + j] + 1) % V])
        before = forward(params, seq).data
        after = forward(params, changed).data

        assert np.array_equal(before[:j], after[:j]), trial
        trial += 1


def test_bat_sees_right_context_and_ar_does_not():
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 100:
        tokens, mask, V = random_instance(rng)
        first = int(mask.positions()[0])
        later = [p for p in mask.valid_positions() if p > first]
        if not later:
            continue
        config = ModelConfig(vocab_size=V, d_model=8, n_heads=2, n_layers=2, max_positions=36)
        params = noisy_params(config, seed=checked)
        p = int(rng.choice(later))
        flat = tokens.flat().copy()
        flat[p] = (flat[p] + 1) % V
        other = make_tokens(flat.reshape(tokens.height, tokens.width), k=V)

        bat = forward(params, permute(tokens, mask, V)).data[0]
        bat_other = forward(params, permute(other, mask, V)).data[0]
        ar = forward(params, build_ar_sequence(tokens, mask, V)).data[0]
        ar_other = forward(params, build_ar_sequence(other, mask, V)).data[0]

        assert np.abs(bat - bat_other).max() > 1e-8
        assert np.array_equal(ar, ar_other)
        checked += 1


def test_full_model_gradients(lively_params):
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    mask = make_mask(3, 3, [1, 4, 5, 8])
    error = grad_check(lambda: bat_objective(lively_params, tokens, mask), lively_params)
    assert error < 1e-4


def test_storage_order_does_not_change_logits(lively_params):
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    seq = permute(tokens, make_mask(3, 3, [0, 4, 7]), 5)
    order = np.random.default_rng(0).permutation(seq.length)

    np.testing.assert_allclose(
        forward(lively_params, seq.with_storage_order(order)).data,
        forward(lively_params, seq).data,
        atol=1e-12,
    )


def test_symmetric_inputs_give_equal_logits(tiny_config):
    params = noisy_params(tiny_config, seed=4)
    params["tok_emb"].data[:] = params["tok_emb"].data[0]
    params["pos_emb"].data[:] = 0.0
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)

    logits = forward(params, permute(tokens, make_mask(3, 3, [2, 3, 6]), 5)).data

    np.testing.assert_allclose(logits[1:], np.broadcast_to(logits[0], logits[1:].shape), atol=1e-12)


def test_identity_attention_is_closed_form(lively_params):
    layer = lively_params.layer(0)
    x = nx.Tensor(np.random.default_rng(2).normal(size=(4, 8)))

    out = attention_block(x, layer, np.eye(4, dtype=bool), n_heads=2).data

    h = nx.layer_norm(x, layer["ln1.gain"], layer["ln1.bias"]).data
    v = h @ layer["attn.wv"].data + layer["attn.bv"].data
    expected = x.data + v @ layer["attn.wo"].data + layer["attn.bo"].data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_single_head_matches_manual_attention(rng):
    config = ModelConfig(vocab_size=3, d_model=4, n_heads=1, n_layers=1, max_positions=4)
    layer = noisy_params(config, seed=9).layer(0)
    x = nx.Tensor(rng.normal(size=(3, 4)))
    allowed = np.tril(np.ones((3, 3), dtype=bool))

    h = nx.layer_norm(x, layer["ln1.gain"], layer["ln1.bias"]).data
    q, k, v = (h @ layer[f"attn.w{n}"].data + layer[f"attn.b{n}"].data for n in "qkv")
    scores = np.where(allowed, q @ k.T / 2.0, -np.inf)
    weights = np.exp(scores - scores.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    expected = x.data + (weights @ v) @ layer["attn.wo"].data + layer["attn.bo"].data

    np.testing.assert_allclose(attention_block(x, layer, allowed, 1).data, expected, atol=1e-12)
