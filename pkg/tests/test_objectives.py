import math

import numpy as np
import pytest

from src.core.config import TrainConfig
from src.core.enums import DatasetKind, Mode
from src.core.errors import NothingToPredictError, NumericsError, ShapeError
from src.core.models import MaskGrid
from src.engine import numerics as nx
from src.engine.datasets import make_dataset
from src.engine.model import ModelConfig, forward, init
from src.engine.numerics import Tensor, parameter
from src.engine.objectives import (
    OptState,
    adamw_step,
    ar_loss,
    bat_loss,
    bat_objective,
    check_dataset,
    clip_grad_norm,
    loss_for,
    lr_at,
    mlm_loss,
    sequence_loss,
    train,
)
from src.engine.palette import encode, fit_palette
from src.engine.sequence import build_ar_sequence, build_mlm_sequence, permute
from tests.helpers import make_mask, make_tokens


@pytest.fixture
def stripes():
    corpus = make_dataset(DatasetKind.stripes, 4, 4, 4, seed=0)
    palette = fit_palette(corpus.images, 2, seed=0)
    return [encode(image, palette) for image in corpus.images], palette


def test_uniform_logits():
    assert bat_loss(Tensor(np.zeros((3, 4))), [0, 2, 3]).item() == pytest.approx(math.log(4), abs=1e-12)


def test_confident_logits():
    logits = np.zeros((2, 4))
    logits[0, 1] = logits[1, 3] = 60.0
    assert bat_loss(Tensor(logits), [1, 3]).item() < 1e-12


def test_random_logits_match_oracle(rng):
    logits = rng.normal(size=(3, 5))
    targets = [1, 4, 0]
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    expected = -np.log(p[np.arange(3), targets]).mean()
    assert bat_loss(Tensor(logits), targets).item() == pytest.approx(expected, abs=1e-12)


def test_sequence_loss_uses_the_same_kernel(lively_params):
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    seq = permute(tokens, make_mask(3, 3, [2, 6]), 5)
    assert sequence_loss(lively_params, seq).item() == bat_loss(forward(lively_params, seq), seq.target_ids).item()


def test_bat_objective_needs_holes(tiny_params):
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    with pytest.raises(NothingToPredictError):
        bat_objective(tiny_params, tokens, MaskGrid(np.zeros((3, 3), dtype=bool)))


def test_ar_loss_ignores_later_tokens(lively_params):
    mask = make_mask(3, 3, [0])
    a = make_tokens([[2, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    b = make_tokens([[2, 4, 0], [0, 1, 1], [4, 3, 2]], k=5)
    assert ar_loss(lively_params, a, mask).item() == ar_loss(lively_params, b, mask).item()


def test_fully_masked_ar_is_language_modelling(lively_params):
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    seq = build_ar_sequence(tokens, MaskGrid.all_missing(3, 3), 5)

    assert list(seq.output_slots) == list(range(9))
    assert list(seq.content_ids) == [5, 0, 1, 2, 3, 4, 0, 1, 2]
    logits = forward(lively_params, seq, slots=np.arange(9)).data
    logp = nx.log_softmax(logits)
    expected = -logp[np.arange(9), tokens.flat()].mean()
    assert ar_loss(lively_params, tokens, MaskGrid.all_missing(3, 3)).item() == pytest.approx(expected, abs=1e-12)


def test_mlm_predictions_are_independent(lively_params):
    mask = make_mask(3, 3, [1, 5])
    a = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    b = make_tokens([[0, 1, 2], [3, 4, 3], [1, 2, 3]], k=5)

    first_a = forward(lively_params, build_mlm_sequence(a, mask, 5)).data[0]
    first_b = forward(lively_params, build_mlm_sequence(b, mask, 5)).data[0]

    assert np.array_equal(first_a, first_b)


def test_mlm_and_bat_agree_on_one_hole():
    config = ModelConfig(vocab_size=5, d_model=8, n_heads=2, n_layers=0, max_positions=9)
    params = init(config, seed=8, dtype=np.float64)
    params["pos_emb"].data += np.random.default_rng(8).normal(size=(9, 8))
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    mask = make_mask(3, 3, [4])

    assert mlm_loss(params, tokens, mask).item() == pytest.approx(
        bat_objective(params, tokens, mask).item(), abs=1e-12
    )


def test_loss_for_dispatch(lively_params):
    tokens = make_tokens([[0, 1, 2], [3, 4, 0], [1, 2, 3]], k=5)
    mask = make_mask(3, 3, [4, 7])
    assert loss_for(Mode.mlm, lively_params, tokens, mask).item() == mlm_loss(lively_params, tokens, mask).item()
    assert loss_for(Mode.bat, lively_params, tokens, mask).item() == bat_objective(lively_params, tokens, mask).item()


def _single(value, name="w"):
    return {name: parameter(np.array([value]))}


@pytest.mark.parametrize("mode", [Mode.ar, Mode.mlm, Mode.bat])
def test_fresh_model_loss_is_log_vocab(rng, mode):
    config = ModelConfig(vocab_size=8, d_model=16, n_heads=2, n_layers=2, max_positions=16)
    params = init(config, seed=7)
    tokens = make_tokens(rng.integers(0, 8, size=(4, 4)), k=8)
    mask = make_mask(4, 4, [1, 5, 6, 10, 15])

    loss = loss_for(mode, params, tokens, mask).item()

    assert loss >= 0
    assert abs(loss - math.log(8)) < 0.1


def test_adamw_no_gradient_no_decay():
    params = _single(1.5)
    state = OptState.zeros_like(params)
    adamw_step(params, {"w": np.zeros(1)}, state, TrainConfig(weight_decay=0.0))
    assert params["w"].data[0] == 1.5
    assert state.step == 1


def test_adamw_first_step_moves_by_lr():
    params = _single(1.0)
    cfg = TrainConfig(lr=1e-3, weight_decay=0.0)
    adamw_step(params, {"w": np.ones(1)}, OptState.zeros_like(params), cfg)
    assert params["w"].data[0] == pytest.approx(1.0 - 1e-3 / (1.0 + 1e-8), abs=1e-12)


def test_adamw_decay_targets_matrices_only():
    params = {
        "blocks.0.attn.wq": parameter(np.full((2, 2), 2.0)),
        "blocks.0.ln1.gain": parameter(np.ones(2)),
        "blocks.0.attn.bq": parameter(np.full(2, 0.5)),
    }
    grads = {name: np.zeros_like(t.data) for name, t in params.items()}
    cfg = TrainConfig(lr=0.1, weight_decay=0.5)
    adamw_step(params, grads, OptState.zeros_like(params), cfg)

    np.testing.assert_allclose(params["blocks.0.attn.wq"].data, 2.0 * (1 - 0.05))
    assert (params["blocks.0.ln1.gain"].data == 1.0).all()
    assert (params["blocks.0.attn.bq"].data == 0.5).all()


def test_adamw_zero_lr_is_identity(rng):
    params = {"head.weight": parameter(rng.normal(size=(3, 2)))}
    before = params["head.weight"].data.copy()
    adamw_step(params, {"head.weight": rng.normal(size=(3, 2))}, OptState.zeros_like(params), TrainConfig(), lr=0.0)
    assert np.array_equal(params["head.weight"].data, before)


def test_adamw_rejects_nan():
    params = _single(1.0)
    with pytest.raises(NumericsError, match="non-finite gradient in 'w'"):
        adamw_step(params, {"w": np.array([np.nan])}, OptState.zeros_like(params), TrainConfig())


def test_schedule():
    cfg = TrainConfig(lr=1e-3, steps=100)
    assert lr_at(0, cfg) == pytest.approx(5e-4)
    assert lr_at(2, cfg) == pytest.approx(1e-3)
    assert lr_at(100, cfg) == pytest.approx(1e-4)
    assert all(lr_at(s, cfg) >= lr_at(s + 1, cfg) for s in range(2, 100))


def test_clip_grad_norm():
    params = _single(0.0)
    params["w"].grad = np.array([10.0])
    assert clip_grad_norm(params, 1.0) == pytest.approx(10.0)
    assert params["w"].grad[0] == pytest.approx(1.0)


def test_zero_steps_returns_init(stripes):
    grids, palette = stripes
    result = train(grids, palette, TrainConfig(steps=0, seed=5))
    fresh = init(ModelConfig.from_preset("tiny", palette.k, 16), seed=5)

    assert result.curve == []
    for name in fresh:
        assert np.array_equal(result.params[name].data, fresh[name].data)


def test_training_is_deterministic(stripes):
    grids, palette = stripes
    cfg = TrainConfig(steps=4, batch_size=2, seed=1)
    first = train(grids, palette, cfg).curve
    second = train(grids, palette, cfg).curve
    assert first == second


@pytest.mark.parametrize("mode", [Mode.ar, Mode.mlm, Mode.bat])
def test_training_reduces_loss(stripes, mode):
    grids, palette = stripes
    cfg = TrainConfig(mode=mode, steps=150, batch_size=4, lr=3e-3, seed=2, log_every=1000)
    curve = train(grids, palette, cfg).curve

    assert np.mean([p.loss for p in curve[-10:]]) < np.mean([p.loss for p in curve[:10]])


def test_dataset_must_match_palette(stripes):
    grids, palette = stripes
    wide = make_tokens([[0, 1, 2, 3]] * 4, k=4)
    with pytest.raises(ShapeError, match="dataset/palette mismatch"):
        check_dataset([grids[0], wide], palette)
    with pytest.raises(ShapeError, match="empty"):
        check_dataset([], palette)
