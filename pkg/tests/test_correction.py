import numpy as np
import pytest

from tokadapt import (AnchorRecord, Reservoir, correct, layer_weights,
                      token_level_probs)
from tokadapt.errors import InputError

F32 = np.float32
L, DV = 6, 8


class TestLayerWeights:
    def test_sums_to_one_across_betas(self):
        for beta in (1e-3, 0.05, 1.0, 37.0, 1e6):
            for direction in ("shallow", "deep"):
                w = layer_weights(beta, 12, direction)
                assert w.shape == (12,)
                assert abs(float(w.sum()) - 1.0) < 1e-12
                assert (w >= 0).all()

    def test_huge_beta_is_uniform(self):
        w = layer_weights(1e6, 12)
        assert np.abs(w - 1 / 12).max() < 1e-6

    def test_small_beta_deep_collapses_on_last(self):
        w = layer_weights(0.05, 12, "deep")
        assert float(w[-1]) > 1 - 1e-8
        assert not np.diff(w).min() < 0          # nondecreasing

    def test_small_beta_shallow_collapses_on_first(self):
        w = layer_weights(0.05, 12, "shallow")
        assert float(w[0]) > 1 - 1e-8
        assert not np.diff(w).max() > 0          # nonincreasing

    def test_direction_flip_reverses(self):
        a = layer_weights(0.7, 9, "deep")
        b = layer_weights(0.7, 9, "shallow")
        assert np.allclose(a, b[::-1], atol=1e-12)

    def test_validation(self):
        with pytest.raises(InputError):
            layer_weights(0.0, 12)
        with pytest.raises(InputError):
            layer_weights(1.0, 12, "sideways")


def _reservoir_with(stacks_per_class):
    res = Reservoir(len(stacks_per_class), max(len(s) for s in stacks_per_class) or 1,
                    "fifo")
    seq = 0
    for c, stacks in enumerate(stacks_per_class):
        for stack in stacks:
            res.buffers[c].append(AnchorRecord(0.1, np.asarray(stack, F32), seq))
            seq += 1
    return res


class TestTokenLevelProbs:
    def test_identical_stack_scores_one(self):
        rng = np.random.default_rng(0)
        stack = rng.normal(size=(L, DV)).astype(F32)
        res = _reservoir_with([[stack], []])
        w = layer_weights(0.5, L)
        p = token_level_probs(stack, res, w)
        assert p[0] == pytest.approx(1.0, abs=1e-6)
        assert p[1] == 0.0

    def test_empty_reservoir_is_zero(self):
        res = _reservoir_with([[], [], []])
        p = token_level_probs(np.ones((L, DV), F32), res, layer_weights(1.0, L))
        assert np.array_equal(p, np.zeros(3))

    def test_negated_stack_scores_minus_one(self):
        rng = np.random.default_rng(1)
        stack = rng.normal(size=(L, DV)).astype(F32)
        res = _reservoir_with([[-stack]])
        p = token_level_probs(stack, res, layer_weights(2.0, L))
        assert p[0] == pytest.approx(-1.0, abs=1e-6)

    def test_bounded_by_one(self):
        rng = np.random.default_rng(2)
        res = _reservoir_with([
            [rng.normal(size=(L, DV)) for _ in range(3)],
            [rng.normal(size=(L, DV)) for _ in range(2)]])
        for _ in range(20):
            p = token_level_probs(rng.normal(size=(L, DV)).astype(F32), res,
                                  layer_weights(float(rng.uniform(0.05, 10)), L))
            assert np.all(np.abs(p) <= 1 + 1e-9)

    def test_layer_weight_mismatch(self):
        res = _reservoir_with([[np.ones((L, DV))]])
        with pytest.raises(InputError):
            token_level_probs(np.ones((L, DV), F32), res, layer_weights(1.0, L + 1))


class TestCorrect:
    def test_lambda_zero_identity(self):
        p = np.array([0.2, 0.5, 0.3])
        out = correct(p, np.array([1.0, -1.0, 0.0]), 0.0)
        assert np.array_equal(out, p)

    def test_uniform_plus_token_vote(self):
        p = np.full(3, 1 / 3)
        out = correct(p, np.array([1.0, 0.0, 0.0]), 2.0)
        assert int(np.argmax(out)) == 0

    def test_argmax_shift_invariant(self):
        rng = np.random.default_rng(3)
        p = rng.random(5)
        tok = rng.uniform(-1, 1, 5)
        a = correct(p, tok, 2.5)
        b = correct(p + 10.0, tok, 2.5)
        assert int(np.argmax(a)) == int(np.argmax(b))

    def test_negative_lambda_rejected(self):
        with pytest.raises(InputError):
            correct(np.ones(2), np.ones(2), -0.5)
