import math

import numpy as np
import pytest

from lrfa.decomp import HoiVocabulary
from lrfa.errors import DimensionError, ParameterError, VocabularyError
from lrfa.numkit import grad_check, softmax_row
from lrfa.numkit import tape as T
from lrfa import objective as O


@pytest.fixture
def vocab():
    # 3 actions x 2 objects, 5 interaction classes, one unseen
    return HoiVocabulary(
        actions=["hold", "ride", "wash"],
        objects=["bike", "dog"],
        pairs=[(0, 0), (1, 0), (2, 0), (0, 1), (2, 1)],
        seen_mask=[True, True, True, True, False],
    )


def maps_for(vocab):
    return O.build_label_maps(vocab)


class TestLossWeights:
    def test_defaults(self):
        w = O.LossWeights()
        assert (w.alpha, w.beta1, w.beta2, w.beta3, w.beta4) == (80.0, 0.1, 0.1, 0.001, 50.0)
        assert (w.gamma1, w.gamma2) == (2.66, 2.66)
        assert w.tau_score(training=True) == 1.0
        assert w.tau_score(training=False) == 2.8
        assert w.tau_kl == 0.1

    def test_validation(self):
        with pytest.raises(ParameterError):
            O.LossWeights(beta1=-0.1)
        with pytest.raises(ParameterError):
            O.LossWeights(tau_kl=0.0)


class TestLabelMaps:
    def test_normalization_by_class_count(self, vocab):
        l_u, l_ao = maps_for(vocab)
        # action "hold" has 2 classes, "ride" 1, "wash" 2
        m = l_u.matrix
        assert m[0, 0] == pytest.approx(0.5)
        assert m[1, 1] == pytest.approx(1.0)
        assert m[2, 2] == pytest.approx(0.5)
        assert np.count_nonzero(m, axis=1).tolist() == [1] * 5

    def test_column_sums_one(self, vocab):
        l_u, _ = maps_for(vocab)
        assert np.allclose(l_u.matrix.sum(axis=0), 1.0)

    def test_bijective_vocabulary(self):
        v = HoiVocabulary(["a", "b"], ["x", "y"], [(0, 0), (1, 1)], [True, False])
        l_u, _ = O.build_label_maps(v)
        assert np.array_equal(l_u.matrix, np.eye(2))

    def test_action_without_class_rejected(self):
        v = HoiVocabulary(["a", "b"], ["x"], [(0, 0)], [True])
        with pytest.raises(VocabularyError):
            O.build_label_maps(v)


class TestFocalLoss:
    def test_reduces_to_half_bce(self):
        rng = np.random.default_rng(0)
        s = rng.normal(size=6)
        gt = np.array([1.0, 0.0, 1.0, 0.0, 0.0, 1.0])
        value, _ = O.focal_loss(s, gt, focal_alpha=0.5, focal_gamma=0.0)
        p = 1.0 / (1.0 + np.exp(-s))
        bce = -(gt * np.log(p) + (1 - gt) * np.log(1 - p))
        assert value == pytest.approx(0.5 * bce.sum(), rel=1e-12)

    def test_hand_value(self):
        value, _ = O.focal_loss([0.0], [1.0], focal_alpha=0.25, focal_gamma=2.0)
        assert value == pytest.approx(0.25 * 0.25 * math.log(2.0), rel=1e-12)

    def test_nonnegative_and_saturating(self):
        value, _ = O.focal_loss([20.0, -20.0], [1.0, 0.0])
        assert 0.0 <= value < 1e-6

    def test_mean_over_rows(self):
        s = np.array([[1.0, -1.0], [1.0, -1.0]])
        gt = np.array([[1.0, 0.0], [1.0, 0.0]])
        v2, _ = O.focal_loss(s, gt)
        v1, _ = O.focal_loss(s[0], gt[0])
        assert v2 == pytest.approx(v1, rel=1e-12)

    def test_gradient_check(self):
        rng = np.random.default_rng(1)
        gt = (rng.random((3, 5)) < 0.4).astype(float)

        def loss(params):
            logits = T.leaf(params["s"])
            out = O.focal_loss_t(logits, gt, 0.25, 2.0)
            T.backward(out)
            return out.item(), {"s": logits.grad}

        report = grad_check(loss, {"s": rng.normal(size=(3, 5))})
        assert report.max_relative_error < 1e-4


class TestRowsToDistributions:
    def test_constant_row_uniform(self):
        out = O.rows_to_distributions(np.full((2, 4), 3.0), 0.1)
        assert np.allclose(out, 0.25)

    def test_small_tau_sharpens(self):
        rng = np.random.default_rng(2)
        row = rng.normal(size=(1, 6))

        def entropy(p):
            return -(p * np.log(p + 1e-300)).sum()

        sharp = O.rows_to_distributions(row, 0.1)
        soft = O.rows_to_distributions(row, 1.0)
        assert entropy(sharp[0]) < entropy(soft[0])
        assert np.argmax(sharp[0]) == np.argmax(row[0])

    def test_rows_normalized(self):
        rng = np.random.default_rng(3)
        out = O.rows_to_distributions(rng.normal(size=(5, 7)), 0.3)
        assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_matches_softmax_row(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(3, 5))
        out = O.rows_to_distributions(w, 0.2)
        for i in range(3):
            assert np.allclose(out[i], softmax_row(w[i], 0.2), atol=1e-15)


class TestActionRegHoi:
    def test_zero_when_aligned(self, vocab):
        rng = np.random.default_rng(5)
        w_a = rng.normal(size=(3, 4))
        w_ar = w_a[vocab.action_index()]
        value, _ = O.action_reg_hoi(w_ar, w_a, vocab, 0.1)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_hand_closed_form(self):
        # single class, k=2: row (tau*ln2, 0) vs uniform target
        v = HoiVocabulary(["a"], ["x"], [(0, 0)], [True])
        tau = 0.1
        w_ar = np.array([[tau * math.log(2.0), 0.0]])
        w_a = np.array([[0.0, 0.0]])
        value, _ = O.action_reg_hoi(w_ar, w_a, v, tau)
        expected = (5.0 / 3.0) * math.log(2.0) - math.log(3.0)
        assert value == pytest.approx(expected, rel=1e-10)

    def test_positive_when_misaligned(self, vocab):
        rng = np.random.default_rng(6)
        value, _ = O.action_reg_hoi(rng.normal(size=(5, 4)), rng.normal(size=(3, 4)), vocab, 0.1)
        assert value > 0.0

    def test_gradient_check(self, vocab):
        rng = np.random.default_rng(7)
        w_a = rng.normal(size=(3, 4))

        def loss(params):
            leaf = T.leaf(params["war"])
            out = O.action_reg_hoi_t(leaf, w_a, vocab, 0.1)
            T.backward(out)
            return out.item(), {"war": leaf.grad}

        report = grad_check(loss, {"war": rng.normal(size=(5, 4))})
        assert report.max_relative_error < 1e-4

    def test_shape_contracts(self, vocab):
        with pytest.raises(VocabularyError):
            O.action_reg_hoi(np.zeros((4, 3)), np.zeros((3, 3)), vocab, 0.1)
        with pytest.raises(DimensionError):
            O.action_reg_hoi(np.zeros((5, 3)), np.zeros((3, 4)), vocab, 0.1)


class TestActionRegAct:
    def test_zero_when_identical(self):
        rng = np.random.default_rng(8)
        w = rng.normal(size=(3, 4))
        value, _ = O.action_reg_act(w, w.copy(), 0.1)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_positive_when_any_row_differs(self):
        rng = np.random.default_rng(9)
        w = rng.normal(size=(3, 4))
        w2 = w.copy()
        w2[1, 2] += 0.5
        value, _ = O.action_reg_act(w2, w, 0.1)
        assert value > 0.0

    def test_gradient_check(self):
        rng = np.random.default_rng(10)
        orig = rng.normal(size=(4, 5))

        def loss(params):
            leaf = T.leaf(params["adapted"])
            out = O.action_reg_act_t(leaf, orig, 0.1)
            T.backward(out)
            return out.item(), {"adapted": leaf.grad}

        report = grad_check(loss, {"adapted": rng.normal(size=(4, 5))})
        assert report.max_relative_error < 1e-4


class TestSemanticLoss:
    def test_zero_at_original_features(self, vocab):
        rng = np.random.default_rng(11)
        f = rng.normal(size=(5, 6))
        f /= np.linalg.norm(f, axis=1, keepdims=True)
        value, grads = O.semantic_loss(f, f, f, vocab, 0.5)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_singleton_groups_contribute_zero(self):
        # every object has exactly one class: no pairs to compare
        v = HoiVocabulary(["a", "b"], ["x", "y"], [(0, 0), (1, 1)], [True, False])
        rng = np.random.default_rng(12)
        f = rng.normal(size=(2, 4))
        value, grads = O.semantic_loss(rng.normal(size=(2, 4)), rng.normal(size=(2, 4)), f / np.linalg.norm(f, axis=1, keepdims=True), v, 0.5)
        assert value == 0.0
        assert np.array_equal(grads["f_hat"], np.zeros((2, 4)))

    def test_permutation_invariance(self, vocab):
        rng = np.random.default_rng(13)
        f = rng.normal(size=(5, 6))
        f /= np.linalg.norm(f, axis=1, keepdims=True)
        f_hat = rng.normal(size=(5, 6))
        f_ao = rng.normal(size=(5, 6))
        v0, _ = O.semantic_loss(f_hat, f_ao, f, vocab, 0.4)
        perm = [3, 0, 4, 1, 2]
        pv = HoiVocabulary(
            vocab.actions, vocab.objects, [vocab.pairs[i] for i in perm], vocab.seen_mask[perm]
        )
        v1, _ = O.semantic_loss(f_hat[perm], f_ao[perm], f[perm], pv, 0.4)
        assert v0 == pytest.approx(v1, rel=1e-10)

    def test_tau_validation(self, vocab):
        with pytest.raises(ParameterError):
            O.semantic_loss(np.ones((5, 2)), np.ones((5, 2)), np.eye(5, 2), vocab, 0.0)

    def test_gradient_check(self, vocab):
        rng = np.random.default_rng(14)
        f = rng.normal(size=(5, 6))
        f /= np.linalg.norm(f, axis=1, keepdims=True)

        def loss(params):
            hat = T.leaf(params["hat"])
            ao = T.leaf(params["ao"])
            out = O.semantic_loss_t(hat, ao, f, vocab, 0.4)
            T.backward(out)
            return out.item(), {"hat": hat.grad, "ao": ao.grad}

        report = grad_check(loss, {"hat": rng.normal(size=(5, 6)), "ao": rng.normal(size=(5, 6))})
        assert report.max_relative_error < 1e-4


class TestScoreAction:
    def test_all_ones_paper_arithmetic(self):
        # bijective vocabulary (q=1) and perfectly aligned features: every
        # cosine is 1, so each action scores gamma1*2 + gamma2 = 7.98
        v = HoiVocabulary(["a", "b"], ["x", "y"], [(0, 0), (1, 1)], [True, False])
        maps = O.build_label_maps(v)
        f = np.tile(np.array([[1.0, 0.0, 0.0]]), (2, 1))
        vec = np.array([1.0, 0.0, 0.0])
        w = O.LossWeights()
        out = O.score_action(vec, vec, vec, f, f, maps, w)
        assert np.allclose(out, 7.98, atol=1e-12)

    def test_zero_gammas(self, vocab):
        rng = np.random.default_rng(15)
        maps = maps_for(vocab)
        w = O.LossWeights(gamma1=0.0, gamma2=0.0)
        out = O.score_action(
            rng.normal(size=4), rng.normal(size=4), rng.normal(size=4),
            rng.normal(size=(5, 4)), rng.normal(size=(5, 4)), maps, w,
        )
        assert np.array_equal(out, np.zeros(3))

    def test_matches_loop_oracle(self, vocab):
        rng = np.random.default_rng(16)
        maps = maps_for(vocab)
        w = O.LossWeights()
        f_u, t_ho, f_ho = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
        f_hat, f_ao = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
        out = O.score_action(f_u, t_ho, f_ho, f_hat, f_ao, maps, w)

        def cos(a, b):
            return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

        for a in range(vocab.n_actions):
            acc = 0.0
            for i in range(vocab.n_hoi):
                acc += w.gamma1 * (cos(f_u, f_hat[i]) + cos(t_ho, f_hat[i])) * maps[0].matrix[i, a]
                acc += w.gamma2 * cos(f_ho, f_ao[i]) * maps[1].matrix[i, a]
            assert out[a] == pytest.approx(acc, abs=1e-12)

    def test_homogeneous_in_gammas(self, vocab):
        rng = np.random.default_rng(17)
        maps = maps_for(vocab)
        args = (
            rng.normal(size=4), rng.normal(size=4), rng.normal(size=4),
            rng.normal(size=(5, 4)), rng.normal(size=(5, 4)),
        )
        base = O.score_action(*args, maps, O.LossWeights(gamma1=1.3, gamma2=0.7))
        scaled = O.score_action(*args, maps, O.LossWeights(gamma1=2.6, gamma2=1.4))
        assert np.allclose(scaled, 2.0 * base, atol=1e-12)


class TestLossComposition:
    def test_fd_zero_parts(self):
        assert O.fd_loss({}, O.LossWeights()) == 0.0

    def test_fd_paper_weights_unit_parts(self):
        parts = {k: 1.0 for k in ("recon_hoi", "recon_act", "sparse_hoi", "sparse_act", "ort", "act_reg_hoi", "act_reg_act")}
        assert O.fd_loss(parts, O.LossWeights()) == pytest.approx(100.401, abs=1e-12)

    def test_fd_linear_in_each_part(self):
        w = O.LossWeights()
        base = {k: 1.0 for k in ("recon_hoi", "recon_act", "sparse_hoi", "sparse_act", "ort", "act_reg_hoi", "act_reg_act")}
        for key, beta in (("recon_hoi", w.beta1), ("sparse_act", w.beta2), ("ort", w.beta3), ("act_reg_hoi", w.beta4)):
            bumped = dict(base)
            bumped[key] = 2.0
            assert O.fd_loss(bumped, w) - O.fd_loss(base, w) == pytest.approx(beta, abs=1e-12)

    def test_total_loss(self):
        w = O.LossWeights()
        assert O.total_loss(1.0, 0.0, 0.0, w) == 1.0
        assert O.total_loss(1.0, 1.0, 1.0, w) == pytest.approx(82.0)
        assert O.total_loss(0.0, 0.0, 3.5, w) == 3.5


class TestHoiScore:
    def test_detector_certainty(self):
        for s_a in (-2.0, 0.0, 3.0):
            expected = 1.0 / (1.0 + math.exp(-s_a))
            assert O.hoi_score(1.0, 1.0, s_a, 2.8) == pytest.approx(expected, rel=1e-12)

    def test_spot_value(self):
        # (0.5 * 0.5) ** 2.8 * sigmoid(0)
        assert O.hoi_score(0.5, 0.5, 0.0, 2.8) == pytest.approx(0.25**2.8 * 0.5, rel=1e-12)

    def test_monotone_in_each_argument(self):
        grid = np.linspace(0.05, 1.0, 8)
        for tau in (1.0, 2.8):
            vals = [O.hoi_score(s, 0.7, 0.3, tau) for s in grid]
            assert all(b > a for a, b in zip(vals, vals[1:]))
            vals = [O.hoi_score(0.7, s, 0.3, tau) for s in grid]
            assert all(b > a for a, b in zip(vals, vals[1:]))
        vals = [O.hoi_score(0.7, 0.7, s, 2.8) for s in np.linspace(-3, 3, 9)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_range_and_argmax_consistency(self):
        rng = np.random.default_rng(18)
        s_a = rng.normal(size=10)
        scores = [O.hoiscore if False else O.hoi_score(0.8, 0.6, float(s), 2.8) for s in s_a]
        assert all(0.0 < v <= 1.0 for v in scores)
        assert int(np.argmax(scores)) == int(np.argmax(s_a))

    def test_score_bounds_validated(self):
        with pytest.raises(ParameterError):
            O.hoi_score(1.2, 0.5, 0.0, 1.0)
