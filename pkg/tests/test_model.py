import io

import numpy as np
import pytest

from gcnjem import model as md
from gcnjem.autodiff import Tape, finite_difference_check, relu, row_log_sum_exp
from gcnjem.exceptions import (
    CorruptMagic,
    IndexOutOfRange,
    NonFiniteLoss,
    TruncatedFile,
    ZeroNormalizer,
)
from gcnjem.graph import SparseAdjacency

from conftest import normalized, random_symmetric_graph


def identity_adjacency(n):
    return SparseAdjacency.from_dense(np.eye(n))


class TestForward:
    def test_zero_weights(self, rng):
        params = md.GcnParams(w0=np.zeros((4, 3)), w1=np.zeros((3, 2)))
        logits = md.forward(identity_adjacency(5), rng.standard_normal((5, 4)), params)
        np.testing.assert_array_equal(logits, np.zeros((5, 2)))

    def test_single_node_reduces_to_mlp(self, rng):
        x = rng.standard_normal((1, 4))
        params = md.GcnParams(w0=rng.standard_normal((4, 3)),
                              w1=rng.standard_normal((3, 2)))
        logits = md.forward(identity_adjacency(1), x, params)
        np.testing.assert_allclose(logits, relu(x @ params.w0) @ params.w1, atol=1e-15)

    def test_dense_composition_oracle(self, rng):
        n, f, h, k = 12, 7, 5, 3
        a = normalized(random_symmetric_graph(n, 0.3, rng))
        x = rng.standard_normal((n, f))
        params = md.GcnParams(w0=rng.standard_normal((f, h)),
                              w1=rng.standard_normal((h, k)))
        dense = a.to_dense()
        expected = dense @ relu(dense @ x @ params.w0) @ params.w1
        np.testing.assert_allclose(md.forward(a, x, params), expected, atol=1e-12)

    def test_tape_path_matches_plain(self, rng):
        n, f, h, k = 9, 4, 3, 2
        a = normalized(random_symmetric_graph(n, 0.4, rng))
        x = rng.standard_normal((n, f))
        params = md.GcnParams(w0=rng.standard_normal((f, h)),
                              w1=rng.standard_normal((h, k)))
        tape = Tape()
        logits = md.forward_on_tape(tape, a, tape.leaf(x), tape.leaf(params.w0),
                                    tape.leaf(params.w1))
        np.testing.assert_array_equal(logits.value, md.forward(a, x, params))


class TestNodeEnergy:
    def test_zero_logits(self):
        assert md.node_energy(np.zeros((3, 7)), 1) == pytest.approx(-np.log(7.0))

    def test_dominated_row(self):
        assert md.node_energy(np.array([[5.0, -1e9]]), 0) == pytest.approx(-5.0)

    def test_shift_lowers_energy_exactly(self, rng):
        logits = rng.standard_normal((4, 5))
        c = 1.7
        shifted = logits.copy()
        shifted[2] += c
        gap = md.node_energy(shifted, 2) - (md.node_energy(logits, 2) - c)
        assert abs(gap) <= 1e-12

    def test_index_error(self):
        with pytest.raises(IndexOutOfRange):
            md.node_energy(np.zeros((3, 2)), 3)

    def test_energy_is_negated_row_lse(self, rng):
        logits = rng.standard_normal((6, 4)) * 10
        lse = row_log_sum_exp(logits)
        for i in range(6):
            assert abs(md.node_energy(logits, i) + lse[i, 0]) <= 1e-15


class TestGraphEnergy:
    def test_all_zero(self):
        assert md.graph_energy(np.zeros((5, 3))) == pytest.approx(np.log(15.0))

    def test_single_node(self, rng):
        logits = rng.standard_normal((1, 4))
        assert md.graph_energy(logits) == pytest.approx(
            float(row_log_sum_exp(logits)[0, 0]), abs=1e-12)

    def test_bounds_against_per_node(self, rng):
        for _ in range(10):
            logits = rng.standard_normal((7, 3)) * 5
            report = md.energy_report(logits)
            top = report.per_node_lse.max()
            assert report.graph_lse >= top - 1e-12
            assert report.graph_lse <= top + np.log(7.0) + 1e-12


class TestClassificationLoss:
    def test_uniform(self):
        assert md.classification_loss(np.zeros((3, 4)), [0, 1, 2],
                                      np.ones(3, bool)) == pytest.approx(np.log(4.0))

    def test_confident(self):
        labels = np.array([1, 3])
        logits = 20.0 * np.eye(4)[labels]
        assert md.classification_loss(logits, labels, [0, 1]) < 1e-8

    def test_oracle(self, rng):
        from gcnjem.autodiff import softmax_rows
        logits = rng.standard_normal((6, 3))
        labels = rng.integers(0, 3, 6)
        mask = np.ones(6, bool)
        oracle = float(np.mean(-np.log(softmax_rows(logits)[np.arange(6), labels])))
        assert md.classification_loss(logits, labels, mask) == pytest.approx(oracle, abs=1e-12)


class TestGenerativeLoss:
    def test_identical_inputs_zero(self, rng):
        logits = rng.standard_normal((6, 3))
        z = md.graph_energy(logits)
        assert md.generative_loss(logits, logits, [0, 2, 5], z, z) == 0.0

    def test_forced_arithmetic(self):
        # Single-class rows make the per-node log-sum-exp equal the logit.
        assert md.generative_loss(np.array([[2.0]]), np.array([[1.0]]),
                                  [0], 4.0, 4.0) == pytest.approx(0.25)

    def test_direct_recomputation(self, rng):
        lo, lg = rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
        idx = [1, 3, 6]
        z_clf, z_gen = 2.3, -1.7
        acc = 0.0
        for i in idx:
            acc += float(row_log_sum_exp(lo[i:i + 1])[0, 0]) / z_clf
            acc -= float(row_log_sum_exp(lg[i:i + 1])[0, 0]) / z_gen
        assert md.generative_loss(lo, lg, idx, z_clf, z_gen) == pytest.approx(abs(acc), abs=1e-12)

    def test_zero_normalizer(self, rng):
        logits = rng.standard_normal((4, 2))
        with pytest.raises(ZeroNormalizer):
            md.generative_loss(logits, logits, [0], 0.0, 1.0)

    def test_permutation_invariance(self, rng):
        lo, lg = rng.standard_normal((9, 3)), rng.standard_normal((9, 3))
        idx = np.array([0, 4, 7, 8])
        perm = idx[[2, 0, 3, 1]]
        a = md.generative_loss(lo, lg, idx, 3.0, 5.0)
        b = md.generative_loss(lo, lg, perm, 3.0, 5.0)
        assert a == pytest.approx(b, abs=1e-12)


class TestOrthogonalityPenalty:
    def test_identity_weights(self):
        params = md.GcnParams(w0=np.eye(4), w1=np.eye(4))
        assert md.orthogonality_penalty(params) == 0.0

    def test_scaled_identity(self):
        d = 5
        params = md.GcnParams(w0=2.0 * np.eye(d), w1=np.eye(d))
        assert md.orthogonality_penalty(params) == pytest.approx(3.0 * np.sqrt(d))

    def test_frobenius_definition_oracle(self, rng):
        w0 = rng.standard_normal((5, 3))
        w1 = np.eye(3)
        gram = w0.T @ w0 - np.eye(3)
        oracle = np.sqrt(sum(gram[i, j] ** 2 for i in range(3) for j in range(3)))
        params = md.GcnParams(w0=w0, w1=w1)
        assert md.orthogonality_penalty(params) == pytest.approx(oracle, abs=1e-12)

    def test_zero_iff_orthonormal(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 4)))
        ortho = md.GcnParams(w0=q, w1=np.eye(4))
        assert md.orthogonality_penalty(ortho) <= 1e-10
        skew = md.GcnParams(w0=q + 0.1, w1=np.eye(4))
        assert md.orthogonality_penalty(skew) > 1e-10
        # forward direction: zero penalty implies orthonormal columns
        gram = q.T @ q
        assert np.abs(gram - np.eye(4)).max() <= 1e-10


class TestTotalLoss:
    def test_weight_zero(self):
        assert md.total_loss(1.0, 0.5, 7.0, 0.0) == pytest.approx(1.5)

    def test_weighted(self):
        assert md.total_loss(1.0, 0.5, 2.0, 0.1) == pytest.approx(1.7)

    def test_non_finite(self):
        with pytest.raises(NonFiniteLoss):
            md.total_loss(np.inf, 0.0, 0.0, 0.0)

    def test_gradient_reaches_all_terms(self, rng):
        # Each term must contribute to the combined gradient.
        tape = Tape()
        w = tape.leaf(rng.standard_normal((4, 3)), requires_grad=True)
        col = tape.row_log_sum_exp(w)
        l1 = tape.index_sum(col, np.array([0]), 1.0)
        l2 = tape.sum_of_squares(w)
        l3 = tape.gram_identity_frobenius(w)
        tape.combine([l1, l2, l3], [1.0, 1.0, 0.25])
        assert finite_difference_check(tape, w, 1e-5) <= 1e-4


class TestPredict:
    def test_derived_confidence(self):
        classes, conf = md.predict(np.array([[3.0, 1.0, 1.0]]))
        assert classes[0] == 0
        expected = np.exp(3.0) / (np.exp(3.0) + 2.0 * np.exp(1.0))
        assert conf[0] == pytest.approx(expected, abs=1e-12)

    def test_uniform_tie_break(self):
        classes, conf = md.predict(np.zeros((1, 5)))
        assert classes[0] == 0
        assert conf[0] == pytest.approx(0.2)

    def test_shift_invariance(self, rng):
        logits = rng.standard_normal((6, 4))
        c1, p1 = md.predict(logits)
        c2, p2 = md.predict(logits + 3.7)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_allclose(p1, p2, atol=1e-12)

    def test_confidence_range(self, rng):
        _, conf = md.predict(rng.standard_normal((50, 4)) * 10)
        assert conf.min() >= 0.25 - 1e-12
        assert conf.max() <= 1.0 + 1e-12


class TestParamsCheckpoint:
    def test_roundtrip(self, rng):
        params = md.GcnParams(w0=rng.standard_normal((4, 3)),
                              w1=rng.standard_normal((3, 2)))
        buf = io.BytesIO()
        md.write_params(buf, params)
        buf.seek(0)
        loaded = md.read_params(buf)
        np.testing.assert_array_equal(loaded.w0, params.w0)
        np.testing.assert_array_equal(loaded.w1, params.w1)

    def test_corrupt_magic(self):
        with pytest.raises(CorruptMagic):
            md.read_params(io.BytesIO(b"NOPE" + b"\x00" * 40))

    def test_truncated(self, rng):
        params = md.GcnParams(w0=rng.standard_normal((4, 3)),
                              w1=rng.standard_normal((3, 2)))
        buf = io.BytesIO()
        md.write_params(buf, params)
        with pytest.raises(TruncatedFile):
            md.read_params(io.BytesIO(buf.getvalue()[:-4]))
