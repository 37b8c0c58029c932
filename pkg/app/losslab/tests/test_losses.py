"""
Tests for the batch losses: values, reductions and sign structure.
"""
import math

import numpy as np
from hypothesis import given, settings, strategies as st

from django.test import SimpleTestCase

from losslab.distribution import outside_mask, softmax_rows
from losslab.exceptions import InputError, ShapeError
from losslab.losses import (
    KMode,
    LossKind,
    LossWeights,
    amr_loss,
    compute_loss,
    cross_entropy_loss,
    mean_loss,
    mv_loss,
    residue_entropy,
    residue_loss,
    variance_loss,
)
from losslab.numerics import RngStream


def logits_of(*probs):
    """Logits whose softmax is ``probs`` (zeros become -1000)."""
    probs = np.array(probs, dtype=np.float64)
    return np.where(probs > 0, np.log(np.maximum(probs, 1e-300)), -1000.0)[np.newaxis, :]


def one_hot_logits(labels, n_classes, margin=50.0):
    logits = np.zeros((len(labels), n_classes))
    logits[np.arange(len(labels)), np.asarray(labels) - 1] = margin
    return logits


def random_batch(seed, n=4, n_classes=70):
    rng = RngStream(seed)
    return rng.uniform(-3, 3, size=(n, n_classes)), rng.integers(1, n_classes, size=n)


class LossTypeTests(SimpleTestCase):
    """Test loss weight and K mode values."""

    def test_weights_reject_negative(self):
        """Test negative loss weights are rejected."""
        with self.assertRaises(InputError):
            LossWeights(-0.1, 0.0)
        with self.assertRaises(InputError):
            LossWeights(0.0, float('nan'))

    def test_kmode_parse(self):
        """Test parsing K modes and their errors."""
        self.assertTrue(KMode.parse('adaptive').is_adaptive)
        self.assertEqual(KMode.parse(' 5 '), KMode.fixed(5))
        self.assertEqual(str(KMode.fixed(13)), '13')
        with self.assertRaisesRegex(InputError, "'adaptive' or an integer"):
            KMode.parse('five')
        with self.assertRaisesRegex(InputError, 'positive integer'):
            KMode.parse('0')
        with self.assertRaises(InputError):
            KMode.fixed(0)

    def test_kmode_range_checked_at_call_time(self):
        """Test K is checked against the class count when used."""
        logits, labels = random_batch(0, n_classes=6)

        with self.assertRaises(InputError):
            residue_loss(logits, labels, KMode.fixed(7))

    def test_selectors(self):
        """Test the loss selectors and which use K."""
        self.assertEqual(
            [kind.value for kind in LossKind],
            ['softmax', 'mean+softmax', 'variance+softmax', 'mean-variance',
             'residue+softmax', 'amr'],
        )
        self.assertTrue(LossKind.AMR.uses_k)
        self.assertFalse(LossKind.MEAN_VARIANCE.uses_k)


class CrossEntropyTests(SimpleTestCase):
    """Test the softmax loss."""

    def test_perfect_prediction(self):
        """Test a confident correct prediction has near zero loss."""
        labels = [3, 1, 7]

        self.assertLess(cross_entropy_loss(one_hot_logits(labels, 7), labels).value, 1e-9)

    def test_uniform(self):
        """Test cross-entropy of a uniform distribution."""
        value = cross_entropy_loss(np.zeros((3, 70)), [1, 35, 70]).value

        self.assertAlmostEqual(value, math.log(70), places=12)

    def test_gradient_closed_form(self):
        """Test the gradient is softmax minus one-hot over N."""
        logits, labels = random_batch(1)
        term = cross_entropy_loss(logits, labels)
        expected = softmax_rows(logits)
        expected[np.arange(4), labels - 1] -= 1.0

        np.testing.assert_allclose(term.grad, expected / 4, rtol=0, atol=1e-15)

    def test_label_out_of_range(self):
        """Test labels outside the classes are rejected."""
        with self.assertRaises(InputError):
            cross_entropy_loss(np.zeros((1, 5)), [6])

    def test_label_count_mismatch(self):
        """Test the label count must match the rows."""
        with self.assertRaises(ShapeError):
            cross_entropy_loss(np.zeros((2, 5)), [1])


class MeanLossTests(SimpleTestCase):
    """Test the mean loss."""

    def test_exact_expectation(self):
        """Test the mean loss at an exact expectation."""
        labels = [2, 9, 4]

        self.assertLess(mean_loss(one_hot_logits(labels, 10), labels).value, 1e-9)

    def test_direct_evaluation(self):
        """Test the mean loss against direct evaluation."""
        value = mean_loss(logits_of(0.2, 0.5, 0.3), [2]).value

        self.assertAlmostEqual(value, 0.005, places=12)


class ResidueLossTests(SimpleTestCase):
    """Test the residue loss."""

    def test_empty_residue(self):
        """Test K equal to L leaves no residue."""
        logits = logits_of(0.6, 0.4, 0.0, 0.0)

        term = residue_loss(logits, [1], KMode.fixed(2))

        self.assertEqual(term.value, 0.0)
        self.assertTrue(np.all(np.isfinite(term.grad)))

    def test_direct_summation(self):
        """Test the loss against direct summation."""
        term = residue_loss(logits_of(0.5, 0.3, 0.15, 0.05), [1], KMode.fixed(2))
        expected = -(0.15 * math.log(0.15) + 0.05 * math.log(0.05))

        self.assertAlmostEqual(term.value, expected, places=12)
        self.assertAlmostEqual(term.value, 0.43437, places=5)

    def test_per_sample_k(self):
        """Test per-sample K for fixed and adaptive modes."""
        logits, labels = random_batch(2, n=6, n_classes=10)

        fixed = residue_loss(logits, labels, KMode.fixed(4))
        adaptive = residue_loss(logits, labels, KMode.adaptive())

        np.testing.assert_array_equal(fixed.per_sample_k, [4] * 6)
        np.testing.assert_array_equal(
            adaptive.per_sample_k, np.maximum(adaptive.per_sample_rank, 2)
        )

    def test_frozen_mask_shape_checked(self):
        """Test a frozen mask must match the logits."""
        logits, labels = random_batch(3, n=2, n_classes=5)

        with self.assertRaises(ShapeError):
            residue_loss(logits, labels, KMode.adaptive(), outside=np.zeros((2, 4), bool))

    def test_extreme_logits_stay_finite(self):
        """Test extreme logits keep the loss finite."""
        logits = np.array([[800.0, -800.0, 0.0, -800.0, 5.0]])

        term = residue_loss(logits, [2], KMode.adaptive())

        self.assertTrue(math.isfinite(term.value))
        self.assertTrue(np.all(np.isfinite(term.grad)))


def simplex_grid(n_classes, steps=20):
    """Every distribution over ``n_classes`` with masses on a 1/steps grid."""
    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for head in range(total + 1):
            for tail in compositions(total - head, parts - 1):
                yield (head,) + tail

    return np.array(list(compositions(steps, n_classes)), dtype=np.float64) / steps


def direct_residue(probs, k):
    ranked = sorted(range(len(probs)), key=lambda j: (-probs[j], j))
    return -sum(probs[j] * math.log(probs[j]) for j in ranked[k:] if probs[j] > 0)


class ResidueOracleTests(SimpleTestCase):
    """Compare the residue loss with direct summation on a simplex grid."""

    def test_grid(self):
        """Test the residue on a grid of small simplexes."""
        for n_classes in (3, 4, 5):
            grid = simplex_grid(n_classes)
            logits = np.where(grid > 0, np.log(np.maximum(grid, 1e-300)), -1000.0)
            probs = softmax_rows(logits)
            labels = np.ones(len(grid), dtype=np.int64)
            for k in range(1, n_classes + 1):
                term = residue_loss(logits, labels, KMode.fixed(k))
                for row in range(len(grid)):
                    self.assertAlmostEqual(
                        term.per_sample[row], direct_residue(probs[row], k),
                        delta=1e-12,
                    )

    def test_entropy_on_raw_grid(self):
        """Test the residue entropy on raw grid points."""
        grid = simplex_grid(4)
        for k in range(1, 5):
            values = residue_entropy(grid, outside_mask(grid, k))
            for row in range(len(grid)):
                self.assertAlmostEqual(
                    values[row], direct_residue(grid[row], k), delta=1e-12
                )


class SignStructureTests(SimpleTestCase):
    """Test the probability-space partials behind the centralization argument."""

    def test_adaptive_label_partial_is_zero(self):
        """Test the label partial is zero with adaptive K."""
        rng = RngStream(10_000)
        logits = rng.uniform(-3, 3, size=(10_000, 70))
        labels = rng.integers(1, 70, size=10_000)

        term = residue_loss(logits, labels, KMode.adaptive())
        rows = np.arange(10_000)

        self.assertTrue(np.all(term.grad_probs[rows, labels - 1] == 0.0))
        self.assertTrue(np.all(term.per_sample_k >= 2))
        self.assertTrue(np.all(term.per_sample_rank <= term.per_sample_k))

    def test_outside_partial_positive_for_small_mass(self):
        """Test small outside masses get positive partials."""
        logits, labels = random_batch(5, n=3, n_classes=20)
        term = residue_loss(logits, labels, KMode.fixed(3))
        probs = softmax_rows(logits)
        outside = outside_mask(probs, 3)

        small = outside & (probs < math.exp(-1))
        self.assertTrue(np.all(term.grad_probs[small] > 0))
        np.testing.assert_allclose(
            term.grad_probs[small], -(1 + np.log(probs[small])) / 3, rtol=1e-14
        )

    def test_over_centralized_k_suppresses_label(self):
        """Test a too-small K pushes the label down."""
        probs = np.array([0.3, 0.25, 0.2, 0.15, 0.1])
        logits = np.log(probs)[np.newaxis, :]
        label = 4

        fixed = residue_loss(logits, [label], KMode.fixed(2))
        adaptive = residue_loss(logits, [label], KMode.adaptive())

        self.assertGreater(fixed.grad_probs[0, label - 1], 0.0)
        self.assertEqual(adaptive.grad_probs[0, label - 1], 0.0)

    def test_variance_suppresses_distant_label(self):
        """Test the variance term pushes a distant label down."""
        probs = np.array([0.1, 0.6, 0.25, 0.03, 0.01, 0.005, 0.003, 0.002])
        probs = probs / probs.sum()
        logits = np.log(probs)[np.newaxis, :]
        label = 8
        classes = np.arange(1, 9)
        m = probs @ classes
        var = probs @ (classes - m) ** 2
        self.assertGreater((label - m) ** 2, var)

        variance = variance_loss(logits)
        adaptive = residue_loss(logits, [label], KMode.adaptive())

        self.assertGreater(variance.grad_probs[0, label - 1], 0.0)
        self.assertAlmostEqual(
            variance.grad_probs[0, label - 1], (label - m) ** 2 - var, places=10
        )
        self.assertEqual(adaptive.grad_probs[0, label - 1], 0.0)


class VarianceLossTests(SimpleTestCase):
    """Test the variance loss."""

    def test_degenerate(self):
        """Test a one-hot distribution has zero variance."""
        self.assertLess(variance_loss(one_hot_logits([4, 2], 6)).value, 1e-9)

    def test_direct_summation(self):
        """Test the loss against direct summation."""
        self.assertAlmostEqual(
            variance_loss(logits_of(0.5, 0.0, 0.5)).value, 1.0, places=12
        )


class CombinedLossTests(SimpleTestCase):
    """Test the combined losses and the ablation selectors."""

    def test_amr_reduces_to_cross_entropy(self):
        """Test zero weights reduce to cross-entropy."""
        logits, labels = random_batch(6)

        breakdown = amr_loss(logits, labels, LossWeights(0, 0), KMode.adaptive())
        term = cross_entropy_loss(logits, labels)

        self.assertAlmostEqual(breakdown.total, term.value, delta=1e-12)
        np.testing.assert_array_equal(breakdown.grad_logits, term.grad)

    def test_amr_recomposition(self):
        """Test the combined loss recomposes from its terms."""
        logits, labels = random_batch(7)
        weights = LossWeights(0.2, 0.05)

        breakdown = amr_loss(logits, labels, weights, KMode.adaptive())
        expected = (
            cross_entropy_loss(logits, labels).value
            + 0.2 * mean_loss(logits, labels).value
            + 0.05 * residue_loss(logits, labels, KMode.adaptive()).value
        )

        self.assertAlmostEqual(breakdown.total, expected, delta=1e-12)
        self.assertAlmostEqual(breakdown.recomposed(), breakdown.total, delta=1e-10)
        self.assertEqual(len(breakdown.per_sample_residue), 4)
        self.assertTrue(np.all((breakdown.per_sample_k >= 1) & (breakdown.per_sample_k <= 70)))

    def test_mv_reduction(self):
        """Test mean-variance without variance matches mean+softmax."""
        logits, labels = random_batch(8)

        breakdown = mv_loss(logits, labels, LossWeights(0.2, 0.0))
        expected = amr_loss(logits, labels, LossWeights(0.2, 0.0), KMode.adaptive())

        self.assertAlmostEqual(breakdown.total, expected.total, delta=1e-12)
        self.assertEqual(breakdown.per_sample_k.size, 0)

    def test_mv_vanishes_at_label(self):
        """Test mean-variance vanishes at a confident label."""
        labels = [5, 1, 12]

        breakdown = mv_loss(one_hot_logits(labels, 12), labels, LossWeights(0.2, 0.05))

        self.assertLess(breakdown.total, 1e-8)

    def test_compute_loss_selectors(self):
        """Test each selector's total."""
        logits, labels = random_batch(9)
        weights = LossWeights(0.2, 0.05)
        kmode = KMode.adaptive()
        ce = cross_entropy_loss(logits, labels).value
        mean = mean_loss(logits, labels).value
        residue = residue_loss(logits, labels, kmode).value
        variance = variance_loss(logits).value
        expected = {
            LossKind.SOFTMAX: ce,
            LossKind.MEAN_SOFTMAX: ce + 0.2 * mean,
            LossKind.VARIANCE_SOFTMAX: ce + 0.05 * variance,
            LossKind.MEAN_VARIANCE: ce + 0.2 * mean + 0.05 * variance,
            LossKind.RESIDUE_SOFTMAX: ce + 0.05 * residue,
            LossKind.AMR: ce + 0.2 * mean + 0.05 * residue,
        }
        for kind, value in expected.items():
            breakdown = compute_loss(kind, logits, labels, weights, kmode)
            self.assertAlmostEqual(breakdown.total, value, delta=1e-12, msg=kind)
            self.assertAlmostEqual(breakdown.recomposed(), breakdown.total, delta=1e-10)

    def test_compute_loss_reports_only_active_terms(self):
        """Test rows leave the components they do not use at zero."""
        logits, labels = random_batch(11)
        weights = LossWeights(0.2, 0.05)
        kmode = KMode.fixed(3)

        mean_row = compute_loss(LossKind.MEAN_SOFTMAX, logits, labels, weights, kmode)
        variance_row = compute_loss(LossKind.VARIANCE_SOFTMAX, logits, labels, weights, kmode)
        residue_row = compute_loss(LossKind.RESIDUE_SOFTMAX, logits, labels, weights, kmode)

        self.assertEqual(mean_row.tail_term, 0.0)
        self.assertEqual(mean_row.weights, LossWeights(0.2, 0.0))
        self.assertEqual(mean_row.per_sample_k.size, 0)
        self.assertEqual(mean_row.per_sample_residue.size, 0)
        self.assertEqual(variance_row.mean_term, 0.0)
        self.assertEqual(variance_row.weights, LossWeights(0.0, 0.05))
        self.assertEqual(variance_row.per_sample_k.size, 0)
        self.assertEqual(residue_row.mean_term, 0.0)
        self.assertEqual(residue_row.weights, LossWeights(0.0, 0.05))
        np.testing.assert_array_equal(residue_row.per_sample_k, np.full(4, 3))
        for kind in LossKind:
            breakdown = compute_loss(kind, logits, labels, weights, kmode)
            self.assertEqual(breakdown.per_sample_k.size > 0, kind.uses_k, msg=kind)

    def test_compute_loss_accepts_selector_text(self):
        """Test selectors can be given as text."""
        logits, labels = random_batch(10)

        breakdown = compute_loss('softmax', logits, labels, LossWeights(), KMode.adaptive())

        self.assertEqual(breakdown.mean_term, 0.0)
        self.assertEqual(breakdown.tail_term, 0.0)

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(min_value=0, max_value=2 ** 32),
        st.integers(min_value=2, max_value=30),
        st.floats(0.1, 20.0),
    )
    def test_values_non_negative(self, seed, n_classes, scale):
        """Test every loss is non-negative."""
        rng = RngStream(seed)
        logits = rng.uniform(-scale, scale, size=(3, n_classes))
        labels = rng.integers(1, n_classes, size=3)
        weights = LossWeights(0.2, 0.05)

        for kmode in (KMode.adaptive(), KMode.fixed(1), KMode.fixed(n_classes)):
            self.assertGreaterEqual(residue_loss(logits, labels, kmode).value, 0.0)
            self.assertGreaterEqual(amr_loss(logits, labels, weights, kmode).total, 0.0)
        self.assertGreaterEqual(cross_entropy_loss(logits, labels).value, 0.0)
        self.assertGreaterEqual(mean_loss(logits, labels).value, 0.0)
        self.assertGreaterEqual(variance_loss(logits).value, -1e-12)
        self.assertGreaterEqual(mv_loss(logits, labels, weights).total, 0.0)
