import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gaspnet.objectives import (
    circular_variance,
    exact_match_accuracy,
    head_accuracy,
    head_cross_entropy,
    mask_groups,
    partial_match_accuracy,
    synchrony_loss,
    top2_predictions,
    total_loss,
    two_hot_cross_entropy,
)
from reference import oracle_synchrony_loss

LN10 = math.log(10.0)


class TestTwoHotCrossEntropy:
    def test_uniform_logits(self):
        loss = two_hot_cross_entropy(torch.zeros(10), torch.tensor([3, 7]))
        assert loss.item() == pytest.approx(LN10, abs=1e-6)

    def test_perfect_split_limit(self):
        logits = torch.full((10,), -40.0)
        logits[2] = logits[5] = 40.0
        loss = two_hot_cross_entropy(logits, torch.tensor([2, 5]))
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-6)

    def test_label_order_symmetry(self):
        logits = torch.randn(10)
        a = two_hot_cross_entropy(logits, torch.tensor([1, 8]))
        b = two_hot_cross_entropy(logits, torch.tensor([8, 1]))
        assert torch.allclose(a, b)

    def test_equal_labels_rejected(self):
        with pytest.raises(ValueError):
            two_hot_cross_entropy(torch.zeros(10), torch.tensor([4, 4]))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            two_hot_cross_entropy(torch.zeros(10), torch.tensor([0, 10]))


class TestHeadCrossEntropy:
    def test_both_uniform(self):
        logits = {"cifar": torch.zeros(1, 10), "item": torch.zeros(1, 10)}
        labels = {"cifar": torch.tensor([2]), "item": torch.tensor([5])}
        loss = head_cross_entropy(logits, labels)
        assert loss.item() == pytest.approx(2 * LN10, abs=1e-6)

    def test_one_perfect_one_uniform(self):
        sharp = torch.full((1, 10), -50.0)
        sharp[0, 4] = 50.0
        logits = {"cifar": sharp, "item": torch.zeros(1, 10)}
        labels = {"cifar": torch.tensor([4]), "item": torch.tensor([0])}
        loss = head_cross_entropy(logits, labels)
        assert loss.item() == pytest.approx(LN10, abs=1e-5)

    def test_logit_shift_invariance(self):
        logits = torch.randn(3, 10)
        labels = {"cifar": torch.tensor([1, 2, 3]), "item": torch.tensor([4, 5, 6])}
        a = head_cross_entropy({"cifar": logits, "item": logits}, labels)
        b = head_cross_entropy({"cifar": logits + 7.0, "item": logits}, labels)
        assert torch.allclose(a, b, atol=1e-5)

    def test_head_mismatch(self):
        with pytest.raises(ValueError):
            head_cross_entropy({"cifar": torch.zeros(1, 10)}, {"item": torch.tensor([0])})


class TestCircularVariance:
    def test_identical(self):
        assert circular_variance(torch.full((7,), 0.4)).item() == pytest.approx(0.0, abs=1e-7)

    def test_antiphase(self):
        assert circular_variance(torch.tensor([0.0, math.pi])).item() == pytest.approx(1.0, abs=1e-7)

    def test_three_thirds(self):
        phi = torch.tensor([0.0, 2 * math.pi / 3, 4 * math.pi / 3])
        assert circular_variance(phi).item() == pytest.approx(1.0, abs=1e-7)

    def test_empty(self):
        with pytest.raises(ValueError):
            circular_variance(torch.zeros(0))


class TestSynchronyLoss:
    def test_two_uniform_antiphase_groups(self):
        phi = torch.tensor([0.0] * 4 + [math.pi] * 4, dtype=torch.float64)
        groups = torch.tensor([0] * 4 + [1] * 4)
        assert synchrony_loss(phi, groups).item() == pytest.approx(0.0, abs=1e-6)

    def test_single_uniform_group(self):
        phi = torch.full((10,), 1.1, dtype=torch.float64)
        groups = torch.zeros(10, dtype=torch.long)
        assert synchrony_loss(phi, groups).item() == pytest.approx(0.25, abs=1e-9)

    def test_three_groups_at_thirds(self):
        phi = torch.tensor(
            [0.0] * 3 + [2 * math.pi / 3] * 3 + [4 * math.pi / 3] * 3, dtype=torch.float64
        )
        groups = torch.tensor([0] * 3 + [1] * 3 + [2] * 3)
        assert synchrony_loss(phi, groups).item() == pytest.approx(0.0, abs=1e-9)

    def test_nonnegative_and_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            phi = rng.uniform(0, 2 * math.pi, 40)
            groups = rng.integers(0, 3, 40)
            fast = synchrony_loss(torch.tensor(phi), torch.tensor(groups)).item()
            slow = oracle_synchrony_loss(phi, groups)
            assert fast == pytest.approx(slow, abs=1e-9)
            assert fast >= 0.0

    @given(st.floats(-10, 10))
    @settings(max_examples=20, deadline=None)
    def test_global_shift_invariance(self, shift):
        rng = np.random.default_rng(4)
        phi = torch.tensor(rng.uniform(0, 2 * math.pi, 24))
        groups = torch.tensor(rng.integers(0, 3, 24))
        a = synchrony_loss(phi, groups).item()
        b = synchrony_loss(phi + shift, groups).item()
        assert a == pytest.approx(b, abs=1e-8)

    def test_missing_requested_group(self):
        phi = torch.zeros(5, dtype=torch.float64)
        groups = torch.zeros(5, dtype=torch.long)
        with pytest.raises(ValueError):
            synchrony_loss(phi, groups, num_groups=2)

    def test_batched_mean(self):
        phi = torch.rand(3, 16, dtype=torch.float64)
        groups = torch.randint(0, 2, (3, 16))
        batched = synchrony_loss(phi, groups).item()
        singles = [synchrony_loss(phi[i], groups[i]).item() for i in range(3)]
        assert batched == pytest.approx(float(np.mean(singles)), abs=1e-9)

    def test_mask_groups_flatten(self):
        mask = np.zeros((2, 4, 4), dtype=np.uint8)
        mask[0, 1, 2] = 1
        groups = mask_groups(mask)
        assert groups.shape == (2, 16)
        assert groups[0, 6].item() == 1


class TestTotalLoss:
    def test_omega_zero(self):
        c = torch.tensor(1.5)
        s = torch.tensor(0.7)
        assert total_loss(c, s, 0.0).item() == pytest.approx(1.5)

    @pytest.mark.parametrize("omega", [0.5, 10.0])
    def test_weighted_sum(self, omega):
        c = torch.tensor(1.5)
        s = torch.tensor(0.7)
        assert total_loss(c, s, omega).item() == pytest.approx(1.5 + omega * 0.7)


class TestAccuracies:
    def test_exact_match_hit_and_miss(self):
        logits = torch.zeros(10)
        logits[3] = 3.0
        logits[7] = 2.0
        assert exact_match_accuracy(logits, torch.tensor([3, 7])).item() == 1.0
        assert exact_match_accuracy(logits, torch.tensor([3, 9])).item() == 0.0

    def test_rank2_tie_lower_index(self):
        logits = torch.zeros(10)
        logits[5] = 4.0
        logits[2] = 1.0
        logits[8] = 1.0  # tie at rank 2 -> class 2 wins
        top2 = top2_predictions(logits)
        assert top2.tolist() == [5, 2]
        assert exact_match_accuracy(logits, torch.tensor([5, 2])).item() == 1.0
        assert exact_match_accuracy(logits, torch.tensor([5, 8])).item() == 0.0

    @given(st.floats(0.1, 5.0), st.floats(-3, 3))
    @settings(max_examples=20, deadline=None)
    def test_monotone_transform_invariance(self, scale, offset):
        rng = np.random.default_rng(11)
        logits = torch.tensor(rng.standard_normal(10))
        labels = torch.tensor([0, 1])
        a = exact_match_accuracy(logits, labels)
        b = exact_match_accuracy(logits * scale + offset, labels)
        assert torch.equal(a, b)

    def test_partial_match(self):
        logits = torch.zeros(10)
        logits[3] = 3.0
        logits[9] = 2.0
        assert partial_match_accuracy(logits, torch.tensor([3, 7])).item() == 0.5
        assert partial_match_accuracy(logits, torch.tensor([3, 9])).item() == 1.0
        assert partial_match_accuracy(logits, torch.tensor([1, 7])).item() == 0.0

    def test_head_accuracy_separate(self):
        logits = {
            "cifar": torch.tensor([[0.0, 5.0, 0.0]]),
            "item": torch.tensor([[5.0, 0.0, 0.0]]),
        }
        labels = {"cifar": torch.tensor([1]), "item": torch.tensor([2])}
        accs = head_accuracy(logits, labels)
        assert accs["cifar"].item() == 1.0
        assert accs["item"].item() == 0.0
