import numpy as np
import pytest

from dp2guard.attacks import (
    FangSpec,
    MinMaxSpec,
    MinSumSpec,
    fang_attack,
    fang_candidate,
    label_flip,
    minmax_attack,
    minsum_attack,
    perturbation_direction,
)
from dp2guard.data import synth_dataset
from dp2guard.errors import DegenerateError
from dp2guard.numeric import substream


def max_pairwise_distance(grads: np.ndarray) -> float:
    diffs = grads[:, None, :] - grads[None, :, :]
    return float(np.sqrt((diffs**2).sum(axis=2)).max())


def worst_case_distance(grads: np.ndarray, candidate: np.ndarray) -> float:
    return float(np.linalg.norm(grads - candidate, axis=1).max())


def sum_sq_budget(grads: np.ndarray) -> float:
    diffs = grads[:, None, :] - grads[None, :, :]
    return float((diffs**2).sum(axis=2).sum(axis=1).max())


def sum_sq_distance(grads: np.ndarray, candidate: np.ndarray) -> float:
    return float(((grads - candidate) ** 2).sum())


def _recover_gamma(crafted: np.ndarray, grads: np.ndarray, direction: str) -> float:
    mean = grads.mean(axis=0)
    unit = perturbation_direction(mean, direction)
    return float((crafted - mean) @ unit)


class TestLabelFlip:
    def test_offset_arithmetic(self):
        # label 2 with offset 5 in 10 classes becomes 7
        assert (2 + 5) % 10 == 7
        data = synth_dataset(50, 3, 10, 1.0, substream(0, "lf"))
        flipped = label_flip(data, 5, 1.0, substream(0, "r"))
        assert np.array_equal(flipped.labels, (data.labels + 5) % 10)

    def test_flipped_count_is_floor(self):
        data = synth_dataset(101, 3, 10, 1.0, substream(1, "lf"))
        flipped = label_flip(data, 3, 0.3, substream(1, "r"))
        assert int(np.sum(flipped.labels != data.labels)) == int(0.3 * 101)

    def test_features_untouched(self):
        data = synth_dataset(40, 3, 10, 1.0, substream(2, "lf"))
        flipped = label_flip(data, 1, 0.5, substream(2, "r"))
        assert np.array_equal(flipped.features, data.features)

    def test_offset_bounds(self):
        data = synth_dataset(10, 3, 10, 1.0, substream(3, "lf"))
        with pytest.raises(ValueError):
            label_flip(data, 10, 0.3, substream(3, "r"))
        with pytest.raises(ValueError):
            label_flip(data, 0, 0.3, substream(3, "r"))


class TestFang:
    def test_candidate_formula(self):
        got = fang_candidate(np.array([1.0, -2.0]), 1.0)
        assert np.array_equal(got, [0.0, -1.0])

    def test_accept_all_returns_initial_lambda(self):
        benign = [np.array([1.0, -2.0]), np.array([3.0, -4.0])]
        crafted = fang_attack(benign, FangSpec(), lambda g: True)
        mean = np.mean(benign, axis=0)
        assert np.allclose(crafted, mean - 10.0 * np.sign(mean))

    def test_reject_all_bottoms_out_near_mean(self):
        benign = [np.array([1.0, -2.0]), np.array([3.0, -4.0])]
        crafted = fang_attack(benign, FangSpec(), lambda g: False)
        mean = np.mean(benign, axis=0)
        assert np.allclose(crafted, mean - 1e-5 * np.sign(mean))
        assert np.max(np.abs(crafted - mean)) <= 1e-5 * (1 + 1e-6)

    def test_halving_stops_at_first_accept(self):
        benign = [np.array([4.0, 4.0])]
        seen = []

        def accept(candidate):
            lam = float(np.abs(candidate - 4.0).max())
            seen.append(lam)
            return lam <= 2.6

        crafted = fang_attack(benign, FangSpec(), accept)
        assert seen == [10.0, 5.0, 2.5]
        assert np.allclose(crafted, [1.5, 1.5])


class TestDirections:
    def test_mean_directions(self):
        mean = np.array([3.0, 4.0])
        plus = perturbation_direction(mean, "+mean")
        assert np.allclose(plus, [0.6, 0.8])
        assert np.allclose(perturbation_direction(mean, "-mean"), [-0.6, -0.8])

    def test_sign_direction_unit(self):
        got = perturbation_direction(np.array([3.0, -0.1, 0.0]), "sign")
        assert np.isclose(np.linalg.norm(got), 1.0)
        assert got[0] > 0 > got[1] and got[2] == 0

    def test_unknown_rejected(self):
        with pytest.raises(ValueError):
            perturbation_direction(np.ones(2), "up")


@pytest.mark.parametrize("direction", ["+mean", "-mean", "sign"])
class TestMinMax:
    def test_constraint_and_optimality(self, direction):
        spec = MinMaxSpec(direction=direction)
        rng = substream(11, "mm", direction)
        for _ in range(25):
            grads = rng.standard_normal((6, 5)) + rng.standard_normal(5)
            crafted = minmax_attack(list(grads), spec)
            bound = max_pairwise_distance(grads)
            assert worst_case_distance(grads, crafted) <= bound + 1e-9
            gamma = _recover_gamma(crafted, grads, direction)
            unit = perturbation_direction(grads.mean(axis=0), direction)
            pushed = grads.mean(axis=0) + (gamma + 2 * spec.gamma_min) * unit
            assert worst_case_distance(grads, pushed) > bound

    def test_identical_benign_returns_mean(self, direction):
        grads = [np.array([1.0, 2.0])] * 4
        crafted = minmax_attack(grads, MinMaxSpec(direction=direction))
        assert np.allclose(crafted, [1.0, 2.0])

    def test_symmetric_pair_feasible(self, direction):
        u = np.array([2.0, -1.0, 0.5])
        grads = np.stack([-u, u])
        crafted = minmax_attack(list(grads), MinMaxSpec(direction=direction))
        assert worst_case_distance(grads, crafted) <= 2 * np.linalg.norm(u) + 1e-9


@pytest.mark.parametrize("direction", ["+mean", "-mean", "sign"])
class TestMinSum:
    def test_constraint_and_optimality(self, direction):
        spec = MinSumSpec(direction=direction)
        rng = substream(12, "ms", direction)
        for _ in range(25):
            grads = rng.standard_normal((6, 5)) + rng.standard_normal(5)
            crafted = minsum_attack(list(grads), spec)
            budget = sum_sq_budget(grads)
            assert sum_sq_distance(grads, crafted) <= budget + 1e-9
            gamma = _recover_gamma(crafted, grads, direction)
            unit = perturbation_direction(grads.mean(axis=0), direction)
            pushed = grads.mean(axis=0) + (gamma + 2 * spec.gamma_min) * unit
            assert sum_sq_distance(grads, pushed) > budget

    def test_identical_benign_returns_mean(self, direction):
        grads = [np.array([1.0, 2.0])] * 4
        crafted = minsum_attack(grads, MinSumSpec(direction=direction))
        assert np.allclose(crafted, [1.0, 2.0])

    def test_symmetric_pair_mean_within_budget(self, direction):
        # At the mean, total squared distance is 2||u||^2 against a budget
        # of 4||u||^2, so a strictly positive scale must exist.
        u = np.array([1.0, 3.0])
        grads = np.stack([-u, u])
        assert sum_sq_distance(grads, grads.mean(axis=0)) == pytest.approx(
            2 * np.linalg.norm(u) ** 2)
        assert sum_sq_budget(grads) == pytest.approx(4 * np.linalg.norm(u) ** 2)
        crafted = minsum_attack(list(grads), MinSumSpec(direction=direction))
        gamma = _recover_gamma(crafted, grads, direction)
        assert gamma > 0 or not np.any(perturbation_direction(grads.mean(axis=0),
                                                              direction))


class TestScaleSearchShared:
    def test_iteration_bound(self):
        # The scale search converges in about log2(gamma0/gamma_min) probes
        # plus the bracket expansions.
        from dp2guard.attacks import _largest_feasible_scale

        for target in (0.003, 0.8, 7.3, 42.0, 3000.0):
            calls = {"n": 0}

            def feasible(gamma, _t=target):
                calls["n"] += 1
                return gamma <= _t

            got = _largest_feasible_scale(feasible, 10.0, 5.0, 1e-5)
            assert target - 1e-5 <= got <= target
            expansions = max(0, int(np.ceil(np.log2(max(target / 10.0, 1)))) + 2)
            budget = int(np.ceil(np.log2((10.0 + target) / 1e-5))) + expansions + 3
            assert calls["n"] <= budget, (target, calls["n"], budget)

    def test_needs_two_gradients(self):
        with pytest.raises(DegenerateError):
            minmax_attack([np.ones(3)], MinMaxSpec())
        with pytest.raises(DegenerateError):
            minsum_attack([np.ones(3)], MinSumSpec())

    def test_deterministic(self):
        rng = substream(13, "det")
        grads = list(rng.standard_normal((5, 8)))
        a = minmax_attack(grads, MinMaxSpec())
        b = minmax_attack(grads, MinMaxSpec())
        assert np.array_equal(a, b)

    def test_expansion_beyond_initial_gamma(self):
        # A huge benign diameter forces the bracket to expand above 10.
        grads = [np.array([100.0, 0.0]), np.array([-100.0, 0.0]),
                 np.array([0.0, 150.0])]
        crafted = minmax_attack(grads, MinMaxSpec())
        gamma = _recover_gamma(crafted, np.asarray(grads), "+mean")
        assert gamma > 10.0
