"""Poisoning attack generators: label flipping plus the three adaptive
full-knowledge attacks (aggregate-opposing perturbation with an acceptance
oracle, and the max-distance / sum-of-squares bounded scale searches)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .errors import DegenerateError

GAMMA_INIT = 10.0
GAMMA_STEP = 5.0
GAMMA_MIN = 1e-5


@dataclass(frozen=True)
class LabelFlipSpec:
    kind: str = "label_flip"
    offset: int = 5
    fraction: float = 0.3


@dataclass(frozen=True)
class FangSpec:
    kind: str = "fang"
    lambda0: float = GAMMA_INIT
    gamma_min: float = GAMMA_MIN
    # "defense": the attacker simulates the deployed aggregation rule and
    # tunes the perturbation to be accepted; "accept_all": non-adaptive
    # attacker submits the full-strength perturbation.
    oracle: str = "defense"


@dataclass(frozen=True)
class MinMaxSpec:
    kind: str = "minmax"
    gamma0: float = GAMMA_INIT
    step: float = GAMMA_STEP
    gamma_min: float = GAMMA_MIN
    direction: str = "+mean"


@dataclass(frozen=True)
class MinSumSpec:
    kind: str = "minsum"
    gamma0: float = GAMMA_INIT
    step: float = GAMMA_STEP
    gamma_min: float = GAMMA_MIN
    direction: str = "+mean"


AttackSpec = LabelFlipSpec | FangSpec | MinMaxSpec | MinSumSpec


def label_flip(dataset: Dataset, offset: int, fraction: float,
               rng: np.random.Generator) -> Dataset:
    """Relabel a uniform floor(fraction*n) subset as (y + offset) mod L."""
    if not 1 <= offset < dataset.n_classes:
        raise ValueError(f"offset must be in [1, {dataset.n_classes})")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n_flip = int(fraction * len(dataset))
    chosen = rng.choice(len(dataset), size=n_flip, replace=False)
    labels = dataset.labels.copy()
    labels[chosen] = (labels[chosen] + offset) % dataset.n_classes
    return Dataset(dataset.features.copy(), labels, dataset.n_classes)


def fang_candidate(benign_mean: np.ndarray, lam: float) -> np.ndarray:
    """Perturb the benign mean opposite to its sign pattern."""
    return benign_mean - lam * np.sign(benign_mean)


def fang_attack(benign: Sequence[np.ndarray], spec: FangSpec,
                accept: Callable[[np.ndarray], bool]) -> np.ndarray:
    """Halve the perturbation factor from lambda0 until the acceptance
    oracle (the attacker's plaintext simulation of the target aggregation
    rule) admits the crafted gradient; bottom out at gamma_min."""
    if len(benign) == 0:
        raise ValueError("fang attack needs at least one benign gradient")
    mean = np.mean(np.asarray(benign), axis=0)
    lam = spec.lambda0
    while lam >= spec.gamma_min:
        candidate = fang_candidate(mean, lam)
        if accept(candidate):
            return candidate
        lam *= 0.5
    return fang_candidate(mean, spec.gamma_min)


def pairwise_sq_dists(stack: np.ndarray) -> np.ndarray:
    """All-pairs squared distances via the Gram matrix (O(N^2) memory)."""
    sq = (stack**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (stack @ stack.T)
    return np.maximum(d2, 0.0)


def perturbation_direction(benign_mean: np.ndarray, direction: str) -> np.ndarray:
    """Unit perturbation vector: the mean's direction, its negation, or the
    normalized sign pattern."""
    if direction in ("+mean", "-mean"):
        norm = float(np.linalg.norm(benign_mean))
        if norm == 0.0:
            return np.zeros_like(benign_mean)
        unit = benign_mean / norm
        return unit if direction == "+mean" else -unit
    if direction == "sign":
        signs = np.sign(benign_mean)
        norm = float(np.linalg.norm(signs))
        return signs / norm if norm > 0 else signs
    raise ValueError(f"unknown perturbation direction {direction!r}")


def minmax_attack(benign: Sequence[np.ndarray], spec: MinMaxSpec) -> np.ndarray:
    """Largest perturbation scale keeping the crafted gradient's worst-case
    distance to any benign gradient within the benign diameter."""
    grads = np.asarray(benign, dtype=np.float64)
    if grads.shape[0] < 2:
        raise DegenerateError("scale search needs at least two benign gradients")
    mean = grads.mean(axis=0)
    bound = float(np.sqrt(pairwise_sq_dists(grads).max()))
    direction = perturbation_direction(mean, spec.direction)
    if bound == 0.0 or not np.any(direction):
        return mean

    def feasible(gamma: float) -> bool:
        candidate = mean + gamma * direction
        dists = np.linalg.norm(grads - candidate, axis=1)
        return float(dists.max()) <= bound

    gamma = _largest_feasible_scale(feasible, spec.gamma0, spec.step, spec.gamma_min)
    return mean + gamma * direction


def minsum_attack(benign: Sequence[np.ndarray], spec: MinSumSpec) -> np.ndarray:
    """Largest perturbation scale keeping the crafted gradient's total
    squared distance to the benign set within any benign member's budget."""
    grads = np.asarray(benign, dtype=np.float64)
    if grads.shape[0] < 2:
        raise DegenerateError("scale search needs at least two benign gradients")
    mean = grads.mean(axis=0)
    budget = float(pairwise_sq_dists(grads).sum(axis=1).max())
    direction = perturbation_direction(mean, spec.direction)
    if budget == 0.0 or not np.any(direction):
        return mean

    def feasible(gamma: float) -> bool:
        candidate = mean + gamma * direction
        total = float(((grads - candidate) ** 2).sum())
        return total <= budget

    gamma = _largest_feasible_scale(feasible, spec.gamma0, spec.step, spec.gamma_min)
    return mean + gamma * direction


def _largest_feasible_scale(feasible: Callable[[float], bool], gamma0: float,
                            step: float, gamma_min: float) -> float:
    """Bisection for the largest feasible scale.

    Scale 0 is always feasible (the candidate collapses onto the benign
    mean, which satisfies both distance budgets), and both constraints grow
    without bound in the scale, so the feasible set is an interval [0, g*].
    If gamma0 itself is feasible the bracket expands geometrically by
    `step` doublings before bisecting down to gamma_min resolution.
    """
    lo, hi = 0.0, gamma0
    grow = step
    while feasible(hi):
        lo, hi = hi, hi + grow
        grow *= 2.0
        if hi > 1e12:
            return lo
    while hi - lo > gamma_min:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo
