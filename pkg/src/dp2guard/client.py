"""Client-side protocol: local training, gradient splitting, and masking.

A client's gradient is encoded into the fixed-point ring, split into a
uniformly random share plus its complement, and each share is offset by a
fresh uniform mask with opposite signs.  Either share alone is uniform over
the ring; their wrapping sum reconstructs the encoded gradient exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models
from .attacks import AttackSpec, LabelFlipSpec, label_flip
from .data import Dataset
from .numeric import (
    RingVector,
    clip_for_encoding,
    encode_fixed,
    ring_add,
    ring_sub,
    uniform_ring,
)


@dataclass(frozen=True)
class MaskedShare:
    """One of the two additive shares of a client's round gradient."""

    client_id: int
    round: int
    share_index: int
    payload: RingVector

    def __post_init__(self):
        if self.share_index not in (1, 2):
            raise ValueError("share_index must be 1 or 2")


@dataclass(frozen=True)
class ClientState:
    """Fixed per-experiment identity: id, local data, and role."""

    client_id: int
    dataset: Dataset
    attack: AttackSpec | None = None

    @property
    def malicious(self) -> bool:
        return self.attack is not None


def split_and_mask(grad: np.ndarray, scale_bits: int,
                   rng: np.random.Generator) -> tuple[RingVector, RingVector]:
    """Split an encoded gradient into two masked uniform shares.

    ring_add of the two results always decodes to the encode-quantized
    gradient, bit-for-bit, whatever the rng produced.
    """
    encoded = encode_fixed(clip_for_encoding(grad, scale_bits), scale_bits)
    d = len(encoded)
    part1 = uniform_ring(d, scale_bits, rng)
    part2 = ring_sub(encoded, part1)
    mask = uniform_ring(d, scale_bits, rng)
    return ring_add(part1, mask), ring_sub(part2, mask)


def epoch_gradient(model: models.Model, params: np.ndarray, dataset: Dataset,
                   batch_size: int, eta: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Effective gradient of one local epoch of minibatch SGD.

    Runs the epoch from `params` and returns (start - end) / eta, so the
    server applying one eta-sized step reproduces the local epoch.
    """
    order = rng.permutation(len(dataset))
    current = params.copy()
    for lo in range(0, len(order), batch_size):
        batch = order[lo:lo + batch_size]
        g = models.local_grad(model, current, dataset.features[batch],
                              dataset.labels[batch])
        current = models.sgd_step(current, g, eta)
    return (params - current) / eta


def batch_gradient(model: models.Model, params: np.ndarray, dataset: Dataset,
                   batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Gradient of a single uniformly sampled minibatch."""
    take = min(batch_size, len(dataset))
    batch = rng.choice(len(dataset), size=take, replace=False)
    return models.local_grad(model, params, dataset.features[batch],
                             dataset.labels[batch])


def local_gradient(state: ClientState, model: models.Model, params: np.ndarray,
                   mode: str, batch_size: int, eta: float,
                   rng: np.random.Generator) -> np.ndarray:
    """The plaintext gradient a client would submit this round.

    Honest clients (and label-flip clients, whose datasets were poisoned at
    setup) train locally; full-knowledge attacks are crafted by the caller
    and never reach this path.
    """
    if mode == "epoch":
        return epoch_gradient(model, params, state.dataset, batch_size, eta, rng)
    if mode == "batch":
        return batch_gradient(model, params, state.dataset, batch_size, rng)
    raise ValueError(f"unknown local mode {mode!r}")


def client_round(state: ClientState, model: models.Model, params: np.ndarray,
                 round_no: int, mode: str, batch_size: int, eta: float,
                 scale_bits: int, grad_rng: np.random.Generator,
                 mask_rng: np.random.Generator,
                 crafted: np.ndarray | None = None) -> tuple[MaskedShare, MaskedShare]:
    """Produce the two masked shares a client uploads for one round.

    `crafted` carries a full-knowledge adversarial gradient supplied by the
    harness side channel; honest and label-flip clients compute their own.
    """
    if crafted is not None:
        grad = crafted
    else:
        grad = local_gradient(state, model, params, mode, batch_size, eta, grad_rng)
    s1, s2 = split_and_mask(grad, scale_bits, mask_rng)
    return (
        MaskedShare(state.client_id, round_no, 1, s1),
        MaskedShare(state.client_id, round_no, 2, s2),
    )


def poison_labels(dataset: Dataset, spec: LabelFlipSpec,
                  rng: np.random.Generator) -> Dataset:
    """Apply the one-time label-flip poisoning to a client's partition."""
    return label_flip(dataset, spec.offset, spec.fraction, rng)
