"""Per-client trust scores: distance-based direct trust, exponential
moving-average history, and normalized aggregation weights."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import AllZeroTrust


@dataclass(frozen=True)
class TrustState:
    """EMA trust per client; beta is the history weight."""

    trust: dict[int, float]
    beta: float
    round: int = 0


def initial_trust(client_ids: Iterable[int], beta: float) -> TrustState:
    """Neutral prior: every client starts at full trust."""
    if not 0 <= beta < 1:
        raise ValueError("beta must be in [0, 1)")
    return TrustState({cid: 1.0 for cid in sorted(client_ids)}, beta, 0)


def direct_trust(feature: np.ndarray, centroid: np.ndarray) -> float:
    """1 / (1 + distance) to the benign cluster centroid, on raw features."""
    dist = float(np.linalg.norm(np.asarray(feature) - np.asarray(centroid)))
    return 1.0 / (1.0 + dist)


def update_trust(state: TrustState, direct: Mapping[int, float]) -> TrustState:
    """EMA update: beta * old + (1 - beta) * direct.

    Callers pass direct=0 for clients excluded this round, which decays
    their trust geometrically.
    """
    updated = {}
    for cid, old in state.trust.items():
        gamma = float(direct.get(cid, 0.0))
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"direct trust {gamma} for client {cid} outside [0, 1]")
        updated[cid] = state.beta * old + (1.0 - state.beta) * gamma
    return TrustState(updated, state.beta, state.round + 1)


def weights(state: TrustState, force_zero: Iterable[int] = ()) -> dict[int, float]:
    """Normalized aggregation weights tau_i = trust_i / sum(trust).

    `force_zero` implements hard exclusion: those clients get weight 0 and
    the rest renormalize.
    """
    zero = set(force_zero)
    live = {cid: (0.0 if cid in zero else t) for cid, t in state.trust.items()}
    total = sum(live.values())
    if total <= 0.0:
        raise AllZeroTrust("no positive trust to normalize")
    return {cid: t / total for cid, t in live.items()}
