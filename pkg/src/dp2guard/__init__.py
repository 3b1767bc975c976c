"""Dual-server masked federated learning with hybrid poisoning defense,
trust-weighted aggregation, and a hash-chained audit ledger."""

from .attacks import (
    FangSpec,
    LabelFlipSpec,
    MinMaxSpec,
    MinSumSpec,
    fang_attack,
    label_flip,
    minmax_attack,
    minsum_attack,
)
from .baselines import dnc, fedavg, fltrust, multi_krum
from .client import ClientState, MaskedShare, client_round, split_and_mask
from .data import Dataset, PartitionPlan, load_idx, partition, synth_dataset
from .defense import (
    DetectionResult,
    cluster_and_select,
    detect,
    median_cosines,
    spectral_scores,
    top_direction,
)
from .harness import ExperimentConfig, RoundMetrics, RunResult, run_experiment
from .ledger import Block, Ledger, verify_file
from .models import Model, local_grad, sgd_step
from .numeric import (
    RingVector,
    decode_fixed,
    encode_fixed,
    ring_add,
    ring_sub,
    substream,
    uniform_ring,
)
from .servers import (
    mean_center,
    partial_aggregate,
    reassemble_global,
    reconstruct_centered,
)
from .trust import TrustState, direct_trust, initial_trust, update_trust, weights

__version__ = "0.1.0"

__all__ = [
    "Block",
    "ClientState",
    "Dataset",
    "DetectionResult",
    "ExperimentConfig",
    "FangSpec",
    "LabelFlipSpec",
    "Ledger",
    "MaskedShare",
    "MinMaxSpec",
    "MinSumSpec",
    "Model",
    "PartitionPlan",
    "RingVector",
    "RoundMetrics",
    "RunResult",
    "TrustState",
    "client_round",
    "cluster_and_select",
    "decode_fixed",
    "detect",
    "direct_trust",
    "dnc",
    "encode_fixed",
    "fang_attack",
    "fedavg",
    "fltrust",
    "initial_trust",
    "label_flip",
    "load_idx",
    "local_grad",
    "mean_center",
    "median_cosines",
    "minmax_attack",
    "minsum_attack",
    "multi_krum",
    "partial_aggregate",
    "partition",
    "reassemble_global",
    "reconstruct_centered",
    "ring_add",
    "ring_sub",
    "run_experiment",
    "sgd_step",
    "spectral_scores",
    "split_and_mask",
    "substream",
    "synth_dataset",
    "top_direction",
    "uniform_ring",
    "update_trust",
    "verify_file",
    "weights",
]
