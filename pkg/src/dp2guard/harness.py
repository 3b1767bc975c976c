"""Experiment orchestration: configuration, the per-round protocol loop,
metrics, and plotting."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import attacks, baselines, client, defense, models, trust
from .data import Dataset, load_idx, partition, synth_dataset
from .errors import ConfigError
from .ledger import (
    Ledger,
    make_round_payload,
    payload_agg_blob,
    payload_trust_weights,
)
from .numeric import deserialize_ring, serialize_ring, substream
from .servers import (
    Channel,
    ServerS1,
    ServerS2,
    encode_agg_and_weights,
    encode_share_upload,
)

AGGREGATORS = ("dp2guard", "fedavg", "multikrum", "dnc", "fltrust")
ATTACK_KINDS = ("label_flip", "fang", "minmax", "minsum")
LEDGER_SENDER = 0


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment, fully determined by its JSON form plus nothing else."""

    dataset: str = "synthetic"
    model: str = "logreg"
    n_clients: int = 20
    rounds: int = 50
    adv_ratio: float = 0.0
    attack: dict[str, Any] | None = None
    aggregator: str = "dp2guard"
    partition: str = "iid"
    alpha: float = 0.5
    beta: float = 0.5
    exclusion: str = "soft"
    seed: int = 0
    eta: float = 0.01
    batch_size: int = 32
    scale_bits: int = 16
    local_mode: str = "epoch"
    train_subset: int | None = None
    test_subset: int | None = None
    data_dir: str | None = None
    synth_train: int = 2000
    synth_test: int = 1000
    synth_features: int = 20
    synth_classes: int = 4
    synth_separation: float = 4.0
    hidden: int = 128
    identical_malicious: bool = True
    projection_dim: int | None = None
    fltrust_root_size: int = 100
    aggregator_params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.dataset not in ("synthetic", "mnist", "fashion"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.model not in ("logreg", "mlp"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.partition not in ("iid", "dirichlet"):
            raise ConfigError(f"unknown partition {self.partition!r}")
        if self.exclusion not in ("soft", "hard"):
            raise ConfigError(f"unknown exclusion mode {self.exclusion!r}")
        if self.local_mode not in ("epoch", "batch"):
            raise ConfigError(f"unknown local mode {self.local_mode!r}")
        if not 0.0 <= self.adv_ratio < 0.5:
            raise ConfigError("adv_ratio must be in [0, 0.5)")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must be in [0, 1)")
        if self.n_clients < 2 or self.rounds < 1:
            raise ConfigError("need at least 2 clients and 1 round")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not 1 <= self.scale_bits <= 48:
            raise ConfigError("scale_bits must be in [1, 48]")
        if self.attack is not None:
            self.parse_attack()
        elif self.adv_ratio > 0:
            raise ConfigError("adv_ratio > 0 requires an attack")

    @property
    def n_malicious(self) -> int:
        return int(np.ceil(self.adv_ratio * self.n_clients))

    @property
    def malicious_ids(self) -> tuple[int, ...]:
        # Deterministic first-k placement keeps detection ground truth stable.
        return tuple(range(self.n_malicious))

    def parse_attack(self) -> attacks.AttackSpec | None:
        if self.attack is None:
            return None
        spec = dict(self.attack)
        kind = spec.pop("kind", None)
        if kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {kind!r}")
        try:
            if kind == "label_flip":
                return attacks.LabelFlipSpec(kind=kind, **spec)
            if kind == "fang":
                return attacks.FangSpec(kind=kind, **spec)
            if kind == "minmax":
                return attacks.MinMaxSpec(kind=kind, **spec)
            return attacks.MinSumSpec(kind=kind, **spec)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for attack {kind!r}: {exc}") from exc

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    accuracy: float
    precision: float | None
    recall: float | None
    mean_trust_benign: float | None
    mean_trust_malicious: float | None
    trust: dict[int, float] | None
    wall_time: float
    crafted_norm: float | None = None


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: list[RoundMetrics]
    ledger: Ledger
    channel: Channel
    final_params: np.ndarray
    model: models.Model
    malicious_ids: tuple[int, ...]
    weight_history: list[dict[int, float]] = field(default_factory=list)
    benign_history: list[frozenset[int]] = field(default_factory=list)
    params_history: list[np.ndarray] = field(default_factory=list)
    gradient_history: list[dict[int, np.ndarray]] = field(default_factory=list)

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].accuracy


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Training and test splits for the configured dataset."""
    if cfg.dataset == "synthetic":
        train = synth_dataset(cfg.synth_train, cfg.synth_features, cfg.synth_classes,
                              cfg.synth_separation, substream(cfg.seed, "data", "train"))
        test = synth_dataset(cfg.synth_test, cfg.synth_features, cfg.synth_classes,
                             cfg.synth_separation, substream(cfg.seed, "data", "test"))
    else:
        base = resolve_data_dir(cfg.data_dir, cfg.dataset)
        train = load_idx(_idx_file(base, "train-images-idx3-ubyte"),
                         _idx_file(base, "train-labels-idx1-ubyte"))
        test = load_idx(_idx_file(base, "t10k-images-idx3-ubyte"),
                        _idx_file(base, "t10k-labels-idx1-ubyte"))
    if cfg.train_subset:
        train = train.head(cfg.train_subset)
    if cfg.test_subset:
        test = test.head(cfg.test_subset)
    return train, test


def resolve_data_dir(data_dir: str | None, dataset: str) -> Path:
    """Locate the IDX files: explicit config, then DP2GUARD_DATA_DIR, then
    ./data/<dataset>."""
    import os

    candidates = []
    if data_dir:
        candidates.append(Path(data_dir))
    env = os.environ.get("DP2GUARD_DATA_DIR")
    if env:
        candidates.append(Path(env) / dataset)
        candidates.append(Path(env))
    candidates.append(Path("data") / dataset)
    for cand in candidates:
        try:
            _idx_file(cand, "train-images-idx3-ubyte")
            return cand
        except FileNotFoundError:
            continue
    raise FileNotFoundError(
        f"no IDX files for {dataset!r}; searched {[str(c) for c in candidates]}; "
        "set data_dir or DP2GUARD_DATA_DIR"
    )


def _idx_file(base: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        path = base / name
        if path.exists():
            return path
    raise FileNotFoundError(f"{base / stem}[.gz] not found")


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                   record_history: bool = False) -> RunResult:
    """Run the configured number of rounds and return per-round metrics.

    Every random draw comes from a stream keyed by (seed, purpose, actor,
    round), so reruns of the same config are bit-identical.
    """
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    train, test = load_datasets(cfg)
    model = models.Model(cfg.model, train.n_features, train.n_classes, hidden=cfg.hidden)
    plan = partition(train, cfg.n_clients, cfg.partition, cfg.alpha,
                     substream(cfg.seed, "partition"))
    spec = cfg.parse_attack()
    malicious = set(cfg.malicious_ids)

    clients = []
    for cid in range(cfg.n_clients):
        local = train.subset(plan.assignments[cid])
        role = spec if cid in malicious else None
        if isinstance(role, attacks.LabelFlipSpec):
            local = client.poison_labels(local, role, substream(cfg.seed, "poison", cid))
        clients.append(client.ClientState(cid, local, role))

    params = model.init_params(substream(cfg.seed, "model-init"))
    ledger = Ledger(out_path / "ledger.jsonl" if out_path else None)
    channel = Channel()
    trust_state = trust.initial_trust(range(cfg.n_clients), cfg.beta)
    root_data = _fltrust_root(cfg, test) if cfg.aggregator == "fltrust" else None

    result = RunResult(cfg, [], ledger, channel, params, model, cfg.malicious_ids)
    metrics: list[RoundMetrics] = []

    detection_rows: list[str] = []
    for round_no in range(cfg.rounds):
        started = time.perf_counter()
        grads, crafted_norm = _round_gradients(cfg, clients, model, params,
                                               round_no, spec)
        if record_history:
            result.gradient_history.append({cid: g.copy() for cid, g in grads.items()})

        benign_pred: frozenset[int] | None = None
        trust_snapshot: dict[int, float] | None = None
        if cfg.aggregator == "dp2guard":
            g_agg, detection, trust_state, tau = _dp2guard_round(
                cfg, grads, round_no, trust_state, ledger, channel, params)
            benign_pred = frozenset(detection.benign)
            trust_snapshot = dict(trust_state.trust)
            for cid in sorted(detection.features):
                s, c = detection.features[cid]
                flag = int(cid in detection.benign)
                detection_rows.append(
                    f"{round_no},{cid},{s!r},{c!r},{1 - flag},{flag}")
            if record_history:
                result.weight_history.append(dict(tau))
                result.benign_history.append(benign_pred)
        else:
            g_agg, benign_pred = _baseline_round(cfg, grads, round_no, model,
                                                 params, root_data)

        params = models.sgd_step(params, g_agg, cfg.eta)
        if record_history:
            result.params_history.append(params.copy())

        accuracy = model.accuracy(params, test.features, test.labels)
        precision, recall = _detection_metrics(benign_pred, malicious, cfg.n_clients)
        mtb, mtm = _trust_means(trust_snapshot, malicious)
        metrics.append(RoundMetrics(round_no, accuracy, precision, recall,
                                    mtb, mtm, trust_snapshot,
                                    time.perf_counter() - started, crafted_norm))

    result.metrics = metrics
    result.final_params = params
    if out_path is not None:
        emit_metrics(metrics, out_path / "metrics.csv")
        plot_metrics(metrics, out_path / "plot.svg",
                     title=f"{cfg.aggregator} on {cfg.dataset}")
        (out_path / "resolved-config.json").write_text(cfg.to_json() + "\n",
                                                       encoding="utf-8")
        if detection_rows:
            (out_path / "detection.csv").write_text(
                "round,client_id,s,c,cluster,benign\n" +
                "\n".join(detection_rows) + "\n", encoding="utf-8")
        if any(m.crafted_norm is not None for m in metrics):
            attack_lines = ["round,crafted_norm"]
            attack_lines += [f"{m.round},{m.crafted_norm!r}" for m in metrics
                             if m.crafted_norm is not None]
            (out_path / "attack.csv").write_text("\n".join(attack_lines) + "\n",
                                                 encoding="utf-8")
    return result


def _round_gradients(cfg: ExperimentConfig, clients: Sequence[client.ClientState],
                     model: models.Model, params: np.ndarray, round_no: int,
                     spec: attacks.AttackSpec | None,
                     ) -> tuple[dict[int, np.ndarray], float | None]:
    """Plaintext gradients for the round: honest clients train, label-flip
    clients train on their poisoned partitions, and full-knowledge attacks
    are crafted from the honest gradients (the harness side channel)."""
    grads: dict[int, np.ndarray] = {}
    full_knowledge = isinstance(spec, (attacks.FangSpec, attacks.MinMaxSpec,
                                       attacks.MinSumSpec))
    for state in clients:
        if full_knowledge and state.malicious:
            continue
        rng = substream(cfg.seed, "client", state.client_id, round_no)
        grads[state.client_id] = client.local_gradient(
            state, model, params, cfg.local_mode, cfg.batch_size, cfg.eta, rng)

    crafted_norm = None
    if full_knowledge and cfg.n_malicious:
        honest = [grads[cid] for cid in sorted(grads)]
        crafted = _craft(cfg, spec, honest, round_no)
        crafted_norm = float(np.linalg.norm(crafted))
        for state in clients:
            if not state.malicious:
                continue
            if cfg.identical_malicious:
                grads[state.client_id] = crafted
            else:
                # independent crafting per attacker (distinct oracle streams)
                grads[state.client_id] = _craft(cfg, spec, honest, round_no,
                                                actor=state.client_id)
    return grads, crafted_norm


def _craft(cfg: ExperimentConfig, spec: attacks.AttackSpec,
           honest: list[np.ndarray], round_no: int,
           actor: int | None = None) -> np.ndarray:
    if isinstance(spec, attacks.MinMaxSpec):
        return attacks.minmax_attack(honest, spec)
    if isinstance(spec, attacks.MinSumSpec):
        return attacks.minsum_attack(honest, spec)
    assert isinstance(spec, attacks.FangSpec)
    oracle = _fang_oracle(cfg, spec, honest, round_no, actor)
    return attacks.fang_attack(honest, spec, oracle)


def _fang_oracle(cfg: ExperimentConfig, spec: attacks.FangSpec,
                 honest: list[np.ndarray], round_no: int,
                 actor: int | None = None) -> Callable[[np.ndarray], bool]:
    """The attacker's plaintext simulation of the target aggregation rule.

    Accepts a candidate if the simulated rule would keep at least one of
    the attacker's copies.  FedAvg and FLTrust never reject (FLTrust's root
    data is server-private, so the attacker cannot simulate it), and a
    spec with oracle="accept_all" models a non-adaptive attacker."""
    n_mal = cfg.n_malicious
    if spec.oracle == "accept_all":
        return lambda candidate: True
    if spec.oracle != "defense":
        raise ConfigError(f"unknown fang oracle {spec.oracle!r}")

    oracle_path = ("attack-oracle", round_no) if actor is None \
        else ("attack-oracle", round_no, actor)

    if cfg.aggregator == "dp2guard":
        def oracle(candidate: np.ndarray) -> bool:
            pop = honest + [candidate] * n_mal
            centered = {i: g - np.mean(pop, axis=0) for i, g in enumerate(pop)}
            rng = substream(cfg.seed, *oracle_path)
            result = defense.detect(centered, rng, cfg.projection_dim)
            return any(i in result.benign for i in range(len(honest), len(pop)))
        return oracle

    if cfg.aggregator == "multikrum":
        f, m = _multikrum_params(cfg)

        def oracle(candidate: np.ndarray) -> bool:
            pop = honest + [candidate] * n_mal
            if len(pop) < 2 * f + 3:
                return True
            scores = baselines.krum_scores(pop, f)
            chosen = set(np.argsort(scores, kind="stable")[:m].tolist())
            return any(i in chosen for i in range(len(honest), len(pop)))
        return oracle

    if cfg.aggregator == "dnc":
        dcfg = _dnc_params(cfg)

        def oracle(candidate: np.ndarray) -> bool:
            pop = honest + [candidate] * n_mal
            rng = substream(cfg.seed, *oracle_path)
            stack = np.asarray(pop)
            centered = stack - stack.mean(axis=0)
            take = min(dcfg.sub_dim, stack.shape[1])
            coords = rng.choice(stack.shape[1], size=take, replace=False)
            _, _, vt = np.linalg.svd(centered[:, coords], full_matrices=False)
            scores = (centered[:, coords] @ vt[0]) ** 2
            remove = min(int(np.ceil(dcfg.filter_frac * dcfg.assumed_malicious)),
                         len(pop) - 1)
            keep = set(np.argsort(scores, kind="stable")[: len(pop) - remove].tolist())
            return any(i in keep for i in range(len(honest), len(pop)))
        return oracle

    return lambda candidate: True


def _dp2guard_round(cfg: ExperimentConfig, grads: dict[int, np.ndarray],
                    round_no: int, trust_state: trust.TrustState, ledger: Ledger,
                    channel: Channel, params: np.ndarray):
    """One full dual-server round: upload, center, detect, weigh, publish,
    read back, reassemble."""
    ids = sorted(grads)
    s1 = ServerS1(ids, round_no)
    s2 = ServerS2(ids, round_no)

    for cid in ids:
        mask_rng = substream(cfg.seed, "mask", cid, round_no)
        sh1, sh2 = client.split_and_mask(grads[cid], cfg.scale_bits, mask_rng)
        m1 = encode_share_upload(client.MaskedShare(cid, round_no, 1, sh1))
        m2 = encode_share_upload(client.MaskedShare(cid, round_no, 2, sh2))
        s1.receive_share(channel.send(f"client{cid}", "S1", m1))
        s2.receive_share(channel.send(f"client{cid}", "S2", m2))

    centered_msg = s1.center_shares()
    s2.receive_centered_batch(channel.send("S1", "S2", centered_msg))

    detection, new_trust, tau = s2.detect_and_weigh(
        trust_state, substream(cfg.seed, "cluster", round_no),
        cfg.exclusion, cfg.projection_dim)
    agg2, _publish = s2.publish(tau)

    model_digest = hashlib.sha256(params.tobytes()).digest()
    ledger.append(round_no, make_round_payload(serialize_ring(agg2), tau, model_digest))

    payload = ledger.read_round(round_no)
    blob = deserialize_ring(payload_agg_blob(payload))
    weights_read = payload_trust_weights(payload)
    ledger_msg = encode_agg_and_weights(round_no, LEDGER_SENDER, blob, weights_read)
    s1.receive_agg_and_weights(channel.send("ledger", "S1", ledger_msg))

    g_agg, update_msg = s1.finalize()
    channel.send("S1", "clients", update_msg)
    return g_agg, detection, new_trust, tau


def _baseline_round(cfg: ExperimentConfig, grads: dict[int, np.ndarray],
                    round_no: int, model: models.Model, params: np.ndarray,
                    root_data: Dataset | None):
    ids = sorted(grads)
    ordered = [grads[cid] for cid in ids]
    if cfg.aggregator == "fedavg":
        return baselines.fedavg(ordered), None
    if cfg.aggregator == "multikrum":
        f, m = _multikrum_params(cfg)
        scores = baselines.krum_scores(ordered, f)
        chosen = np.argsort(scores, kind="stable")[:m]
        agg = np.asarray(ordered)[chosen].mean(axis=0)
        return agg, frozenset(ids[i] for i in chosen)
    if cfg.aggregator == "dnc":
        dcfg = _dnc_params(cfg)
        rng = substream(cfg.seed, "dnc", round_no)
        stack = np.asarray(ordered)
        survivors = baselines.dnc_survivors(stack, dcfg, rng)
        agg = stack[sorted(survivors)].mean(axis=0)
        return agg, frozenset(ids[i] for i in survivors)
    assert cfg.aggregator == "fltrust" and root_data is not None
    root_grad = models.local_grad(model, params, root_data.features, root_data.labels)
    return baselines.fltrust(ordered, root_grad), None


def _multikrum_params(cfg: ExperimentConfig) -> tuple[int, int]:
    f = int(cfg.aggregator_params.get("f", cfg.n_malicious))
    m = int(cfg.aggregator_params.get("m", cfg.n_clients - f))
    return f, m


def _dnc_params(cfg: ExperimentConfig) -> baselines.DnCConfig:
    assumed = int(cfg.aggregator_params.get("assumed_malicious",
                                            max(cfg.n_malicious, 1)))
    default_frac = min(1.5 * assumed / cfg.n_clients, 0.99)
    return baselines.DnCConfig(
        n_iters=int(cfg.aggregator_params.get("n_iters", 1)),
        sub_dim=int(cfg.aggregator_params.get("sub_dim", 1000)),
        filter_frac=float(cfg.aggregator_params.get("filter_frac", default_frac)),
        assumed_malicious=assumed,
    )


def _fltrust_root(cfg: ExperimentConfig, test: Dataset) -> Dataset:
    rng = substream(cfg.seed, "fltrust-root")
    take = min(cfg.fltrust_root_size, len(test))
    idx = rng.choice(len(test), size=take, replace=False)
    return test.subset(idx)


def _detection_metrics(benign_pred: frozenset[int] | None, malicious: set[int],
                       n_clients: int) -> tuple[float | None, float | None]:
    """Precision/recall of flagging malicious clients, against the config
    ground truth; absent when the rule makes no selection or no adversary."""
    if benign_pred is None or not malicious:
        return None, None
    flagged = set(range(n_clients)) - benign_pred
    tp = len(flagged & malicious)
    precision = tp / len(flagged) if flagged else (1.0 if not malicious else 0.0)
    recall = tp / len(malicious)
    return precision, recall


def _trust_means(snapshot: dict[int, float] | None,
                 malicious: set[int]) -> tuple[float | None, float | None]:
    if snapshot is None:
        return None, None
    benign_vals = [v for cid, v in snapshot.items() if cid not in malicious]
    mal_vals = [v for cid, v in snapshot.items() if cid in malicious]
    mtb = float(np.mean(benign_vals)) if benign_vals else None
    mtm = float(np.mean(mal_vals)) if mal_vals else None
    return mtb, mtm


# --- metrics output --------------------------------------------------------

CSV_HEADER = "round,accuracy,precision,recall,mean_trust_benign,mean_trust_malicious"


def emit_metrics(metrics: Sequence[RoundMetrics], path: str | Path) -> None:
    """CSV with one row per round; absent metrics serialize as empty fields."""
    if not metrics:
        raise ValueError("no metrics to emit")
    lines = [CSV_HEADER]
    for m in metrics:
        cells = [str(m.round), repr(m.accuracy)]
        for value in (m.precision, m.recall, m.mean_trust_benign, m.mean_trust_malicious):
            cells.append("" if value is None else repr(value))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_metrics_csv(path: str | Path) -> list[dict[str, float | None]]:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    rows = []
    for line in text[1:]:
        cells = line.split(",")
        rows.append({key: (None if cell == "" else float(cell))
                     for key, cell in zip(header, cells)})
    return rows


def plot_metrics(metrics: Sequence[RoundMetrics], path: str | Path,
                 title: str = "accuracy") -> None:
    """Accuracy-versus-round line chart as a standalone SVG."""
    points = [(float(m.round), m.accuracy) for m in metrics]
    _svg_chart({title: points}, path, "round", "accuracy", y_range=(0.0, 1.0))


def plot_ratio_sweep(series: dict[str, list[tuple[float, float]]],
                     path: str | Path) -> None:
    """Final accuracy versus adversary ratio, one line per labelled sweep."""
    _svg_chart(series, path, "adv_ratio", "final accuracy", y_range=(0.0, 1.0))


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_chart(series: dict[str, list[tuple[float, float]]], path: str | Path,
               xlabel: str, ylabel: str,
               y_range: tuple[float, float] | None = None) -> None:
    width, height, margin = 640, 420, 56
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ValueError("nothing to plot")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = y_range if y_range else (min(ys), max(ys))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x: float) -> float:
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y: float) -> float:
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{ylabel}</text>',
    ]
    for k in range(5):
        xv = x_lo + k * (x_hi - x_lo) / 4
        yv = y_lo + k * (y_hi - y_lo) / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - margin + 16}" '
                     f'text-anchor="middle" font-size="10">{xv:.3g}</text>')
        parts.append(f'<text x="{margin - 6}" y="{sy(yv) + 4:.1f}" '
                     f'text-anchor="end" font-size="10">{yv:.3g}</text>')
    for idx, (label, pts) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin}" y="{margin + 14 * idx}" '
                     f'text-anchor="end" font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
