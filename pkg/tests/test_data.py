import gzip
import struct

import numpy as np
import pytest

from dp2guard.data import (
    Dataset,
    dump_csv,
    load_csv,
    load_idx,
    partition,
    synth_dataset,
)
from dp2guard.errors import CountMismatch, EmptyClientError, FormatError
from dp2guard.models import Model, local_grad, sgd_step
from dp2guard.numeric import substream


def _label_entropy(labels: np.ndarray, n_classes: int) -> float:
    counts = np.bincount(labels, minlength=n_classes).astype(float)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


class TestPartition:
    def test_iid_equal_split(self):
        data = synth_dataset(1000, 4, 5, 1.0, substream(0, "d"))
        plan = partition(data, 10, "iid", rng=substream(0, "p"))
        sizes = [len(a) for a in plan.assignments]
        assert sizes == [100] * 10
        merged = np.sort(np.concatenate(plan.assignments))
        assert np.array_equal(merged, np.arange(1000))

    def test_iid_disjoint_with_remainder(self):
        data = synth_dataset(103, 4, 5, 1.0, substream(1, "d"))
        plan = partition(data, 10, "iid", rng=substream(1, "p"))
        sizes = [len(a) for a in plan.assignments]
        assert sum(sizes) == 103 and min(sizes) >= 10
        merged = np.concatenate(plan.assignments)
        assert len(np.unique(merged)) == 103

    def test_dirichlet_high_alpha_matches_global(self):
        # alpha -> infinity limit: per-client class proportions within 2 %
        # of the global proportions, over 10 seeds.
        for seed in range(10):
            data = synth_dataset(6000, 4, 5, 1.0, substream(seed, "dd"))
            glob = np.bincount(data.labels, minlength=5) / len(data)
            plan = partition(data, 10, "dirichlet", alpha=1e6,
                             rng=substream(seed, "dp"))
            for idx in plan.assignments:
                local = np.bincount(data.labels[idx], minlength=5) / len(idx)
                assert np.max(np.abs(local - glob)) <= 0.02

    def test_dirichlet_low_alpha_skews(self):
        # alpha = 0.5 with 50 clients: most clients' label entropy drops
        # strictly below the global (IID) entropy.
        hits, total = 0, 0
        for seed in range(10):
            data = synth_dataset(10_000, 4, 10, 1.0, substream(seed, "sk"))
            global_entropy = _label_entropy(data.labels, 10)
            plan = partition(data, 50, "dirichlet", alpha=0.5,
                             rng=substream(seed, "sp"))
            for idx in plan.assignments:
                total += 1
                if _label_entropy(data.labels[idx], 10) < global_entropy:
                    hits += 1
        assert hits / total >= 0.9

    def test_deterministic_given_seed(self):
        data = synth_dataset(500, 3, 4, 1.0, substream(3, "d"))
        a = partition(data, 7, "dirichlet", alpha=0.5, rng=substream(3, "p"))
        b = partition(data, 7, "dirichlet", alpha=0.5, rng=substream(3, "p"))
        for x, y in zip(a.assignments, b.assignments):
            assert np.array_equal(x, y)

    def test_every_client_gets_samples(self):
        data = synth_dataset(40, 3, 4, 1.0, substream(4, "d"))
        plan = partition(data, 8, "dirichlet", alpha=0.1, rng=substream(4, "p"))
        assert min(len(a) for a in plan.assignments) >= 1

    def test_too_few_samples_rejected(self):
        data = synth_dataset(3, 2, 2, 1.0, substream(5, "d"))
        with pytest.raises(EmptyClientError):
            partition(data, 5, "iid", rng=substream(5, "p"))


def _write_idx_pair(tmp_path, n=12, rows=4, cols=3, gz=False, magic_img=0x803,
                    truncate=0, n_labels=None):
    n_labels = n if n_labels is None else n_labels
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = rng.integers(0, 10, size=n_labels, dtype=np.uint8)
    img_bytes = struct.pack(">IIII", magic_img, n, rows, cols) + pixels.tobytes()
    lab_bytes = struct.pack(">II", 0x801, n_labels) + labels.tobytes()
    if truncate:
        img_bytes = img_bytes[:-truncate]
    img_path = tmp_path / ("imgs.gz" if gz else "imgs")
    lab_path = tmp_path / ("labs.gz" if gz else "labs")
    img_path.write_bytes(gzip.compress(img_bytes) if gz else img_bytes)
    lab_path.write_bytes(gzip.compress(lab_bytes) if gz else lab_bytes)
    return img_path, lab_path, pixels, labels


class TestIdxLoader:
    def test_parses_and_scales(self, tmp_path):
        img, lab, pixels, labels = _write_idx_pair(tmp_path)
        data = load_idx(img, lab)
        assert len(data) == 12 and data.n_features == 12
        assert np.allclose(data.features[0], pixels[0].ravel() / 255.0)
        assert np.array_equal(data.labels, labels)

    def test_gzip_transparent(self, tmp_path):
        img, lab, pixels, _ = _write_idx_pair(tmp_path, gz=True)
        data = load_idx(img, lab)
        assert np.allclose(data.features[3], pixels[3].ravel() / 255.0)

    def test_bad_magic(self, tmp_path):
        img, lab, _, _ = _write_idx_pair(tmp_path, magic_img=0x804)
        with pytest.raises(FormatError):
            load_idx(img, lab)

    def test_truncated_payload(self, tmp_path):
        img, lab, _, _ = _write_idx_pair(tmp_path, truncate=5)
        with pytest.raises(FormatError):
            load_idx(img, lab)

    def test_count_mismatch(self, tmp_path):
        img, lab, _, _ = _write_idx_pair(tmp_path, n_labels=11)
        with pytest.raises(CountMismatch):
            load_idx(img, lab)


def _train_linear(data: Dataset, rounds=300, eta=0.5):
    model = Model("logreg", data.n_features, data.n_classes)
    params = np.zeros(model.dim)
    for _ in range(rounds):
        params = sgd_step(params, local_grad(model, params, data.features,
                                             data.labels), eta)
    return model, params


class TestSynthDataset:
    def test_no_separation_gives_chance_accuracy(self):
        data = synth_dataset(600, 6, 3, 0.0, substream(6, "s"))
        model, params = _train_linear(data)
        acc = model.accuracy(params, data.features, data.labels)
        assert abs(acc - 1.0 / 3.0) < 0.12

    def test_wide_separation_is_separable(self):
        data = synth_dataset(400, 10, 2, 10.0, substream(7, "s"))
        model, params = _train_linear(data)
        assert model.accuracy(params, data.features, data.labels) >= 0.99

    def test_deterministic(self):
        a = synth_dataset(50, 4, 3, 2.0, substream(8, "s"))
        b = synth_dataset(50, 4, 3, 2.0, substream(8, "s"))
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)


def test_csv_round_trip(tmp_path):
    data = synth_dataset(30, 3, 4, 1.5, substream(9, "c"))
    path = tmp_path / "synth.csv"
    dump_csv(data, path)
    first = path.read_text().splitlines()
    assert first[0] == "x0,x1,x2,label"
    back = load_csv(path, 4)
    assert np.allclose(back.features, data.features)
    assert np.array_equal(back.labels, data.labels)
