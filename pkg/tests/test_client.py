import numpy as np

from dp2guard.attacks import LabelFlipSpec
from dp2guard.client import (
    ClientState,
    client_round,
    epoch_gradient,
    local_gradient,
    poison_labels,
    split_and_mask,
)
from dp2guard.data import synth_dataset
from dp2guard.models import Model, local_grad, sgd_step
from dp2guard.numeric import decode_fixed, encode_fixed, ring_add, substream

from test_numeric import CHI2_CRIT_255, chi_square_uniform_bytes


class TestSplitAndMask:
    def test_shares_reconstruct_exactly(self):
        rng = substream(40, "split")
        for _ in range(50):
            g = rng.uniform(-10, 10, size=64)
            s1, s2 = split_and_mask(g, 16, substream(41, "m", _))
            combined = ring_add(s1, s2)
            quantized = encode_fixed(g, 16)
            assert np.array_equal(combined.words, quantized.words)

    def test_zero_gradient_shares_are_negatives(self):
        s1, s2 = split_and_mask(np.zeros(16), 16, substream(42, "m"))
        assert not np.any(ring_add(s1, s2).words)

    def test_fresh_randomness_same_reconstruction(self):
        g = substream(43, "g").uniform(-5, 5, size=32)
        a1, a2 = split_and_mask(g, 16, substream(44, "m", 0))
        b1, b2 = split_and_mask(g, 16, substream(44, "m", 1))
        assert not np.array_equal(a1.words, b1.words)
        assert np.array_equal(ring_add(a1, a2).words, ring_add(b1, b2).words)

    def test_each_share_marginally_uniform(self):
        # The testable shadow of the privacy claim: either share alone looks
        # uniform over the ring, whatever the underlying gradient.
        g = np.full(100_000, 3.14159)
        s1, s2 = split_and_mask(g, 16, substream(45, "m"))
        for share in (s1, s2):
            low = (share.words & np.uint64(0xFF)).astype(np.int64)
            assert chi_square_uniform_bytes(low) < CHI2_CRIT_255

    def test_oversized_entries_are_clipped_not_fatal(self):
        g = np.array([2.0**60, -1.0, 1.0])
        s1, s2 = split_and_mask(g, 16, substream(46, "m"))
        back = decode_fixed(ring_add(s1, s2))
        assert back[1] == -1.0 and back[2] == 1.0
        assert np.isfinite(back[0])


def _client(seed, n=60, malicious=None):
    data = synth_dataset(n, 6, 3, 3.0, substream(seed, "data"))
    return ClientState(0, data, malicious)


class TestClientRound:
    def test_deterministic_given_streams(self):
        state = _client(50)
        model = Model("logreg", 6, 3)
        params = model.init_params(substream(50, "init"))
        kw = dict(mode="epoch", batch_size=16, eta=0.1, scale_bits=16)
        a1, a2 = client_round(state, model, params, 3,
                              grad_rng=substream(50, "g", 3),
                              mask_rng=substream(50, "m", 3), **kw)
        b1, b2 = client_round(state, model, params, 3,
                              grad_rng=substream(50, "g", 3),
                              mask_rng=substream(50, "m", 3), **kw)
        assert np.array_equal(a1.payload.words, b1.payload.words)
        assert np.array_equal(a2.payload.words, b2.payload.words)
        assert (a1.share_index, a2.share_index) == (1, 2)

    def test_reconstruction_matches_plaintext_gradient(self):
        state = _client(51)
        model = Model("logreg", 6, 3)
        params = model.init_params(substream(51, "init"))
        grad = local_gradient(state, model, params, "epoch", 16, 0.1,
                              substream(51, "g"))
        s1, s2 = client_round(state, model, params, 0, "epoch", 16, 0.1, 16,
                              substream(51, "g"), substream(51, "m"))
        back = decode_fixed(ring_add(s1.payload, s2.payload))
        assert np.max(np.abs(back - grad)) <= 2.0**-16

    def test_label_flip_client_matches_poisoned_oracle(self):
        spec = LabelFlipSpec(offset=1, fraction=0.5)
        clean = _client(52)
        poisoned_data = poison_labels(clean.dataset, spec, substream(52, "p"))
        poisoned = ClientState(0, poisoned_data, spec)
        model = Model("logreg", 6, 3)
        params = model.init_params(substream(52, "init"))
        got = local_gradient(poisoned, model, params, "epoch", 16, 0.1,
                             substream(52, "g"))
        want = epoch_gradient(model, params, poisoned_data, 16, 0.1,
                              substream(52, "g"))
        assert np.array_equal(got, want)

    def test_crafted_gradient_bypasses_training(self):
        state = _client(53)
        model = Model("logreg", 6, 3)
        params = model.init_params(substream(53, "init"))
        crafted = np.linspace(-1, 1, model.dim)
        s1, s2 = client_round(state, model, params, 0, "epoch", 16, 0.1, 16,
                              substream(53, "g"), substream(53, "m"),
                              crafted=crafted)
        back = decode_fixed(ring_add(s1.payload, s2.payload))
        assert np.max(np.abs(back - crafted)) <= 2.0**-17


class TestLocalTraining:
    def test_epoch_gradient_matches_manual_sgd(self):
        data = synth_dataset(40, 5, 2, 2.0, substream(54, "d"))
        model = Model("logreg", 5, 2)
        params = substream(54, "w").standard_normal(model.dim) * 0.1
        eta, bs = 0.2, 8
        order = substream(54, "order").permutation(len(data))
        expect = params.copy()
        for lo in range(0, len(order), bs):
            batch = order[lo:lo + bs]
            g = local_grad(model, expect, data.features[batch], data.labels[batch])
            expect = sgd_step(expect, g, eta)
        got = epoch_gradient(model, params, data, bs, eta, substream(54, "order"))
        assert np.allclose(sgd_step(params, got, eta), expect, atol=1e-12)

    def test_batch_mode_uses_single_minibatch(self):
        data = synth_dataset(40, 5, 2, 2.0, substream(55, "d"))
        model = Model("logreg", 5, 2)
        state = ClientState(0, data)
        params = np.zeros(model.dim)
        got = local_gradient(state, model, params, "batch", 8, 0.1,
                             substream(55, "b"))
        batch = substream(55, "b").choice(len(data), size=8, replace=False)
        want = local_grad(model, params, data.features[batch], data.labels[batch])
        assert np.array_equal(got, want)
