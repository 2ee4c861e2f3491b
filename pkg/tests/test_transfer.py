import numpy as np
import pytest
from hypothesis import given, strategies as st

from edfa_twin import nn, train, transfer
from edfa_twin.errors import EmptyShots, InsufficientData, MissingFullLoad, MissingReference
from edfa_twin.evaluate import evaluate
from edfa_twin.transfer import HeteroTlConfig, HomoTlConfig, Mode, layer_lr


@pytest.fixture(scope="module")
def source(small_campaign):
    net = train.train_direct(small_campaign, train.PretrainConfig(samples_per_gain_setting=32, epochs_per_layer=5),
                             train.FinetuneConfig(labeled_count=64, epochs=40), seed=0)
    return transfer.attach_reference(net, small_campaign, 128, np.random.default_rng(0))


class TestLayerRates:
    def test_examples(self):
        assert layer_lr("homo", 5, 5, 0, HomoTlConfig()) == 1e-3
        assert layer_lr("homo", 1, 5, 0, HomoTlConfig()) == pytest.approx(1e-7, rel=1e-12)
        assert layer_lr("hetero", 5, 5, 4000, HeteroTlConfig()) == pytest.approx(2.5e-3, rel=1e-12)
        with pytest.raises(ValueError):
            layer_lr("homo", 0, 5, 0, HomoTlConfig())

    @given(st.sampled_from(list(Mode)), st.integers(0, 50_000))
    def test_monotone_in_depth(self, mode, epoch):
        cfg = HomoTlConfig() if mode is Mode.HOMO else HeteroTlConfig()
        rates = [layer_lr(mode, l, 5, epoch, cfg) for l in range(1, 6)]
        assert all(a < b for a, b in zip(rates, rates[1:]))

    @given(st.integers(0, 50_000), st.integers(1, 5))
    def test_halving(self, epoch, l):
        cfg = HeteroTlConfig()
        assert layer_lr("hetero", l, 5, epoch + 2000, cfg) == layer_lr("hetero", l, 5, epoch, cfg) / 2


class TestSampler:
    def test_homo(self, small_campaign, rng):
        shots = transfer.tl_shot_sampler(small_campaign, "homo", 1, rng)
        assert len(shots) == 3 and all(r.n_active == 95 for r in shots)
        assert sorted(r.gain_target_db for r in shots) == [15.0, 20.0, 25.0]

    def test_hetero(self, ila_campaign):
        shots = transfer.tl_shot_sampler(ila_campaign, "hetero", 32, np.random.default_rng(0))
        assert len(shots) == 96
        for g in (10.0, 15.0, 20.0):
            group = [r for r in shots if r.gain_target_db == g]
            assert group[0].n_active == 95
            assert all(r.config_class.value == "Random" for r in group[1:])
        again = transfer.tl_shot_sampler(ila_campaign, "hetero", 32, np.random.default_rng(0))
        assert again == shots

    def test_errors(self, small_campaign, rng):
        with pytest.raises(EmptyShots):
            transfer.tl_shot_sampler(small_campaign, "homo", 0, rng)
        partial = [r for r in small_campaign if r.n_active < 95]
        with pytest.raises(MissingFullLoad):
            transfer.tl_shot_sampler(partial, "homo", 1, rng)
        with pytest.raises(InsufficientData):
            transfer.tl_shot_sampler(small_campaign, "hetero", 500, rng)


class TestReference:
    def test_duplicate_vector(self, source):
        X = np.tile(np.random.default_rng(0).normal(size=196), (128, 1))
        assert np.all(transfer.reference_covariance(source, X) == 0)

    def test_oracle(self, source, rng):
        X = rng.normal(size=(300, 196))
        C = transfer.reference_covariance(source, X, 128, np.random.default_rng(5))
        idx = np.sort(np.random.default_rng(5).choice(300, size=128, replace=False))
        assert C.shape == (100, 100)
        assert np.abs(C - C.T).max() <= 1e-12
        np.testing.assert_array_equal(C, nn.batch_covariance(nn.last_hidden(source, X[idx])))

    def test_insufficient(self, source):
        with pytest.raises(InsufficientData):
            transfer.reference_covariance(source, np.zeros((10, 196)))


class TestHomogeneous:
    def test_source_unchanged(self, source, small_campaign, tmp_path):
        before = nn.dumps_exact(nn.network_to_dict(source))
        shots = transfer.tl_shot_sampler(small_campaign, "homo", 1, np.random.default_rng(0))
        out = transfer.homogeneous_transfer(source, shots, HomoTlConfig(epochs=20))
        assert nn.dumps_exact(nn.network_to_dict(source)) == before
        assert out.metadata["transfer"] == "homo"

    def test_lower_layers_move_less(self, source, small_campaign):
        shots = transfer.tl_shot_sampler(small_campaign, "homo", 1, np.random.default_rng(0))
        out = transfer.homogeneous_transfer(source, shots, HomoTlConfig(epochs=100))
        rel = [np.linalg.norm(b - a) / np.linalg.norm(a) for a, b in zip(source.weights, out.weights)]
        assert rel[0] < rel[-1]

    def test_empty(self, source):
        with pytest.raises(EmptyShots):
            transfer.homogeneous_transfer(source, [], HomoTlConfig(epochs=1))


class TestHeterogeneous:
    def test_lambda_zero_equals_plain(self, source, ila_campaign):
        shots = transfer.tl_shot_sampler(ila_campaign, "hetero", 8, np.random.default_rng(0))
        cfg = HeteroTlConfig(epochs=15, lambda_coral=0.0)
        plain = source.copy()
        plain.coral_reference = None
        a = transfer.heterogeneous_transfer(source, shots, cfg, np.random.default_rng(1))
        b = transfer.heterogeneous_transfer(plain, shots, cfg, np.random.default_rng(1))
        assert all(np.array_equal(x, y) for x, y in zip(a.weights + a.biases, b.weights + b.biases))

    def test_coral_nonnegative_and_active(self, source, ila_campaign):
        shots = transfer.tl_shot_sampler(ila_campaign, "hetero", 8, np.random.default_rng(0))
        trace = []
        out = transfer.heterogeneous_transfer(source, shots, HeteroTlConfig(epochs=15), np.random.default_rng(1),
                                              trace=trace)
        assert len(trace) == 15
        assert all(t.coral >= 0 and t.total == t.weighted_mse + 0.4 * t.coral for t in trace)
        assert out.metadata["lambda_coral"] == 0.4

    def test_subset_batches(self, source, ila_campaign):
        shots = transfer.tl_shot_sampler(ila_campaign, "hetero", 48, np.random.default_rng(0))
        trace = []
        cfg = HeteroTlConfig(epochs=3, reference_batch=64)
        transfer.heterogeneous_transfer(source, shots, cfg, np.random.default_rng(1), trace=trace)
        assert len(trace) == 3

    def test_missing_reference(self, source, ila_campaign):
        plain = source.copy()
        plain.coral_reference = None
        shots = transfer.tl_shot_sampler(ila_campaign, "hetero", 2, np.random.default_rng(0))
        with pytest.raises(MissingReference):
            transfer.heterogeneous_transfer(plain, shots, HeteroTlConfig(epochs=1))
        with pytest.raises(EmptyShots):
            transfer.heterogeneous_transfer(source, [], HeteroTlConfig(epochs=1))
