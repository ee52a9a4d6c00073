import numpy as np
import pytest

from multicred import network as nn
from multicred.autoencoder import (
    Autoencoder,
    AutoencoderSpec,
    autoencoder_from_dict,
    load_autoencoder,
    reconstruction_error,
    save_autoencoder,
    train_autoencoder,
)
from multicred.domain import DomainError


@pytest.fixture(scope="module")
def small_corpus():
    return np.random.default_rng(0).normal(size=(48, 768)) * 0.1


@pytest.fixture(scope="module")
def trained(small_corpus):
    return train_autoencoder(small_corpus, AutoencoderSpec(epochs=8, batch_size=16, seed=1))


class TestSpec:
    def test_latent_and_input_dims_are_fixed(self):
        with pytest.raises(DomainError):
            AutoencoderSpec(latent_dim=12)
        with pytest.raises(DomainError):
            AutoencoderSpec(input_dim=512)

    def test_training_knobs_validated(self):
        with pytest.raises(DomainError):
            AutoencoderSpec(epochs=0)


class TestEncode:
    def test_latent_has_ten_components(self, trained):
        ae, _ = trained
        latent = ae.encode(np.ones(768))
        assert latent.shape == (10,)

    def test_deterministic(self, trained):
        ae, _ = trained
        x = np.random.default_rng(2).normal(size=768)
        np.testing.assert_array_equal(ae.encode(x), ae.encode(x))

    def test_wrong_width_is_shape_error(self, trained):
        ae, _ = trained
        with pytest.raises(nn.ShapeError):
            ae.encode(np.ones(767))

    def test_untrained_refuses_to_encode(self):
        ae = Autoencoder.initialize(AutoencoderSpec())
        with pytest.raises(nn.StateError, match="untrained"):
            ae.encode(np.ones(768))

    def test_decode_restores_dimension(self, trained, small_corpus):
        ae, _ = trained
        assert ae.reconstruct(small_corpus[:3]).shape == (3, 768)


class TestTraining:
    def test_deterministic_history_and_parameters(self, small_corpus):
        spec = AutoencoderSpec(epochs=4, batch_size=16, seed=5)
        ae1, hist1 = train_autoencoder(small_corpus, spec)
        ae2, hist2 = train_autoencoder(small_corpus, spec)
        assert hist1 == hist2
        for p1, p2 in zip(ae1.model.params, ae2.model.params):
            for key in p1:
                np.testing.assert_array_equal(p1[key], p2[key])

    def test_nan_input_rejected_before_training(self):
        bad = np.zeros((4, 768))
        bad[1, 7] = np.nan
        with pytest.raises(nn.NumericError):
            train_autoencoder(bad, AutoencoderSpec(epochs=1))

    def test_needs_two_vectors(self):
        with pytest.raises(DomainError):
            train_autoencoder(np.zeros((1, 768)), AutoencoderSpec(epochs=1))

    def test_history_finite_with_nonincreasing_trend(self):
        corpus = np.random.default_rng(6).normal(size=(120, 768)) * 0.1
        _, history = train_autoencoder(corpus, AutoencoderSpec(epochs=60, batch_size=16, seed=7))
        history = np.asarray(history)
        assert np.all(np.isfinite(history))
        window = 20
        moving = np.convolve(history, np.ones(window) / window, mode="valid")
        # Non-increasing up to blips: no step may rise by more than 5%.
        assert np.all(np.diff(moving) <= 0.05 * moving[:-1])

    def test_training_reduces_error(self, small_corpus, trained):
        ae, _ = trained
        untrained = Autoencoder.initialize(AutoencoderSpec(seed=1))
        assert reconstruction_error(ae, small_corpus) < reconstruction_error(
            untrained, small_corpus
        )

    def test_zero_corpus_converges_to_zero(self):
        zeros = np.zeros((32, 768))
        ae, _ = train_autoencoder(zeros, AutoencoderSpec(epochs=200, batch_size=16, seed=3))
        assert reconstruction_error(ae, zeros) < 1e-6


class TestReconstructionError:
    def test_nonnegative(self, trained, small_corpus):
        ae, _ = trained
        assert reconstruction_error(ae, small_corpus) >= 0.0

    def test_shape_mismatch(self, trained):
        ae, _ = trained
        with pytest.raises(nn.ShapeError):
            reconstruction_error(ae, np.zeros((3, 100)))


class TestSerialization:
    def test_roundtrip(self, trained, small_corpus, tmp_path):
        ae, _ = trained
        path = tmp_path / "ae.json"
        save_autoencoder(ae, path)
        loaded = load_autoencoder(path)
        assert loaded.trained
        np.testing.assert_array_equal(
            loaded.encode_batch(small_corpus[:4]), ae.encode_batch(small_corpus[:4])
        )

    def test_kind_tag_prevents_cross_loading(self, trained):
        ae, _ = trained
        doc = nn.model_to_dict(ae.model, artifact_kind="classifier")
        with pytest.raises(nn.StateError):
            autoencoder_from_dict(doc)
