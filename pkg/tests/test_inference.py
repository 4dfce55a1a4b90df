"""Tests for Monte Carlo predictive inference and uncertainty scores."""

import math
import os

import numpy as np
import pytest

from vbselect.dataset import (
    FeatureDataset,
    SplitRatios,
    SyntheticConfig,
    generate_synthetic,
    stratified_split,
)
from vbselect.inference import (
    PredictionSet,
    UncertaintyScores,
    predictive_posterior,
    save_predictions_csv,
    save_prob_samples_csv,
    uncertainty_scores,
)
from vbselect.training import LayerInitConfig, TrainConfig, train
from vbselect.vbll import VBLinearLayer, init_layer


def softplus_ref(x):
    return np.logaddexp(0.0, x)


def entropy_ref(p):
    """Plain-Python Shannon entropy in nats with 0 ln 0 = 0."""
    return float(-sum(pi * math.log(pi) for pi in p if pi > 0.0))


def reference_posterior(layer, features, mc_samples, seed):
    """Independent re-implementation of the posterior sampling loop.

    Draws weight noise in the same documented stream order as
    ``sample_weights`` (weight matrix first, then bias) from
    ``default_rng([seed, s])`` and applies a shift-stabilized softmax.
    """
    n, d = features.shape
    k = layer.num_classes
    sigma_w = softplus_ref(layer.weight_rho)
    sigma_b = softplus_ref(layer.bias_rho)
    out = np.zeros((n, mc_samples, k))
    for s in range(mc_samples):
        rng = np.random.default_rng([seed, s])
        eps_w = rng.standard_normal((k, d))
        eps_b = rng.standard_normal(k)
        weight = layer.weight_mu + sigma_w * eps_w
        bias = layer.bias_mu + sigma_b * eps_b
        logits = features @ weight.T + bias
        shifted = logits - logits.max(axis=-1, keepdims=True)
        expz = np.exp(shifted)
        out[:, s, :] = expz / expz.sum(axis=-1, keepdims=True)
    return out


def make_prediction_set(prob_samples):
    prob_samples = np.asarray(prob_samples, dtype=np.float64)
    mean_probs = prob_samples.mean(axis=1)
    predicted = np.argmax(mean_probs, axis=1)
    return PredictionSet(
        prob_samples=prob_samples,
        mean_probs=mean_probs,
        predicted=predicted,
        mc_samples=prob_samples.shape[1],
    )


def random_prob_samples(rng, n, s, k):
    raw = rng.gamma(shape=1.0, scale=1.0, size=(n, s, k)) + 1e-12
    return raw / raw.sum(axis=-1, keepdims=True)


@pytest.fixture(scope="module")
def trained_model():
    config = SyntheticConfig(
        num_classes=3,
        feature_dim=8,
        samples_per_class=(60, 60, 60),
        class_separation=3.0,
        noise_scale=1.0,
    )
    full = generate_synthetic(config, seed=97)
    train_ds, val_ds, _ = stratified_split(
        full, SplitRatios(0.7, 0.15, 0.15), seed=97
    )
    layer, _ = train(
        train_ds,
        val_ds,
        LayerInitConfig(seed=97),
        TrainConfig(epochs=10, batch_size=32, seed=97),
    )
    return layer, val_ds


class TestPredictivePosterior:
    def test_matches_reference_implementation_exactly(self, trained_model):
        layer, val_ds = trained_model
        pred = predictive_posterior(layer, val_ds, mc_samples=25, seed=31)
        expected = reference_posterior(layer, val_ds.features, 25, seed=31)
        np.testing.assert_array_equal(pred.prob_samples, expected)
        np.testing.assert_array_equal(pred.mean_probs, expected.mean(axis=1))

    def test_shapes_and_fields(self, trained_model):
        layer, val_ds = trained_model
        pred = predictive_posterior(layer, val_ds, mc_samples=7, seed=0)
        n = val_ds.n_samples
        assert pred.prob_samples.shape == (n, 7, 3)
        assert pred.mean_probs.shape == (n, 3)
        assert pred.predicted.shape == (n,)
        assert pred.mc_samples == 7
        assert pred.predicted.dtype == np.int64

    def test_deterministic_for_equal_seeds(self, trained_model):
        layer, val_ds = trained_model
        a = predictive_posterior(layer, val_ds, mc_samples=9, seed=5)
        b = predictive_posterior(layer, val_ds, mc_samples=9, seed=5)
        c = predictive_posterior(layer, val_ds, mc_samples=9, seed=6)
        np.testing.assert_array_equal(a.prob_samples, b.prob_samples)
        assert np.max(np.abs(a.prob_samples - c.prob_samples)) > 0.0

    def test_sample_streams_are_prefix_stable(self, trained_model):
        # Sample s draws from rng([seed, s]), so a longer run extends a
        # shorter one rather than reshuffling it.
        layer, val_ds = trained_model
        short = predictive_posterior(layer, val_ds, mc_samples=6, seed=21)
        long = predictive_posterior(layer, val_ds, mc_samples=12, seed=21)
        np.testing.assert_array_equal(
            long.prob_samples[:, :6, :], short.prob_samples
        )

    def test_deterministic_weights_make_identical_samples(self):
        layer = init_layer(4, 3, rho_init=-40.0, seed=8)
        features = np.random.default_rng(3).standard_normal((10, 4))
        ds = FeatureDataset(features, np.zeros(10, dtype=np.int64), 3)
        pred = predictive_posterior(layer, ds, mc_samples=15, seed=2)
        for s in range(15):
            np.testing.assert_allclose(
                pred.prob_samples[:, s, :],
                pred.prob_samples[:, 0, :],
                rtol=0.0,
                atol=1e-12,
            )
        scores = uncertainty_scores(pred)
        # sigma ~ 4e-18 still flips last-ulp bits of mu, so "identical" means
        # up to rounding, and mutual information is zero only to that order.
        np.testing.assert_allclose(scores.mutual_info, 0.0, rtol=0.0, atol=1e-12)

    def test_single_sample_identities(self, trained_model):
        layer, val_ds = trained_model
        pred = predictive_posterior(layer, val_ds, mc_samples=1, seed=11)
        np.testing.assert_array_equal(pred.mean_probs, pred.prob_samples[:, 0, :])
        scores = uncertainty_scores(pred)
        np.testing.assert_allclose(
            scores.expected_entropy, scores.entropy, rtol=0.0, atol=1e-12
        )
        np.testing.assert_array_equal(scores.mutual_info, np.zeros(val_ds.n_samples))

    def test_small_run_tracks_large_reference_run(self, trained_model):
        layer, val_ds = trained_model
        small = predictive_posterior(layer, val_ds, mc_samples=20, seed=77)
        reference = reference_posterior(layer, val_ds.features, 10_000, seed=77)
        gap = np.abs(small.mean_probs - reference.mean(axis=1)).max(axis=1)
        assert float(gap.mean()) <= 0.02

    def test_nested_seed_runs_converge(self, trained_model):
        layer, val_ds = trained_model
        sizes = [4, 8, 16, 32, 64, 128]
        means = [
            predictive_posterior(layer, val_ds, mc_samples=s, seed=13).mean_probs
            for s in sizes
        ]
        gaps = [
            float(np.max(np.abs(means[i] - means[i + 1])))
            for i in range(len(sizes) - 1)
        ]
        # Statistical trend over five doublings, not strict per-step decay.
        assert gaps[-1] < gaps[0]
        assert gaps[-1] + gaps[-2] < gaps[0] + gaps[1]

    def test_accepts_raw_feature_array(self, trained_model):
        layer, val_ds = trained_model
        via_ds = predictive_posterior(layer, val_ds, mc_samples=4, seed=9)
        via_arr = predictive_posterior(layer, val_ds.features, mc_samples=4, seed=9)
        np.testing.assert_array_equal(via_ds.prob_samples, via_arr.prob_samples)

    def test_argmax_ties_pick_lowest_class(self):
        mu = np.tile(np.linspace(-0.5, 0.5, 4), (3, 1))
        layer = VBLinearLayer(
            weight_mu=mu,
            weight_rho=np.full((3, 4), -40.0),
            bias_mu=np.zeros(3),
            bias_rho=np.full(3, -40.0),
            prior_scale=1.0,
        )
        features = np.random.default_rng(0).standard_normal((6, 4))
        ds = FeatureDataset(features, np.zeros(6, dtype=np.int64), 3)
        pred = predictive_posterior(layer, ds, mc_samples=3, seed=0)
        np.testing.assert_array_equal(pred.predicted, np.zeros(6, dtype=np.int64))

    def test_rejects_bad_mc_samples(self, trained_model):
        layer, val_ds = trained_model
        with pytest.raises(ValueError, match="mc_samples"):
            predictive_posterior(layer, val_ds, mc_samples=0, seed=0)

    def test_rejects_dimension_mismatch(self, trained_model):
        layer, _ = trained_model
        bad = FeatureDataset(np.zeros((4, 5)), np.zeros(4, dtype=np.int64), 2)
        with pytest.raises(ValueError, match="feature"):
            predictive_posterior(layer, bad, mc_samples=3, seed=0)


class TestPredictionSetValidation:
    def test_valid_construction(self):
        rng = np.random.default_rng(0)
        pred = make_prediction_set(random_prob_samples(rng, 5, 3, 4))
        assert pred.mc_samples == 3
        assert not pred.prob_samples.flags.writeable

    def test_rejects_unnormalized_slices(self):
        probs = np.full((2, 2, 2), 0.4)
        with pytest.raises(ValueError, match="sum"):
            PredictionSet(
                prob_samples=probs,
                mean_probs=probs.mean(axis=1),
                predicted=np.zeros(2, dtype=np.int64),
                mc_samples=2,
            )

    def test_rejects_inconsistent_mean(self):
        rng = np.random.default_rng(1)
        probs = random_prob_samples(rng, 3, 2, 3)
        with pytest.raises(ValueError, match="mean_probs"):
            PredictionSet(
                prob_samples=probs,
                mean_probs=np.full((3, 3), 1.0 / 3.0),
                predicted=np.zeros(3, dtype=np.int64),
                mc_samples=2,
            )

    def test_rejects_wrong_argmax(self):
        probs = np.array([[[0.7, 0.2, 0.1]]])
        with pytest.raises(ValueError, match="predicted"):
            PredictionSet(
                prob_samples=probs,
                mean_probs=probs.mean(axis=1),
                predicted=np.array([2], dtype=np.int64),
                mc_samples=1,
            )

    def test_rejects_wrong_sample_count(self):
        rng = np.random.default_rng(2)
        probs = random_prob_samples(rng, 2, 4, 2)
        with pytest.raises(ValueError, match="mc_samples"):
            PredictionSet(
                prob_samples=probs,
                mean_probs=probs.mean(axis=1),
                predicted=np.argmax(probs.mean(axis=1), axis=1),
                mc_samples=5,
            )


class TestUncertaintyScores:
    def test_uniform_mean_probabilities(self):
        pred = make_prediction_set(np.full((1, 1, 5), 0.2))
        scores = uncertainty_scores(pred)
        assert scores.confidence[0] == 0.2
        assert scores.entropy[0] == pytest.approx(math.log(5.0), rel=1e-12)

    def test_point_mass(self):
        probs = np.zeros((1, 2, 4))
        probs[:, :, 2] = 1.0
        scores = uncertainty_scores(make_prediction_set(probs))
        assert scores.confidence[0] == 1.0
        assert scores.entropy[0] == 0.0
        assert scores.expected_entropy[0] == 0.0
        assert scores.mutual_info[0] == 0.0

    def test_maximal_disagreement(self):
        probs = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        scores = uncertainty_scores(make_prediction_set(probs))
        assert scores.confidence[0] == 0.5
        assert scores.entropy[0] == pytest.approx(math.log(2.0), rel=1e-15)
        assert scores.expected_entropy[0] == 0.0
        assert scores.mutual_info[0] == pytest.approx(math.log(2.0), rel=1e-15)

    def test_matches_plain_python_entropies(self):
        rng = np.random.default_rng(7)
        pred = make_prediction_set(random_prob_samples(rng, 20, 6, 4))
        scores = uncertainty_scores(pred)
        for n in range(20):
            assert scores.entropy[n] == pytest.approx(
                entropy_ref(pred.mean_probs[n]), rel=1e-12
            )
            expected_ee = sum(
                entropy_ref(pred.prob_samples[n, s]) for s in range(6)
            ) / 6.0
            assert scores.expected_entropy[n] == pytest.approx(expected_ee, rel=1e-12)

    def test_bounds_hold_on_random_sets(self):
        rng = np.random.default_rng(123)
        for _ in range(200):
            n = int(rng.integers(1, 8))
            s = int(rng.integers(1, 6))
            k = int(rng.integers(2, 7))
            scores = uncertainty_scores(
                make_prediction_set(random_prob_samples(rng, n, s, k))
            )
            assert np.all(scores.confidence >= 1.0 / k)
            assert np.all(scores.confidence <= 1.0)
            assert np.all(scores.entropy >= 0.0)
            assert np.all(scores.entropy <= math.log(k))
            assert np.all(scores.expected_entropy >= 0.0)
            assert np.all(scores.expected_entropy <= math.log(k))
            assert np.all(scores.mutual_info >= 0.0)
            assert np.all(scores.entropy + 1e-9 >= scores.expected_entropy)

    def test_mutual_info_clamped_at_zero(self):
        # All samples identical: entropy == expected_entropy up to rounding,
        # and the clamp must never let round-off go negative.
        rng = np.random.default_rng(55)
        row = random_prob_samples(rng, 1, 1, 5)[0, 0]
        probs = np.tile(row, (30, 8, 1))
        scores = uncertainty_scores(make_prediction_set(probs))
        assert np.all(scores.mutual_info >= 0.0)
        np.testing.assert_allclose(scores.mutual_info, 0.0, rtol=0.0, atol=1e-12)

    def test_class_permutation_moves_predictions_not_scores(self):
        rng = np.random.default_rng(17)
        probs = random_prob_samples(rng, 25, 5, 6)
        perm = rng.permutation(6)
        inverse = np.empty(6, dtype=np.int64)
        inverse[perm] = np.arange(6)
        base = make_prediction_set(probs)
        permuted = make_prediction_set(probs[:, :, perm])
        np.testing.assert_array_equal(permuted.predicted, inverse[base.predicted])
        a = uncertainty_scores(base)
        b = uncertainty_scores(permuted)
        np.testing.assert_allclose(b.confidence, a.confidence, rtol=0.0, atol=1e-15)
        np.testing.assert_allclose(b.entropy, a.entropy, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(
            b.expected_entropy, a.expected_entropy, rtol=0.0, atol=1e-12
        )
        np.testing.assert_allclose(
            b.mutual_info, a.mutual_info, rtol=0.0, atol=1e-12
        )

    def test_scores_ignore_sample_order(self):
        rng = np.random.default_rng(29)
        probs = random_prob_samples(rng, 10, 7, 3)
        shuffled = probs[:, rng.permutation(7), :]
        a = uncertainty_scores(make_prediction_set(probs))
        b = uncertainty_scores(make_prediction_set(shuffled))
        np.testing.assert_allclose(b.confidence, a.confidence, rtol=0.0, atol=1e-15)
        np.testing.assert_allclose(
            b.expected_entropy, a.expected_entropy, rtol=0.0, atol=1e-12
        )


class TestPredictionExports:
    def test_predictions_csv_layout(self, tmp_path):
        rng = np.random.default_rng(3)
        pred = make_prediction_set(random_prob_samples(rng, 4, 3, 3))
        scores = uncertainty_scores(pred)
        labels = np.array([2, 0, 1, 1], dtype=np.int64)
        path = os.path.join(tmp_path, "predictions.csv")
        save_predictions_csv(pred, scores, labels, path)
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        assert lines[0] == "index,label,predicted,confidence,entropy,mutual_info"
        assert len(lines) == 5
        for n, line in enumerate(lines[1:]):
            cells = line.split(",")
            assert cells[0] == str(n)
            assert cells[1] == str(labels[n])
            assert cells[2] == str(pred.predicted[n])
            assert float(cells[3]) == scores.confidence[n]
            assert float(cells[4]) == scores.entropy[n]
            assert float(cells[5]) == scores.mutual_info[n]

    def test_prob_samples_csv_layout(self, tmp_path):
        rng = np.random.default_rng(4)
        pred = make_prediction_set(random_prob_samples(rng, 2, 3, 4))
        path = os.path.join(tmp_path, "samples.csv")
        save_prob_samples_csv(pred, path)
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        assert lines[0] == "index,sample,p0,p1,p2,p3"
        assert len(lines) == 1 + 2 * 3
        row = 1
        for n in range(2):
            for s in range(3):
                cells = lines[row].split(",")
                assert cells[0] == str(n)
                assert cells[1] == str(s)
                recovered = np.array([float(c) for c in cells[2:]])
                np.testing.assert_array_equal(recovered, pred.prob_samples[n, s])
                row += 1

    def test_predictions_csv_rejects_length_mismatch(self, tmp_path):
        rng = np.random.default_rng(5)
        pred = make_prediction_set(random_prob_samples(rng, 4, 2, 3))
        scores = uncertainty_scores(pred)
        with pytest.raises(ValueError, match="length"):
            save_predictions_csv(
                pred, scores, np.zeros(3, dtype=np.int64),
                os.path.join(tmp_path, "bad.csv"),
            )
