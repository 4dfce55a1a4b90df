"""Monte Carlo predictive posterior and per-sample uncertainty scores.

Prediction draws S independent weight samples from the posterior (plain
reparameterized draws, not Flipout — inference wants exchangeable posterior
samples, not a variance-reduction trick), pushes the full batch through each
sampled linear head, and averages the softmax outputs. Uncertainty is scored
from the resulting distribution over probability vectors:

* confidence — max of the mean probabilities,
* entropy — H[p-bar] in nats,
* expected_entropy — mean over samples of H[p^(s)],
* mutual_info — max(0, entropy - expected_entropy), the epistemic part.

Sample s always draws from ``default_rng([seed, s])``, so runs with a larger
S extend a smaller run sample-for-sample and samples can be computed in any
order (or in parallel) without changing results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vbll import VBLinearLayer, sample_weights, softmax

__all__ = [
    "PredictionSet",
    "UncertaintyScores",
    "predictive_posterior",
    "uncertainty_scores",
    "save_predictions_csv",
    "save_prob_samples_csv",
]


@dataclass(frozen=True)
class PredictionSet:
    """Softmax outputs per MC weight sample, plus their mean and argmax.

    prob_samples is N x S x K; mean_probs is the sample mean over axis 1;
    predicted is the argmax of mean_probs with ties broken toward the lowest
    class index. Construction validates all of that, so a PredictionSet is
    internally consistent by the time anyone reads it.
    """

    prob_samples: np.ndarray
    mean_probs: np.ndarray
    predicted: np.ndarray
    mc_samples: int

    def __post_init__(self):
        probs = np.array(self.prob_samples, dtype=np.float64)
        mean = np.array(self.mean_probs, dtype=np.float64)
        pred = np.array(self.predicted, dtype=np.int64)
        if probs.ndim != 3:
            raise ValueError(f"prob_samples must be N x S x K, got {probs.shape}")
        n, s, k = probs.shape
        if self.mc_samples != s:
            raise ValueError(
                f"mc_samples is {self.mc_samples} but prob_samples has {s} samples"
            )
        if mean.shape != (n, k):
            raise ValueError(f"mean_probs must be {n} x {k}, got {mean.shape}")
        if pred.shape != (n,):
            raise ValueError(f"predicted must have length {n}, got {pred.shape}")
        if not np.all(np.isfinite(probs)):
            raise ValueError("prob_samples contains non-finite values")
        if np.any(probs < 0.0):
            raise ValueError("prob_samples contains negative probabilities")
        sums = probs.sum(axis=-1)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise ValueError("prob_samples slices must sum to 1 within 1e-9")
        if np.max(np.abs(mean - probs.mean(axis=1))) > 1e-12:
            raise ValueError("mean_probs must equal the mean of prob_samples")
        if not np.array_equal(pred, np.argmax(mean, axis=1)):
            raise ValueError("predicted must be the argmax of mean_probs")
        for arr in (probs, mean, pred):
            arr.flags.writeable = False
        object.__setattr__(self, "prob_samples", probs)
        object.__setattr__(self, "mean_probs", mean)
        object.__setattr__(self, "predicted", pred)

    @property
    def n_samples(self) -> int:
        return self.prob_samples.shape[0]

    @property
    def num_classes(self) -> int:
        return self.prob_samples.shape[2]


@dataclass(frozen=True)
class UncertaintyScores:
    """Per-sample uncertainty measures derived from a PredictionSet."""

    confidence: np.ndarray
    entropy: np.ndarray
    expected_entropy: np.ndarray
    mutual_info: np.ndarray

    def __post_init__(self):
        arrays = {}
        length = None
        for name in ("confidence", "entropy", "expected_entropy", "mutual_info"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if length is None:
                length = arr.shape[0]
            elif arr.shape[0] != length:
                raise ValueError("all score arrays must share one length")
            arr.flags.writeable = False
            arrays[name] = arr
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)


def _entropy(probs: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shannon entropy in nats along axis, with 0 ln 0 taken as 0."""
    p = np.asarray(probs, dtype=np.float64)
    terms = np.zeros_like(p)
    mask = p > 0.0
    terms[mask] = p[mask] * np.log(p[mask])
    return -terms.sum(axis=axis)


def _extract_features(layer: VBLinearLayer, data) -> np.ndarray:
    features = np.asarray(getattr(data, "features", data), dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be N x D, got shape {features.shape}")
    if features.shape[1] != layer.feature_dim:
        raise ValueError(
            f"feature dimension {features.shape[1]} does not match "
            f"layer feature_dim {layer.feature_dim}"
        )
    return features


def predictive_posterior(
    layer: VBLinearLayer, data, mc_samples: int = 20, seed: int = 0
) -> PredictionSet:
    """Sample the predictive posterior with S plain weight draws.

    `data` may be a FeatureDataset or a raw N x D array. Sample s draws its
    weights from ``default_rng([seed, s])``.
    """
    if mc_samples < 1:
        raise ValueError(f"mc_samples must be at least 1, got {mc_samples}")
    features = _extract_features(layer, data)
    n = features.shape[0]
    prob_samples = np.zeros((n, mc_samples, layer.num_classes))
    for s in range(mc_samples):
        rng = np.random.default_rng([seed, s])
        draw = sample_weights(layer, rng)
        logits = features @ draw.weights.T + draw.biases
        prob_samples[:, s, :] = softmax(logits, axis=-1)
    mean_probs = prob_samples.mean(axis=1)
    return PredictionSet(
        prob_samples=prob_samples,
        mean_probs=mean_probs,
        predicted=np.argmax(mean_probs, axis=1),
        mc_samples=mc_samples,
    )


def uncertainty_scores(pred: PredictionSet) -> UncertaintyScores:
    """Score each sample; pure function of pred.prob_samples."""
    entropy = _entropy(pred.mean_probs, axis=-1)
    expected_entropy = _entropy(pred.prob_samples, axis=2).mean(axis=1)
    return UncertaintyScores(
        confidence=pred.mean_probs.max(axis=1),
        entropy=entropy,
        expected_entropy=expected_entropy,
        mutual_info=np.maximum(0.0, entropy - expected_entropy),
    )


def save_predictions_csv(
    pred: PredictionSet, scores: UncertaintyScores, labels, path: str
) -> None:
    """Write `index,label,predicted,confidence,entropy,mutual_info` rows."""
    labels = np.asarray(labels, dtype=np.int64)
    n = pred.n_samples
    if labels.shape != (n,) or scores.confidence.shape != (n,):
        raise ValueError("labels and scores must match the prediction length")
    lines = ["index,label,predicted,confidence,entropy,mutual_info"]
    for i in range(n):
        lines.append(
            f"{i},{labels[i]},{pred.predicted[i]},"
            f"{float(scores.confidence[i])!r},{float(scores.entropy[i])!r},"
            f"{float(scores.mutual_info[i])!r}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def save_prob_samples_csv(pred: PredictionSet, path: str) -> None:
    """Write the full posterior sample grid: `index,sample,p0..p{K-1}`."""
    k = pred.num_classes
    header = "index,sample," + ",".join(f"p{j}" for j in range(k))
    lines = [header]
    for i in range(pred.n_samples):
        for s in range(pred.mc_samples):
            values = ",".join(
                repr(float(v)) for v in pred.prob_samples[i, s]
            )
            lines.append(f"{i},{s},{values}")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
