"""Variational Bayesian linear layer.

Every weight and bias carries an independent Gaussian posterior N(mu, sigma^2)
with sigma = softplus(rho), regularized toward an N(0, prior_scale^2) prior.
The module provides plain reparameterized sampling, a deterministic
posterior-mean forward pass, a Flipout forward pass for low-variance training
gradients, the closed-form KL to the prior, and JSON persistence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LAYER_FORMAT_VERSION = 1


def softplus(x):
    """ln(1 + e^x), computed without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus_inverse(y):
    """Inverse of softplus on y > 0: ln(e^y - 1), stable for large y."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    """Logistic function, accurate into both tails.

    The two-branch form keeps values like sigmoid(-40) ~ 4e-18 exact instead
    of flushing them to zero; gradients of softplus-parameterized scales rely
    on that precision when sigma is tiny.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def softmax(logits, axis=-1):
    """Stabilized softmax along axis; rows sum to 1 within 1e-12."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


@dataclass(frozen=True)
class VBLinearLayer:
    """Posterior parameters of a K-class linear head on D-dimensional features.

    weight_mu/weight_rho are K x D; bias_mu/bias_rho are length K. Standard
    deviations are derived, never stored: sigma = softplus(rho). Instances are
    immutable; training builds new layers rather than mutating.
    """

    weight_mu: np.ndarray
    weight_rho: np.ndarray
    bias_mu: np.ndarray
    bias_rho: np.ndarray
    prior_scale: float

    def __post_init__(self):
        for name in ("weight_mu", "weight_rho", "bias_mu", "bias_rho"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "prior_scale", float(self.prior_scale))
        if self.weight_mu.ndim != 2:
            raise ValueError("weight_mu must be a K x D matrix")
        k, d = self.weight_mu.shape
        if k < 1 or d < 1:
            raise ValueError("layer needs at least one class and one feature")
        if self.weight_rho.shape != (k, d):
            raise ValueError("weight_rho shape must match weight_mu")
        if self.bias_mu.shape != (k,) or self.bias_rho.shape != (k,):
            raise ValueError("bias parameters must be length-K vectors")
        if not (np.isfinite(self.prior_scale) and self.prior_scale > 0):
            raise ValueError("prior_scale must be positive and finite")

    @property
    def num_classes(self) -> int:
        return self.weight_mu.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weight_mu.shape[1]

    @property
    def weight_sigma(self) -> np.ndarray:
        return softplus(self.weight_rho)

    @property
    def bias_sigma(self) -> np.ndarray:
        return softplus(self.bias_rho)


@dataclass(frozen=True)
class WeightSample:
    """One concrete draw of weights and biases from the posterior."""

    weights: np.ndarray
    biases: np.ndarray


def init_layer(
    feature_dim: int,
    num_classes: int,
    mu_init_scale: float = 0.1,
    rho_init: float = -5.0,
    prior_scale: float = 1.0,
    seed: int = 0,
) -> VBLinearLayer:
    """Fresh layer: means uniform in [-mu_init_scale, mu_init_scale], all rho equal.

    The default rho_init of -5 gives sigma around 0.0067, so an untrained
    layer behaves almost deterministically.
    """
    if feature_dim < 1 or num_classes < 1:
        raise ValueError("feature_dim and num_classes must be at least 1")
    rng = np.random.default_rng(seed)
    a = float(mu_init_scale)
    if a < 0:
        raise ValueError("mu_init_scale must be nonnegative")
    return VBLinearLayer(
        weight_mu=rng.uniform(-a, a, (num_classes, feature_dim)),
        weight_rho=np.full((num_classes, feature_dim), float(rho_init)),
        bias_mu=rng.uniform(-a, a, num_classes),
        bias_rho=np.full(num_classes, float(rho_init)),
        prior_scale=prior_scale,
    )


def kl_to_prior(layer: VBLinearLayer) -> float:
    """Closed-form KL(posterior || N(0, s^2)) summed over all parameters.

    Per parameter: ln(s/sigma) + (sigma^2 + mu^2) / (2 s^2) - 1/2.
    """
    s = layer.prior_scale
    total = 0.0
    for mu, sigma in (
        (layer.weight_mu, layer.weight_sigma),
        (layer.bias_mu, layer.bias_sigma),
    ):
        total += float(
            np.sum(np.log(s / sigma) + (sigma**2 + mu**2) / (2.0 * s**2) - 0.5)
        )
    return total


def sample_weights(layer: VBLinearLayer, rng: np.random.Generator) -> WeightSample:
    """One reparameterized draw: w = mu + sigma * eps, weights first then biases."""
    eps_w = rng.standard_normal(layer.weight_mu.shape)
    eps_b = rng.standard_normal(layer.bias_mu.shape)
    return WeightSample(
        weights=layer.weight_mu + layer.weight_sigma * eps_w,
        biases=layer.bias_mu + layer.bias_sigma * eps_b,
    )


def _check_batch(layer: VBLinearLayer, batch) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != layer.feature_dim:
        raise ValueError(
            f"batch must be B x {layer.feature_dim}, got shape {batch.shape}"
        )
    return batch


def forward_mean(layer: VBLinearLayer, batch) -> np.ndarray:
    """Deterministic logits through the posterior means."""
    batch = _check_batch(layer, batch)
    return batch @ layer.weight_mu.T + layer.bias_mu


def flipout_noise(layer: VBLinearLayer, n_rows: int, rng: np.random.Generator):
    """Draw the full noise bundle for one Flipout pass, in a fixed order.

    Returns (eps_w K x D, eps_b K, sign_in B x D, sign_out B x K). Training
    replays gradients against the same bundle, so the draw order here is part
    of the determinism contract.
    """
    eps_w = rng.standard_normal(layer.weight_mu.shape)
    eps_b = rng.standard_normal(layer.bias_mu.shape)
    sign_in = rng.integers(0, 2, size=(n_rows, layer.feature_dim)) * 2.0 - 1.0
    sign_out = rng.integers(0, 2, size=(n_rows, layer.num_classes)) * 2.0 - 1.0
    return eps_w, eps_b, sign_in, sign_out


def flipout_logits(layer: VBLinearLayer, batch: np.ndarray, noise) -> np.ndarray:
    """Logits for an already-drawn noise bundle (see flipout_noise)."""
    eps_w, eps_b, sign_in, sign_out = noise
    delta_w = layer.weight_sigma * eps_w
    delta_b = layer.bias_sigma * eps_b
    base = batch @ layer.weight_mu.T + layer.bias_mu
    pert = ((batch * sign_in) @ delta_w.T + delta_b) * sign_out
    return base + pert


def forward_flipout(
    layer: VBLinearLayer, batch, rng: np.random.Generator
) -> np.ndarray:
    """Stochastic logits with one shared weight perturbation per call.

    The shared perturbation delta_W = sigma_W * eps is modulated per row by
    independent sign vectors, giving each example a pseudo-independent
    perturbation while drawing the expensive noise only once.
    """
    batch = _check_batch(layer, batch)
    noise = flipout_noise(layer, batch.shape[0], rng)
    return flipout_logits(layer, batch, noise)


def save_layer(layer: VBLinearLayer, path) -> None:
    """Persist the layer as sorted, indented JSON (format_version 1)."""
    doc = {
        "format_version": LAYER_FORMAT_VERSION,
        "feature_dim": layer.feature_dim,
        "num_classes": layer.num_classes,
        "prior_scale": layer.prior_scale,
        "weight_mu": layer.weight_mu.tolist(),
        "weight_rho": layer.weight_rho.tolist(),
        "bias_mu": layer.bias_mu.tolist(),
        "bias_rho": layer.bias_rho.tolist(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_layer(path) -> VBLinearLayer:
    """Load a layer written by save_layer, rejecting malformed documents."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a JSON object")
    required = {
        "format_version",
        "feature_dim",
        "num_classes",
        "prior_scale",
        "weight_mu",
        "weight_rho",
        "bias_mu",
        "bias_rho",
    }
    missing = required - doc.keys()
    if missing:
        raise ValueError(f"{path}: missing fields {sorted(missing)}")
    unknown = doc.keys() - required
    if unknown:
        raise ValueError(f"{path}: unknown fields {sorted(unknown)}")
    if doc["format_version"] != LAYER_FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported format_version {doc['format_version']!r}"
        )
    layer = VBLinearLayer(
        weight_mu=np.array(doc["weight_mu"], dtype=np.float64),
        weight_rho=np.array(doc["weight_rho"], dtype=np.float64),
        bias_mu=np.array(doc["bias_mu"], dtype=np.float64),
        bias_rho=np.array(doc["bias_rho"], dtype=np.float64),
        prior_scale=doc["prior_scale"],
    )
    if layer.feature_dim != doc["feature_dim"] or layer.num_classes != doc["num_classes"]:
        raise ValueError(f"{path}: declared dimensions do not match arrays")
    return layer
