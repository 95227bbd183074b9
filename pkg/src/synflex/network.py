"""Feedforward classifier with metaplastic dense layers.

A frozen random projection + rectifier stands in for a pretrained feature
extractor; the trainable part is a stack of dense layers with rectifier
activations and a softmax output, updated by plain SGD with the per-weight
flexibility-scaled learning rate from the synapse module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalFault, ShapeError
from .synapse import FlexibilityProfile, RuleConfig, sample_values, scale


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# --- frozen feature extractor -------------------------------------------------


@dataclass(frozen=True)
class FeatureExtractor:
    """Fixed random projection followed by a rectifier. Never trained."""

    projection: np.ndarray  # (feature_dim, input_dim), read-only
    seed: int

    @property
    def input_dim(self) -> int:
        return self.projection.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.projection.shape[0]


def make_extractor(input_dim: int, feature_dim: int, seed: int) -> FeatureExtractor:
    if input_dim <= 0 or feature_dim <= 0:
        raise ConfigurationError("extractor dims must be positive")
    rng = np.random.default_rng(seed)
    proj = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(feature_dim, input_dim))
    return FeatureExtractor(projection=_readonly(proj), seed=seed)


def extract_features(extractor: FeatureExtractor, images: np.ndarray) -> np.ndarray:
    """rectifier(projection @ flatten(image)); accepts one image (H, W) or a
    batch (N, H, W) with pixel values in [0, 1]."""
    x = np.asarray(images, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != extractor.input_dim:
        raise ShapeError(
            f"image flattens to {flat.shape[1]} pixels, extractor expects {extractor.input_dim}")
    out = np.maximum(flat @ extractor.projection.T, 0.0)
    return out[0] if single else out


@dataclass
class FeatureStandardizer:
    """Per-feature affine map (x - mean) / sd, fit once on the composed train
    set and frozen. Kills the common-mode feature direction that otherwise
    lets each new readout's logits spill onto every other class."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureStandardizer":
        return cls(mean=_readonly(features.mean(axis=0)),
                   sd=_readonly(features.std(axis=0) + 1e-8))

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.mean) / self.sd


# --- metaplastic dense network -------------------------------------------------


class MetaplasticLayer:
    """Dense layer whose weights and biases each carry a fixed flexibility and
    a phase-start reference snapshot."""

    def __init__(self, weights, biases, flex_w, flex_b):
        self.W = weights            # (out_dim, in_dim)
        self.b = biases             # (out_dim,)
        self.FW = _readonly(flex_w)
        self.Fb = _readonly(flex_b)
        self.W_init = _readonly(weights.copy())
        self.b_init = _readonly(biases.copy())
        self.W_ref = weights.copy()
        self.b_ref = biases.copy()

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def refresh_reference(self):
        np.copyto(self.W_ref, self.W)
        np.copyto(self.b_ref, self.b)

    def phase_rates(self, config: RuleConfig):
        """Per-parameter learning rates eta * S for the current phase."""
        lr_w = config.eta * scale(self.FW, self.W_ref - self.W_init,
                                  config.alpha, config.flexibility_floor)
        lr_b = config.eta * scale(self.Fb, self.b_ref - self.b_init,
                                  config.alpha, config.flexibility_floor)
        return lr_w, lr_b


class ClassifierNet:
    """Stack of metaplastic dense layers, rectifiers between, softmax on top."""

    def __init__(self, layers: list[MetaplasticLayer]):
        self.layers = layers
        self.refresh_count = 0

    @property
    def n_readouts(self) -> int:
        return self.layers[-1].out_dim

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def refresh_reference(self):
        for layer in self.layers:
            layer.refresh_reference()
        self.refresh_count += 1

    def flexibility_values(self) -> np.ndarray:
        """All flexibility values of the net, flattened (weights then biases,
        layer by layer)."""
        parts = []
        for layer in self.layers:
            parts.append(layer.FW.ravel())
            parts.append(layer.Fb.ravel())
        return np.concatenate(parts)


def init_classifier(layer_dims: list[int], profile: FlexibilityProfile, seed: int) -> ClassifierNet:
    """Build a net with weights ~ N(0, 1/sqrt(fan_in)), zero biases, and
    flexibility sampled per parameter from the profile. layer_dims includes
    the input dimension, e.g. [64, 32, 10]."""
    if len(layer_dims) < 2:
        raise ConfigurationError("layer_dims needs at least input and output sizes")
    if any(d <= 0 for d in layer_dims):
        raise ConfigurationError(f"layer sizes must be positive, got {layer_dims}")
    rng = np.random.default_rng(seed)
    n_params = sum((i + 1) * o for i, o in zip(layer_dims[:-1], layer_dims[1:]))
    flex = sample_values(profile, n_params)
    layers = []
    offset = 0
    for in_dim, out_dim in zip(layer_dims[:-1], layer_dims[1:]):
        w = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))
        b = np.zeros(out_dim)
        fw = flex[offset:offset + out_dim * in_dim].reshape(out_dim, in_dim).copy()
        offset += out_dim * in_dim
        fb = flex[offset:offset + out_dim].copy()
        offset += out_dim
        layers.append(MetaplasticLayer(w, b, fw, fb))
    return ClassifierNet(layers)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(net: ClassifierNet, features: np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector or a batch of them."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != net.input_dim:
        raise ShapeError(f"features have dim {x.shape[1]}, net expects {net.input_dim}")
    h = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = h @ layer.W.T + layer.b
        h = z if i == last else np.maximum(z, 0.0)
    p = softmax(h)
    return p[0] if single else p


def predict_readouts(net: ClassifierNet, features: np.ndarray) -> np.ndarray:
    """Argmax readout per row; ties resolve to the lowest index (np.argmax)."""
    return np.argmax(forward(net, features), axis=-1)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    return float(-(targets * np.log(probs + 1e-300)).sum(axis=1).mean())


def make_batches(features: np.ndarray, targets: np.ndarray, batch_size: int):
    """Slice (features, targets) into consecutive batches; the caller owns
    the example order."""
    if batch_size <= 0:
        raise ConfigurationError("batch_size must be positive")
    n = features.shape[0]
    return [(features[s:s + batch_size], targets[s:s + batch_size])
            for s in range(0, n, batch_size)]


def train_phase(net: ClassifierNet, batches, config: RuleConfig, epochs: int) -> list[float]:
    """Train one item phase: every step uses softmax cross-entropy against the
    target distributions, with per-parameter rates eta * S(f, delta_w) fixed
    for the whole phase. The batch sequence is replayed once per epoch.
    Returns the mean loss per epoch; mutates the net in place.
    """
    if epochs < 0:
        raise ConfigurationError("epochs must be >= 0")
    rates = [layer.phase_rates(config) for layer in net.layers]
    last = len(net.layers) - 1
    trace = []
    for epoch in range(epochs):
        total, count = 0.0, 0
        for bi, (xb, tb) in enumerate(batches):
            n = xb.shape[0]
            acts = [xb]
            h = xb
            zs = []
            for i, layer in enumerate(net.layers):
                z = h @ layer.W.T + layer.b
                zs.append(z)
                h = z if i == last else np.maximum(z, 0.0)
                acts.append(h)
            probs = softmax(h)
            loss = cross_entropy(probs, tb)
            if not np.isfinite(loss):
                raise NumericalFault(
                    f"non-finite loss at epoch {epoch}, batch {bi}", epoch=epoch, batch=bi)
            total += loss * n
            count += n
            d = (probs - tb) / n
            for i in range(last, -1, -1):
                layer = net.layers[i]
                g_w = d.T @ acts[i]
                g_b = d.sum(axis=0)
                if i > 0:
                    d = (d @ layer.W) * (zs[i - 1] > 0.0)
                lr_w, lr_b = rates[i]
                layer.W -= lr_w * g_w
                layer.b -= lr_b * g_b
        trace.append(total / max(count, 1))
    return trace


def loss_and_gradients(net: ClassifierNet, features: np.ndarray, targets: np.ndarray):
    """Cross-entropy loss and analytic gradients for every weight and bias;
    used by the finite-difference checks."""
    x = np.asarray(features, dtype=np.float64)
    last = len(net.layers) - 1
    acts = [x]
    zs = []
    h = x
    for i, layer in enumerate(net.layers):
        z = h @ layer.W.T + layer.b
        zs.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    probs = softmax(h)
    loss = cross_entropy(probs, targets)
    grads = []
    d = (probs - targets) / x.shape[0]
    for i in range(last, -1, -1):
        g_w = d.T @ acts[i]
        g_b = d.sum(axis=0)
        grads.append((g_w, g_b))
        if i > 0:
            d = (d @ net.layers[i].W) * (zs[i - 1] > 0.0)
    grads.reverse()
    return loss, grads
