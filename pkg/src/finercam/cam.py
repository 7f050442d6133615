"""Channel-weighting schemes and saliency composition.

A class activation map is ``h(sum_k alpha_k * A_k)`` over the K feature maps
A_k of one layer. The comparative ("finer") variants replace the target
logit with the logit difference ``y_c - gamma * y_d`` against a similar
reference class d, which for channel weights is simply
``alpha_c - gamma * alpha_d``. Everything here is pure over immutable
arrays; hot loops live in :mod:`finercam.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .head import ClassifierHead, predict_logits

METHODS = ("grad", "layer", "score")
ACTIVATIONS = ("relu", "identity")
AGGREGATIONS = ("avg_before_act", "max_before_act", "avg_after_act")

GAMMA_MAX = 4.0
DEFAULT_GAMMA = 0.6
DEFAULT_NUM_REFERENCES = 3
DEFAULT_AGGREGATION = "avg_before_act"


@dataclass(frozen=True)
class FeatureStack:
    """K spatial feature maps of one image at one layer, plus their pooled
    (spatial-mean) embedding. ``grid_count`` is Z = H*W."""

    maps: np.ndarray  # (K, H, W) float32
    pooled: np.ndarray  # (K,) float32

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.float32)
        pooled = np.asarray(self.pooled, dtype=np.float32)
        if maps.ndim != 3 or min(maps.shape) < 1:
            raise ValueError("maps must be a (K, H, W) stack with positive dims")
        if pooled.shape != (maps.shape[0],):
            raise ValueError("pooled must be a K-vector")
        means = maps.astype(np.float64).mean(axis=(1, 2))
        if np.any(np.abs(means - pooled.astype(np.float64)) > 1e-6):
            raise ValueError("pooled must equal the spatial mean of each map (1e-6)")
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "pooled", pooled)

    @classmethod
    def from_maps(cls, maps: np.ndarray) -> "FeatureStack":
        maps = np.asarray(maps, dtype=np.float32)
        pooled = maps.astype(np.float64).mean(axis=(1, 2)).astype(np.float32)
        return cls(maps=maps, pooled=pooled)

    @property
    def num_channels(self) -> int:
        return self.maps.shape[0]

    @property
    def grid_count(self) -> int:
        return self.maps.shape[1] * self.maps.shape[2]


@dataclass(frozen=True)
class ExplanationTarget:
    """What to explain: target class, reference classes with comparison
    strengths, and how to compose the map.

    Empty ``references`` is the baseline method (same as gamma = 0).
    Strengths above 1 extrapolate the comparison; reverse comparison is
    expressed by swapping target and reference, not by negative gamma.
    """

    target_class: int
    references: tuple[tuple[int, float], ...] = ()
    method: str = "grad"
    activation: str = "relu"
    aggregation: str = DEFAULT_AGGREGATION

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        refs = tuple((int(d), float(g)) for d, g in self.references)
        for d, g in refs:
            if d == self.target_class:
                raise ValueError("reference class must differ from target class")
            if not 0.0 <= g <= GAMMA_MAX:
                raise ValueError(f"comparison strength must be in [0, {GAMMA_MAX}], got {g}")
        object.__setattr__(self, "references", refs)

    @property
    def num_references(self) -> int:
        return len(self.references)


@dataclass
class SaliencyMap:
    """Nonnegative (after relu) 2-D activation grid at feature or image
    resolution."""

    grid: np.ndarray  # (H', W') float32
    resolution: str = "feature"  # "feature" | "image"
    normalized: bool = False


# --------------------------------------------------------------------------
# Channel weights
# --------------------------------------------------------------------------


def gradcam_weights_final_layer(head: ClassifierHead, target: int, grid_count: int) -> np.ndarray:
    """Gradient weights at the last layer before the linear head.

    With global average pooling the gradient of y_c w.r.t. every grid cell
    of channel k is w[c, k] / Z, so the averaged gradient is the classifier
    row itself scaled by 1/Z.
    """
    if not 0 <= target < head.num_classes:
        raise ValueError(f"class id {target} out of range")
    if grid_count < 1:
        raise ValueError("grid_count must be >= 1")
    return head.weights[target].astype(np.float64) / grid_count


def gradcam_weights_backend(backend, image: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Gradient weights from a differentiable backend.

    ``coeffs`` is a C-vector defining the scalar target sum_i coeffs[i]*y_i
    (one-hot for a plain logit, +1/-gamma for a logit difference). Returns
    the spatially averaged gradient per channel.
    """
    grads = backend.grad_features(image, np.asarray(coeffs, dtype=np.float64))
    return np.asarray(grads, dtype=np.float64).mean(axis=(1, 2))


def finer_weights(alpha_target: np.ndarray, alpha_reference: np.ndarray, gamma: float) -> np.ndarray:
    """Comparative weights ``alpha_c - gamma * alpha_d``.

    gamma = 0 returns a bit-exact copy of the baseline weights.
    """
    a_c = np.asarray(alpha_target, dtype=np.float64)
    a_d = np.asarray(alpha_reference, dtype=np.float64)
    if a_c.shape != a_d.shape:
        raise ValueError("weight vectors must have equal length")
    if gamma == 0.0:
        return a_c.copy()
    return a_c - gamma * a_d


def onehot_coeffs(num_classes: int, target: int, reference: int | None = None, gamma: float = 0.0) -> np.ndarray:
    """Coefficient vector for the scalar target y_c (- gamma * y_d)."""
    coeffs = np.zeros(num_classes)
    coeffs[target] = 1.0
    if reference is not None:
        coeffs[reference] -= gamma
    return coeffs


# --------------------------------------------------------------------------
# Composition
# --------------------------------------------------------------------------


def compose_raw(features: FeatureStack, weights: np.ndarray) -> np.ndarray:
    """Pre-activation linear combination sum_k weights[k] * A_k."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (features.num_channels,):
        raise ValueError(f"expected {features.num_channels} weights, got {w.shape}")
    return kernels.weighted_sum(features.maps, w)


def activate(raw: np.ndarray, activation: str = "relu") -> SaliencyMap:
    """Apply the output activation h: relu keeps positive evidence only."""
    raw = np.asarray(raw, dtype=np.float32)
    if not np.all(np.isfinite(raw)):
        raise ValueError("saliency input must be finite")
    if activation == "relu":
        grid = np.maximum(raw, np.float32(0.0))
    elif activation == "identity":
        grid = raw
    else:
        raise ValueError(f"activation must be one of {ACTIVATIONS}")
    return SaliencyMap(grid=grid, resolution="feature", normalized=False)


def aggregate_raw(raw_maps: list[np.ndarray], strategy: str, activation: str = "relu") -> SaliencyMap:
    """Fuse per-reference pre-activation maps.

    avg_before_act averages then activates; max_before_act takes the
    pointwise max then activates; avg_after_act activates each map first
    and averages the results.
    """
    if not raw_maps:
        raise ValueError("need at least one map to aggregate")
    if strategy == "avg_before_act":
        fused = np.mean(np.stack(raw_maps), axis=0, dtype=np.float64).astype(np.float32)
        return activate(fused, activation)
    if strategy == "max_before_act":
        fused = np.max(np.stack(raw_maps), axis=0)
        return activate(fused, activation)
    if strategy == "avg_after_act":
        acted = [activate(m, activation).grid for m in raw_maps]
        fused = np.mean(np.stack(acted), axis=0, dtype=np.float64).astype(np.float32)
        return SaliencyMap(grid=fused, resolution="feature", normalized=False)
    raise ValueError(f"aggregation must be one of {AGGREGATIONS}")


def aggregate(per_reference_weights: list[np.ndarray], features: FeatureStack,
              strategy: str = DEFAULT_AGGREGATION, activation: str = "relu") -> SaliencyMap:
    """Fuse per-reference channel weights into one saliency map.

    Averaging weights before composition equals averaging the raw maps,
    since composition is linear in the weights; it is implemented that way.
    """
    if not per_reference_weights:
        raise ValueError("need at least one weight vector to aggregate")
    if strategy == "avg_before_act":
        mean_w = np.mean(np.stack([np.asarray(w, dtype=np.float64) for w in per_reference_weights]), axis=0)
        return activate(compose_raw(features, mean_w), activation)
    raws = [compose_raw(features, w) for w in per_reference_weights]
    return aggregate_raw(raws, strategy, activation)


# --------------------------------------------------------------------------
# Score-based weights
# --------------------------------------------------------------------------


def channel_masks(features: FeatureStack, out_h: int, out_w: int) -> np.ndarray:
    """Per-channel [0,1] masks: min-max normalize each A_k, then upsample
    bilinearly to the image size. A constant channel has no spatial
    information and maps to an all-zero mask."""
    k = features.num_channels
    masks = np.empty((k, out_h, out_w), dtype=np.float32)
    for i in range(k):
        a = features.maps[i]
        lo = float(a.min())
        hi = float(a.max())
        if hi > lo:
            norm = ((a - lo) / (hi - lo)).astype(np.float32)
            masks[i] = kernels.bilinear_resize(norm, out_h, out_w)
        else:
            masks[i] = 0.0
    return masks


def _masked_logits(backend, image: np.ndarray, mask: np.ndarray, head: ClassifierHead | None) -> np.ndarray:
    if head is None:
        return np.asarray(backend.masked_forward(image, mask), dtype=np.float64)
    stack, _ = backend.forward(np.asarray(image, dtype=np.float32) * mask[:, :, None])
    return predict_logits(head, stack.pooled)


def _plain_logits(backend, image: np.ndarray, head: ClassifierHead | None) -> np.ndarray:
    stack, logits = backend.forward(image)
    if head is None:
        return np.asarray(logits, dtype=np.float64)
    return predict_logits(head, stack.pooled)


def scorecam_weights(backend, image: np.ndarray, target: int,
                     baseline_input: np.ndarray | None = None,
                     head: ClassifierHead | None = None) -> np.ndarray:
    """Confidence-increase weights: f(x o H_k)_c - f(x_b)_c.

    ``x_b`` defaults to the all-zero image. With ``head`` given, logits are
    taken from the head applied to the backend's pooled features instead of
    the backend's own classifier.
    """
    image = np.asarray(image, dtype=np.float32)
    stack, _ = backend.forward(image)
    masks = channel_masks(stack, image.shape[0], image.shape[1])
    x_b = np.zeros_like(image) if baseline_input is None else np.asarray(baseline_input, dtype=np.float32)
    base = _plain_logits(backend, x_b, head)
    alphas = np.empty(stack.num_channels)
    for k in range(stack.num_channels):
        logits = _masked_logits(backend, image, masks[k], head)
        alphas[k] = logits[target] - base[target]
    return alphas


def finer_scorecam_weights(backend, image: np.ndarray, target: int, reference: int, gamma: float,
                           baseline_input: np.ndarray | None = None,
                           head: ClassifierHead | None = None) -> np.ndarray:
    """Comparative score weights: f(x o H_k)_c - gamma*f(x o H_k)_d - f(x_b)_c."""
    if reference == target:
        raise ValueError("reference class must differ from target class")
    image = np.asarray(image, dtype=np.float32)
    stack, _ = backend.forward(image)
    masks = channel_masks(stack, image.shape[0], image.shape[1])
    x_b = np.zeros_like(image) if baseline_input is None else np.asarray(baseline_input, dtype=np.float32)
    base = _plain_logits(backend, x_b, head)
    alphas = np.empty(stack.num_channels)
    for k in range(stack.num_channels):
        logits = _masked_logits(backend, image, masks[k], head)
        if gamma == 0.0:
            alphas[k] = logits[target] - base[target]
        else:
            alphas[k] = logits[target] - gamma * logits[reference] - base[target]
    return alphas


# --------------------------------------------------------------------------
# Per-location (layer) variant
# --------------------------------------------------------------------------


def layercam_raw(features: FeatureStack, per_location_grads: np.ndarray) -> np.ndarray:
    """Pre-activation per-location composition sum_k relu(g_k) * A_k."""
    grads = np.ascontiguousarray(per_location_grads, dtype=np.float32)
    if grads.shape != features.maps.shape:
        raise ValueError("gradient stack must match the feature stack shape")
    return kernels.relu_grad_sum(features.maps, grads)


def layercam_map(features: FeatureStack, per_location_grads: np.ndarray) -> SaliencyMap:
    """Per-location map relu(sum_k relu(g_k) * A_k)."""
    return activate(layercam_raw(features, per_location_grads), "relu")


def uniform_location_grads(features: FeatureStack, weight_row: np.ndarray) -> np.ndarray:
    """Spread head-row gradients uniformly over the grid: g_k = w_k / Z."""
    k, h, w = features.maps.shape
    g = np.asarray(weight_row, dtype=np.float64) / features.grid_count
    return np.broadcast_to(g[:, None, None], (k, h, w)).astype(np.float32)


# --------------------------------------------------------------------------
# Resizing / normalization
# --------------------------------------------------------------------------


def upsample_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers:
    src = (dst + 0.5) * (in/out) - 0.5, clamped to [0, in-1]."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    return kernels.bilinear_resize(np.asarray(grid, dtype=np.float32), out_h, out_w)


def normalize(sal: SaliencyMap) -> SaliencyMap:
    """Scale so the max entry is 1 (zero maps stay zero). Idempotent."""
    grid = sal.grid
    if np.any(grid < 0):
        raise ValueError("normalize requires a nonnegative map")
    peak = float(grid.max()) if grid.size else 0.0
    out = grid / np.float32(peak) if peak > 0 else grid.copy()
    return SaliencyMap(grid=out.astype(np.float32), resolution=sal.resolution, normalized=True)


# --------------------------------------------------------------------------
# Orchestration
# --------------------------------------------------------------------------


def explain(features: FeatureStack, head: ClassifierHead, target: ExplanationTarget,
            backend=None, image: np.ndarray | None = None,
            upsample_to: tuple[int, int] | None = None) -> SaliencyMap:
    """Produce the saliency map for an explanation target.

    Empty references run the baseline method; otherwise each reference
    contributes a comparative map and the configured aggregation fuses them.
    The score method (and gradient attribution away from the final layer)
    needs a ``backend`` and the original ``image``.
    """
    c = target.target_class
    if not 0 <= c < head.num_classes:
        raise ValueError(f"target class {c} out of range")
    for d, _ in target.references:
        if not 0 <= d < head.num_classes:
            raise ValueError(f"reference class {d} out of range")
    if head.dim != features.num_channels:
        raise ValueError("head dimension does not match the feature stack")

    if target.method == "grad":
        alpha_c = gradcam_weights_final_layer(head, c, features.grid_count)
        if not target.references:
            weight_vectors = [alpha_c]
        else:
            weight_vectors = [
                finer_weights(alpha_c, gradcam_weights_final_layer(head, d, features.grid_count), g)
                for d, g in target.references
            ]
        sal = aggregate(weight_vectors, features, target.aggregation, target.activation)
    elif target.method == "layer":
        rows = [head.weights[c].astype(np.float64)] if not target.references else [
            finer_weights(head.weights[c].astype(np.float64), head.weights[d].astype(np.float64), g)
            for d, g in target.references
        ]
        raws = [layercam_raw(features, uniform_location_grads(features, row)) for row in rows]
        sal = aggregate_raw(raws, target.aggregation, target.activation)
    else:  # score
        if backend is None or image is None:
            raise ValueError("score method requires a backend and the original image")
        if not target.references:
            weight_vectors = [scorecam_weights(backend, image, c, head=head)]
        else:
            weight_vectors = [
                finer_scorecam_weights(backend, image, c, d, g, head=head)
                for d, g in target.references
            ]
        sal = aggregate(weight_vectors, features, target.aggregation, target.activation)

    if upsample_to is not None:
        sal = SaliencyMap(
            grid=upsample_bilinear(sal.grid, upsample_to[0], upsample_to[1]),
            resolution="image",
            normalized=False,
        )
    return sal
