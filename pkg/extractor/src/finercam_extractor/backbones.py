"""Backbone wrappers: torchvision visual encoders and a deterministic text
embedder.

A visual backbone exposes the model input size, the preprocessing constants,
and per-image final-layer feature maps ``[K, H, W]`` whose spatial mean is
the pooled embedding. Masking happens in pixel space, before normalization,
so downstream deletion metrics are well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from finercam.rng import StreamRng, splitmix64

# layer hosting the feature maps, per torchvision family
_DEFAULT_LAYERS = {
    "resnet18": "layer4",
    "resnet34": "layer4",
    "resnet50": "layer4",
    "squeezenet1_0": "features",
    "mobilenet_v3_small": "features",
}

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class Preprocess:
    image_size: int
    mean: tuple[float, float, float] = _IMAGENET_MEAN
    std: tuple[float, float, float] = _IMAGENET_STD

    def to_dict(self) -> dict:
        return {
            "resize": "shorter side to image_size, center crop",
            "image_size": self.image_size,
            "normalize_mean": list(self.mean),
            "normalize_std": list(self.std),
            "mask_space": "pixels in [0,1] before normalization",
        }


class TorchvisionBackbone:
    """A torchvision classification model hooked at a named feature layer.

    ``weights_path`` loads a local state dict; otherwise the architecture is
    default-initialized from ``seed`` (deterministic, useful for offline
    round-trip tests — record the seed, reproduce the features).
    """

    def __init__(self, arch: str, layer: str | None = None, image_size: int = 224,
                 weights_path: str | None = None, seed: int = 0):
        import torchvision.models as models

        self.arch = arch
        self.layer = layer or _DEFAULT_LAYERS.get(arch)
        if self.layer is None:
            raise ValueError(f"no default feature layer known for {arch!r}; pass one explicitly")
        self.preprocess = Preprocess(image_size=image_size)
        self.seed = seed
        torch.manual_seed(seed)
        factory = getattr(models, arch, None)
        if factory is None:
            raise ValueError(f"unknown torchvision architecture {arch!r}")
        self.model = factory(weights=None)
        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            self.model.load_state_dict(state)
        self.model.eval()
        module = dict(self.model.named_modules()).get(self.layer)
        if module is None:
            raise ValueError(f"layer {self.layer!r} not found in {arch!r}")
        self._captured: list[torch.Tensor] = []
        module.register_forward_hook(lambda m, inp, out: self._captured.append(out))
        self.feature_shape = tuple(self.features(np.zeros(self.input_shape, dtype=np.float32)).shape)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        s = self.preprocess.image_size
        return (s, s, 3)

    def prepare_pixels(self, image) -> np.ndarray:
        """Resize + center-crop a PIL image (or pass through a matching
        array) to uint8 model-input pixels."""
        from PIL import Image

        if isinstance(image, np.ndarray):
            if image.shape != self.input_shape:
                raise ValueError(f"array input must have shape {self.input_shape}")
            return image.astype(np.uint8)
        size = self.preprocess.image_size
        img = image.convert("RGB")
        w, h = img.size
        scale = size / min(w, h)
        img = img.resize((max(size, round(w * scale)), max(size, round(h * scale))), Image.BILINEAR)
        left = (img.width - size) // 2
        top = (img.height - size) // 2
        img = img.crop((left, top, left + size, top + size))
        return np.asarray(img, dtype=np.uint8)

    def _to_tensor(self, pixels01: np.ndarray) -> torch.Tensor:
        x = torch.from_numpy(np.ascontiguousarray(pixels01, dtype=np.float32)).permute(2, 0, 1)
        mean = torch.tensor(self.preprocess.mean).view(3, 1, 1)
        std = torch.tensor(self.preprocess.std).view(3, 1, 1)
        return ((x - mean) / std).unsqueeze(0)

    def features(self, image: np.ndarray) -> np.ndarray:
        """Feature maps (K, H, W) float32 for pixels (uint8 or float [0,1])."""
        pixels01 = image.astype(np.float32) / 255.0 if image.dtype == np.uint8 else image
        self._captured.clear()
        with torch.no_grad():
            self.model(self._to_tensor(pixels01))
        if not self._captured:
            raise RuntimeError(f"layer {self.layer!r} produced no output")
        return self._captured[-1][0].detach().numpy().astype(np.float32)


class HashTextEmbedder:
    """Deterministic offline text embedder: each token maps to a seeded
    Gaussian vector, prompts average their tokens and L2-normalize.

    A stand-in with the same contract as a real text encoder (unit-norm rows,
    stable across runs); swap in an actual language-image encoder for
    semantically meaningful comparisons.
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.seed = seed

    def _token_vector(self, token: str) -> np.ndarray:
        h = 1469598103934665603
        for byte in token.encode("utf-8"):
            h = ((h ^ byte) * 1099511628211) & ((1 << 64) - 1)
        return StreamRng(self.seed, stream=splitmix64(h)).normal(self.dim)

    def embed(self, prompt: str) -> np.ndarray:
        tokens = [t for t in "".join(c if c.isalnum() else " " for c in prompt.lower()).split() if t]
        if not tokens:
            raise ValueError(f"prompt {prompt!r} has no tokens")
        vec = np.mean([self._token_vector(t) for t in tokens], axis=0)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError(f"prompt {prompt!r} embedded to zero")
        return (vec / norm).astype(np.float32)


def load_backbone(spec: str, layer: str | None = None, image_size: int = 224,
                  weights_path: str | None = None, seed: int = 0) -> TorchvisionBackbone:
    """Backbone spec: ``torchvision:<arch>`` (e.g. torchvision:resnet18)."""
    if spec.startswith("torchvision:"):
        return TorchvisionBackbone(spec.split(":", 1)[1], layer=layer, image_size=image_size,
                                   weights_path=weights_path, seed=seed)
    raise ValueError(f"unknown backbone spec {spec!r}")
