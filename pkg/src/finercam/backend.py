"""Model backends: image -> feature maps at a named layer -> logits.

``ToyBackend`` is the built-in differentiable network (strided conv, tanh,
global average pool, linear head) whose weights come deterministically from a
seed. ``LinearBackend`` is a pixel-linear probe used by metric sanity checks.
``ExternalBackend`` talks the wire protocol to an out-of-process model and is
forward-only: gradient-based math on it relies on the final-layer identity
between head rows and averaged gradients.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, protocol, tensor_store
from .cam import FeatureStack
from .head import ClassifierHead
from .rng import StreamRng


class GradientUnsupportedError(RuntimeError):
    """The backend cannot evaluate gradients (external backends)."""


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str  # "builtin_toy" | "external"
    layer_names: list[str]
    input_shape: tuple[int, int, int]  # (H_img, W_img, channels)
    feature_shapes: dict[str, tuple[int, int, int]]  # layer -> (K, H, W)
    num_classes: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "layer_names": list(self.layer_names),
            "input_shape": list(self.input_shape),
            "feature_shapes": {k: list(v) for k, v in self.feature_shapes.items()},
            "num_classes": self.num_classes,
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BackendDescriptor":
        return cls(
            kind=obj["kind"],
            layer_names=list(obj["layer_names"]),
            input_shape=tuple(obj["input_shape"]),
            feature_shapes={k: tuple(v) for k, v in obj["feature_shapes"].items()},
            num_classes=int(obj["num_classes"]),
            extra=dict(obj.get("extra", {})),
        )


def _as_image(image: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    arr = np.asarray(image)
    if arr.shape != tuple(shape):
        raise ValueError(f"image shape {arr.shape} does not match backend input {tuple(shape)}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float32) / np.float32(255.0)
    return np.ascontiguousarray(arr, dtype=np.float32)


class ToyBackend:
    """Small deterministic CNN: one strided valid convolution, a smooth odd
    nonlinearity (tanh, so finite-difference checks stay clean and a zero
    image yields exactly zero logits), global average pooling, linear head.

    All weights derive from ``seed`` through the counter stream, so the
    descriptor alone reproduces the network.
    """

    kind = "builtin_toy"
    layer_name = "conv1"

    def __init__(self, seed: int = 0, input_shape: tuple[int, int, int] = (64, 64, 3),
                 channels: int = 16, kernel_size: int = 8, stride: int = 8,
                 num_classes: int = 6, nonlinearity: str = "tanh",
                 head: ClassifierHead | None = None):
        if nonlinearity not in ("tanh", "identity"):
            raise ValueError("nonlinearity must be 'tanh' or 'identity'")
        h_img, w_img, c_in = input_shape
        if (h_img - kernel_size) % stride or (w_img - kernel_size) % stride:
            raise ValueError("kernel/stride must tile the input exactly")
        self.seed = seed
        self.input_shape = tuple(input_shape)
        self.channels = channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.nonlinearity = nonlinearity
        # Each channel projects onto a random color direction with mild
        # spatial modulation; near-uniform kernels keep pooled features
        # robust to small translations, as trained backbones are.
        rng_conv = StreamRng(seed, stream=101)
        color = rng_conv.normal((channels, c_in))
        spatial = 1.0 + 0.15 * rng_conv.normal((channels, kernel_size, kernel_size))
        kern = 1.2 * color[:, None, None, :] * spatial[:, :, :, None] / (kernel_size * kernel_size)
        self.conv = kern.astype(np.float32)
        self.feature_h = (h_img - kernel_size) // stride + 1
        self.feature_w = (w_img - kernel_size) // stride + 1
        if head is None:
            rng_head = StreamRng(seed, stream=102)
            weights = rng_head.normal((num_classes, channels), std=1.0 / np.sqrt(channels)).astype(np.float32)
            head = ClassifierHead(weights=weights, class_names=[f"class_{i}" for i in range(num_classes)])
        if head.dim != channels:
            raise ValueError("head dimension must equal the channel count")
        self.head = head
        self.num_classes = head.num_classes

    def with_head(self, head: ClassifierHead) -> "ToyBackend":
        """Same feature extractor, different classifier head."""
        return ToyBackend(
            seed=self.seed, input_shape=self.input_shape, channels=self.channels,
            kernel_size=self.kernel_size, stride=self.stride,
            num_classes=head.num_classes, nonlinearity=self.nonlinearity, head=head,
        )

    @property
    def grid_count(self) -> int:
        return self.feature_h * self.feature_w

    def descriptor(self) -> dict:
        return BackendDescriptor(
            kind=self.kind,
            layer_names=[self.layer_name],
            input_shape=self.input_shape,
            feature_shapes={self.layer_name: (self.channels, self.feature_h, self.feature_w)},
            num_classes=self.num_classes,
            extra={
                "seed": self.seed,
                "channels": self.channels,
                "kernel_size": self.kernel_size,
                "stride": self.stride,
                "nonlinearity": self.nonlinearity,
            },
        ).to_dict()

    @classmethod
    def from_descriptor(cls, obj: dict, head: ClassifierHead | None = None) -> "ToyBackend":
        desc = BackendDescriptor.from_dict(obj)
        extra = desc.extra
        return cls(
            seed=int(extra["seed"]),
            input_shape=desc.input_shape,
            channels=int(extra["channels"]),
            kernel_size=int(extra["kernel_size"]),
            stride=int(extra["stride"]),
            num_classes=desc.num_classes,
            nonlinearity=extra.get("nonlinearity", "tanh"),
            head=head,
        )

    def features(self, image: np.ndarray) -> FeatureStack:
        x = _as_image(image, self.input_shape)
        maps = kernels.conv2d_stride(x, self.conv, self.stride, self.nonlinearity == "tanh")
        return FeatureStack.from_maps(maps)

    def forward(self, image: np.ndarray, layer: str | None = None) -> tuple[FeatureStack, np.ndarray]:
        if layer is not None and layer != self.layer_name:
            raise ValueError(f"unknown layer {layer!r}")
        stack = self.features(image)
        logits = self.head.weights.astype(np.float64) @ stack.pooled.astype(np.float64)
        if self.head.bias is not None:
            logits = logits + self.head.bias.astype(np.float64)
        return stack, logits

    def masked_forward(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        x = _as_image(image, self.input_shape)
        mask = np.asarray(mask, dtype=np.float32)
        if mask.shape != x.shape[:2]:
            raise ValueError(f"mask shape {mask.shape} does not match image spatial dims {x.shape[:2]}")
        _, logits = self.forward(x * mask[:, :, None])
        return logits

    def grad_features(self, image: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """Exact gradient of sum_i coeffs[i] * y_i w.r.t. the feature grid.

        Logits are linear in the (pooled) features, so the gradient at every
        location of channel k is (coeffs . W[:, k]) / Z.
        """
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (self.num_classes,):
            raise ValueError(f"coeffs must have shape ({self.num_classes},)")
        per_channel = coeffs @ self.head.weights.astype(np.float64) / self.grid_count
        return np.broadcast_to(
            per_channel[:, None, None], (self.channels, self.feature_h, self.feature_w)
        ).copy()


class LinearBackend:
    """Pixel-linear probe: logit c is the weighted sum of image pixels.

    Feature maps are the image channels themselves, so saliency math and
    deletion metrics have closed forms. Used by oracle tests.
    """

    kind = "builtin_toy"
    layer_name = "pixels"

    def __init__(self, pixel_weights: np.ndarray):
        w = np.asarray(pixel_weights, dtype=np.float64)
        if w.ndim != 4:
            raise ValueError("pixel_weights must be (C, H, W, channels)")
        self.pixel_weights = w
        self.num_classes = w.shape[0]
        self.input_shape = tuple(w.shape[1:])

    def descriptor(self) -> dict:
        h, wd, c = self.input_shape
        return BackendDescriptor(
            kind=self.kind,
            layer_names=[self.layer_name],
            input_shape=self.input_shape,
            feature_shapes={self.layer_name: (c, h, wd)},
            num_classes=self.num_classes,
        ).to_dict()

    def forward(self, image: np.ndarray, layer: str | None = None) -> tuple[FeatureStack, np.ndarray]:
        x = _as_image(image, self.input_shape)
        maps = np.ascontiguousarray(np.moveaxis(x, 2, 0))
        logits = np.tensordot(self.pixel_weights, x.astype(np.float64), axes=([1, 2, 3], [0, 1, 2]))
        return FeatureStack.from_maps(maps), logits

    def masked_forward(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        x = _as_image(image, self.input_shape)
        mask = np.asarray(mask, dtype=np.float32)
        if mask.shape != x.shape[:2]:
            raise ValueError("mask shape does not match image spatial dims")
        _, logits = self.forward(x * mask[:, :, None])
        return logits


class ExternalBackend:
    """Protocol client presenting the in-process backend interface.

    Requests are serialized through a lock: the channel is a single ordered
    request/response stream. Forward-only; ``grad_features`` raises.
    """

    kind = "external"

    def __init__(self, client: protocol.ProtocolClient, *, _process: subprocess.Popen | None = None,
                 _sock: socket.socket | None = None):
        self._client = client
        self._process = _process
        self._sock = _sock
        self._lock = threading.Lock()
        reply, _ = client.request({"type": "hello"})
        self._descriptor = BackendDescriptor.from_dict(reply["descriptor"])
        self.num_classes = self._descriptor.num_classes
        self.input_shape = self._descriptor.input_shape
        self.layer_name = self._descriptor.layer_names[0]

    @classmethod
    def connect_tcp(cls, host: str, port: int) -> "ExternalBackend":
        sock = socket.create_connection((host, port))
        return cls(protocol.ProtocolClient(sock.makefile("rb"), sock.makefile("wb")), _sock=sock)

    @classmethod
    def spawn(cls, command: list[str]) -> "ExternalBackend":
        proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return cls(protocol.ProtocolClient(proc.stdout, proc.stdin), _process=proc)

    def descriptor(self) -> dict:
        return self._descriptor.to_dict()

    def forward(self, image: np.ndarray, layer: str | None = None) -> tuple[FeatureStack, np.ndarray]:
        blob = tensor_store.tensor_to_bytes(_as_image(image, self.input_shape))
        with self._lock:
            _, payloads = self._client.request({"type": "forward"}, [blob])
        if len(payloads) != 2:
            raise protocol.ProtocolError("forward reply must carry features and logits")
        maps = tensor_store.tensor_from_bytes(payloads[0])
        logits = tensor_store.tensor_from_bytes(payloads[1]).astype(np.float64)
        return FeatureStack.from_maps(maps), logits

    def masked_forward(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        image_blob = tensor_store.tensor_to_bytes(_as_image(image, self.input_shape))
        mask_blob = tensor_store.tensor_to_bytes(np.ascontiguousarray(mask, dtype=np.float32))
        with self._lock:
            _, payloads = self._client.request({"type": "masked_forward"}, [image_blob, mask_blob])
        if len(payloads) != 1:
            raise protocol.ProtocolError("masked_forward reply must carry logits")
        return tensor_store.tensor_from_bytes(payloads[0]).astype(np.float64)

    def grad_features(self, image: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        raise GradientUnsupportedError("external backends are forward-only")

    def close(self) -> None:
        self._client.close()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        if self._process is not None:
            self._process.terminate()
            self._process.wait(timeout=5)


def load_backend(spec: str, head: ClassifierHead | None = None):
    """Build a backend from a spec string.

    Accepted forms:
      * ``toy:<seed>`` — built-in toy network with default architecture
      * path to a descriptor JSON (``builtin_toy`` or ``external`` kinds)
      * ``tcp://host:port`` — connect to a protocol server
    External descriptors carry either ``{"connect": "tcp://host:port"}`` or
    ``{"command": "..."}``/``{"command": [...]}`` to spawn over stdio.
    """
    if spec.startswith("toy:"):
        return ToyBackend(seed=int(spec.split(":", 1)[1]), head=head)
    if spec.startswith("tcp://"):
        host, _, port = spec[len("tcp://"):].partition(":")
        return ExternalBackend.connect_tcp(host, int(port))
    path = Path(spec)
    if not path.is_file():
        raise FileNotFoundError(f"backend descriptor not found: {spec}")
    obj = json.loads(path.read_text("utf-8"))
    kind = obj.get("kind")
    if kind == "builtin_toy":
        return ToyBackend.from_descriptor(obj, head=head)
    if kind == "external":
        extra = obj.get("extra", obj)
        if "connect" in extra:
            target = extra["connect"]
            if not target.startswith("tcp://"):
                raise ValueError(f"unsupported connect target {target!r}")
            host, _, port = target[len("tcp://"):].partition(":")
            return ExternalBackend.connect_tcp(host, int(port))
        if "command" in extra:
            cmd = extra["command"]
            return ExternalBackend.spawn(shlex.split(cmd) if isinstance(cmd, str) else list(cmd))
        raise ValueError("external descriptor needs 'connect' or 'command'")
    raise ValueError(f"unknown backend kind {kind!r}")
