"""Serve a real backbone + head over the backend wire protocol."""

from __future__ import annotations

import sys

import numpy as np

from finercam.backend import BackendDescriptor
from finercam.cam import FeatureStack
from finercam.head import ClassifierHead, predict_logits
from finercam.protocol import serve_stream, serve_tcp

from .backbones import TorchvisionBackbone


class BackboneServer:
    """Protocol-facing adapter: forward/masked_forward over a frozen
    backbone, logits from the supplied head applied to pooled features."""

    kind = "external"

    def __init__(self, backbone: TorchvisionBackbone, head: ClassifierHead):
        k = backbone.feature_shape[0]
        if head.dim != k:
            raise ValueError(f"head dim {head.dim} does not match backbone channels {k}")
        self.backbone = backbone
        self.head = head

    def descriptor(self) -> dict:
        return BackendDescriptor(
            kind="external",
            layer_names=[self.backbone.layer],
            input_shape=self.backbone.input_shape,
            feature_shapes={self.backbone.layer: self.backbone.feature_shape},
            num_classes=self.head.num_classes,
            extra={
                "backbone": self.backbone.arch,
                "seed": self.backbone.seed,
                "preprocess": self.backbone.preprocess.to_dict(),
            },
        ).to_dict()

    def forward(self, image: np.ndarray, layer: str | None = None):
        if layer is not None and layer != self.backbone.layer:
            raise ValueError(f"unknown layer {layer!r}")
        maps = self.backbone.features(np.asarray(image, dtype=np.float32))
        stack = FeatureStack.from_maps(maps)
        return stack, predict_logits(self.head, stack.pooled)

    def masked_forward(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float32)
        mask = np.asarray(mask, dtype=np.float32)
        if mask.shape != image.shape[:2]:
            raise ValueError(f"mask shape {mask.shape} does not match image spatial dims {image.shape[:2]}")
        _, logits = self.forward(image * mask[:, :, None])
        return logits


def serve_stdio(server: BackboneServer) -> None:
    serve_stream(server, sys.stdin.buffer, sys.stdout.buffer)


def serve_over_tcp(server: BackboneServer, host: str, port: int, **kwargs) -> None:
    serve_tcp(server, host, port, **kwargs)
