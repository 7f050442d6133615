"""Deterministic synthetic benchmark for the evaluation harness.

Classes come in sibling families that share a large center pattern (the
"shared region") and differ only in a small class-specific marking placed
away from the center, mimicking fine-grained categories that share body
features and differ in localized traits. Bounding boxes annotate the
marking, so the pointing game rewards maps that concentrate on what
actually separates a class from its siblings.

Everything (colors, jitter, noise, toy-backend weights) derives from one
seed through the counter stream, so two runs with the same spec produce
byte-identical directories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import ToyBackend
from .rng import StreamRng
from .tensor_store import (
    DatasetManifest,
    SampleRecord,
    load_manifest,
    write_manifest,
    write_tensor,
)

# (row, col) anchors of the marking rectangle, all disjoint from the shared
# center rectangle even under maximum jitter.
_MARKING_ANCHORS = [(4, 4), (4, 46), (46, 4), (46, 46), (4, 25), (46, 25), (25, 4), (25, 46)]

_FAMILY_COLORS = [
    (0.90, 0.30, 0.20),
    (0.25, 0.35, 0.90),
]

_MARKING_COLORS = [
    (0.95, 0.90, 0.10),
    (0.10, 0.90, 0.90),
    (0.90, 0.10, 0.90),
    (0.95, 0.55, 0.10),
    (0.85, 0.85, 0.85),
    (0.40, 0.10, 0.60),
    (0.10, 0.50, 0.95),
    (0.60, 0.95, 0.40),
]


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    num_images: int = 200
    num_classes: int = 8
    family_size: int = 4
    image_size: tuple[int, int] = (64, 64)
    shared_origin: tuple[int, int] = (22, 22)  # (row, col)
    shared_size: int = 20
    marking_size: int = 14
    noise: float = 0.08
    jitter: int = 2
    train_fraction: float = 0.5
    channels: int = 16
    kernel_size: int = 8
    stride: int = 8

    def __post_init__(self):
        if self.num_classes % self.family_size or not 2 <= self.num_classes <= len(_MARKING_ANCHORS):
            raise ValueError(
                f"num_classes must be a multiple of family_size and within 2..{len(_MARKING_ANCHORS)}"
            )
        if self.family_size < 2:
            raise ValueError("family_size must be >= 2")
        if self.num_classes // self.family_size > len(_FAMILY_COLORS):
            raise ValueError(f"at most {len(_FAMILY_COLORS)} families are supported")
        if self.num_images < self.num_classes:
            raise ValueError("need at least one image per class")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def _paint(img: np.ndarray, r0: int, c0: int, size: int, color: tuple[float, float, float], scale: float) -> None:
    img[r0:r0 + size, c0:c0 + size] = np.asarray(color) * scale


def _render_image(spec: SynthSpec, class_id: int, rng: StreamRng) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    h, w = spec.image_size
    scale = 0.95 + 0.05 * float(rng.uniform(1)[0])
    dy = rng.randint(2 * spec.jitter + 1) - spec.jitter
    dx = rng.randint(2 * spec.jitter + 1) - spec.jitter
    img = np.zeros((h, w, 3))
    sr, sc = spec.shared_origin
    _paint(img, sr + dy, sc + dx, spec.shared_size, _FAMILY_COLORS[class_id // spec.family_size], scale)
    mr, mc = _MARKING_ANCHORS[class_id]
    _paint(img, mr + dy, mc + dx, spec.marking_size, _MARKING_COLORS[class_id], scale)
    img += rng.uniform((h, w, 3)) * spec.noise
    np.clip(img, 0.0, 1.0, out=img)
    pixels = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    bbox = (mc + dx, mr + dy, mc + dx + spec.marking_size, mr + dy + spec.marking_size)
    return pixels, bbox


def toy_backend_for(spec: SynthSpec) -> ToyBackend:
    h, w = spec.image_size
    return ToyBackend(
        seed=spec.seed * 7919 + 17,
        input_shape=(h, w, 3),
        channels=spec.channels,
        kernel_size=spec.kernel_size,
        stride=spec.stride,
        num_classes=spec.num_classes,
    )


def generate_benchmark(out_dir: str | Path, spec: SynthSpec = SynthSpec()) -> tuple[DatasetManifest, dict]:
    """Write images, toy-backend features, manifest, backend descriptor, and
    ground truth under ``out_dir``. Returns the validated manifest and the
    ground-truth document."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "features").mkdir(parents=True, exist_ok=True)
    backend = toy_backend_for(spec)

    n_train = int(round(spec.num_images * spec.train_fraction))
    records = []
    gt_samples = {}
    for i in range(spec.num_images):
        class_id = i % spec.num_classes
        rng = StreamRng(spec.seed, stream=5000 + i)
        pixels, bbox = _render_image(spec, class_id, rng)
        stack = backend.features(pixels)
        sample_id = f"s{i:04d}"
        image_path = f"images/{sample_id}.fct"
        feature_path = f"features/{sample_id}.fct"
        write_tensor(out / image_path, pixels)
        write_tensor(out / feature_path, stack.maps)
        records.append(SampleRecord(
            sample_id=sample_id,
            class_id=class_id,
            feature_path=feature_path,
            image_path=image_path,
            split="train" if i < n_train else "test",
            bbox=bbox,
        ))
        sr, sc = spec.shared_origin
        dx = bbox[0] - _MARKING_ANCHORS[class_id][1]
        dy = bbox[1] - _MARKING_ANCHORS[class_id][0]
        gt_samples[sample_id] = {
            "jitter": [dx, dy],
            "marking": list(bbox),
            "shared": [sc + dx, sr + dy, sc + dx + spec.shared_size, sr + dy + spec.shared_size],
        }

    h, w = spec.image_size
    manifest = DatasetManifest(
        version=1,
        classes=[f"class_{i}" for i in range(spec.num_classes)],
        samples=records,
        layer_name=backend.layer_name,
        feature_shape=(spec.channels, backend.feature_h, backend.feature_w),
        image_shape=(h, w, 3),
        root=out,
    )
    write_manifest(out / "manifest.json", manifest)
    (out / "backend.json").write_text(json.dumps(backend.descriptor(), indent=2) + "\n", "utf-8")

    sr, sc = spec.shared_origin
    ground_truth = {
        "seed": spec.seed,
        "shared_region": [sc, sr, sc + spec.shared_size, sr + spec.shared_size],
        "marking_bases": {
            str(cls): [
                _MARKING_ANCHORS[cls][1], _MARKING_ANCHORS[cls][0],
                _MARKING_ANCHORS[cls][1] + spec.marking_size, _MARKING_ANCHORS[cls][0] + spec.marking_size,
            ]
            for cls in range(spec.num_classes)
        },
        "samples": gt_samples,
    }
    (out / "ground_truth.json").write_text(json.dumps(ground_truth, indent=2) + "\n", "utf-8")
    return load_manifest(out / "manifest.json"), ground_truth


def region_energy(saliency: np.ndarray, region: tuple[int, int, int, int]) -> float:
    """Share of saliency energy inside [x0, x1) x [y0, y1)."""
    x0, y0, x1, y1 = region
    total = float(np.asarray(saliency, dtype=np.float64).sum())
    if total == 0.0:
        return 0.0
    return float(np.asarray(saliency, dtype=np.float64)[y0:y1, x0:x1].sum()) / total
