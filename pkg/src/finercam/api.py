"""Request-level orchestration shared by the CLI and the HTTP service.

The service must return byte-identical results to direct library use, so
both go through :func:`run_explain` / :func:`run_relative_drop` on the same
loaded :class:`DatasetContext`.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cam, colormap, metrics, tensor_store
from .backend import load_backend
from .head import ClassifierHead, load_head, predict_logits, rank_reference_classes
from .tensor_store import DatasetManifest, load_manifest


@dataclass
class ExplainRequest:
    """One explanation request against a loaded dataset.

    ``references`` is an explicit class list, the string ``"auto:T"`` for
    the top-T predicted classes other than the target, or None/[] for the
    baseline method. ``target_class`` defaults to the head's argmax on the
    sample.
    """

    sample_id: str
    target_class: int | None = None
    references: list[int] | str | None = "auto:3"
    gamma: float = cam.DEFAULT_GAMMA
    method: str = "grad"
    aggregation: str = cam.DEFAULT_AGGREGATION
    output: str = "normalized"  # raw | normalized | overlay_png

    def __post_init__(self):
        if self.output not in ("raw", "normalized", "overlay_png"):
            raise ValueError("output must be raw, normalized, or overlay_png")
        if not 0.0 <= self.gamma <= cam.GAMMA_MAX:
            raise ValueError(f"gamma must lie in [0, {cam.GAMMA_MAX}]")

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "target_class": self.target_class,
            "references": self.references,
            "gamma": self.gamma,
            "method": self.method,
            "aggregation": self.aggregation,
            "output": self.output,
        }


@dataclass
class DatasetContext:
    manifest: DatasetManifest
    head: ClassifierHead
    backend: object | None = None


def load_context(manifest_path: str | Path, head_path: str | Path, backend_spec: str | None = None) -> DatasetContext:
    manifest = load_manifest(manifest_path)
    head = load_head(head_path)
    if head.num_classes != manifest.num_classes:
        raise ValueError("head class count does not match the manifest")
    backend = load_backend(backend_spec, head=head) if backend_spec else None
    return DatasetContext(manifest=manifest, head=head, backend=backend)


def resolve_references(references: list[int] | str | None, logits: np.ndarray, target: int,
                       num_classes: int) -> list[int]:
    if references is None:
        return []
    if isinstance(references, str):
        if not references.startswith("auto:"):
            raise ValueError(f"reference spec must be 'auto:T' or a class list, got {references!r}")
        count = int(references.split(":", 1)[1])
        if count == 0:
            return []
        return rank_reference_classes(logits, target, count)
    refs = [int(d) for d in references]
    for d in refs:
        if not 0 <= d < num_classes:
            raise ValueError(f"reference class {d} out of range")
        if d == target:
            raise ValueError("reference class must differ from target class")
    return refs


@dataclass
class ExplainResult:
    saliency: cam.SaliencyMap  # image resolution, raw or normalized per request
    overlay_png: bytes
    logits: list[float]
    references_used: list[int]
    metadata: dict = field(default_factory=dict)

    def saliency_fct(self) -> bytes:
        return tensor_store.tensor_to_bytes(self.saliency.grid)

    def to_payload(self) -> dict:
        """JSON-ready document (the /api/explain response body)."""
        return {
            "saliency": base64.b64encode(self.saliency_fct()).decode("ascii"),
            "overlay": base64.b64encode(self.overlay_png).decode("ascii"),
            "logits": self.logits,
            "references_used": self.references_used,
            "metadata": self.metadata,
        }


def run_explain(ctx: DatasetContext, request: ExplainRequest) -> ExplainResult:
    rec = ctx.manifest.sample(request.sample_id)
    stack, image = metrics.load_sample_arrays(ctx.manifest, rec)
    logits = predict_logits(ctx.head, stack.pooled)
    target = int(np.argmax(logits)) if request.target_class is None else int(request.target_class)
    if not 0 <= target < ctx.head.num_classes:
        raise ValueError(f"target class {target} out of range")
    refs = resolve_references(request.references, logits, target, ctx.head.num_classes)
    spec = cam.ExplanationTarget(
        target_class=target,
        references=tuple((d, request.gamma) for d in refs),
        method=request.method,
        aggregation=request.aggregation,
    )
    h_img, w_img = image.shape[:2]
    sal = cam.explain(stack, ctx.head, spec, backend=ctx.backend, image=image, upsample_to=(h_img, w_img))
    normalized = cam.normalize(sal)
    pixels = tensor_store.read_tensor(ctx.manifest.image_file(rec))
    overlay = colormap.overlay_rgb(pixels, normalized.grid, opacity=0.5)
    chosen = sal if request.output == "raw" else normalized
    metadata = {
        "request": request.to_dict(),
        "target_class": target,
        "target_name": ctx.manifest.classes[target],
        "true_class": rec.class_id,
        "references_used": refs,
        "reference_names": [ctx.manifest.classes[d] for d in refs],
        "resolution": chosen.resolution,
        "normalized": chosen.normalized,
        "overlay_opacity": 0.5,
    }
    return ExplainResult(
        saliency=chosen,
        overlay_png=colormap.encode_png(overlay),
        logits=[float(v) for v in logits],
        references_used=refs,
        metadata=metadata,
    )


@dataclass
class RelativeDropRequest:
    sample_id: str
    target_class: int | None = None
    reference_class: int | None = None  # defaults to the runner-up prediction
    fraction: float = 0.05
    fill: str = "zero"
    references: list[int] | str | None = "auto:3"
    gamma: float = cam.DEFAULT_GAMMA
    method: str = "grad"
    aggregation: str = cam.DEFAULT_AGGREGATION


def run_relative_drop(ctx: DatasetContext, request: RelativeDropRequest) -> dict:
    if ctx.backend is None:
        raise RuntimeError("relative drop needs a backend for masked forwards")
    rec = ctx.manifest.sample(request.sample_id)
    stack, image = metrics.load_sample_arrays(ctx.manifest, rec)
    logits = predict_logits(ctx.head, stack.pooled)
    target = int(np.argmax(logits)) if request.target_class is None else int(request.target_class)
    reference = request.reference_class
    if reference is None:
        reference = rank_reference_classes(logits, target, 1)[0]
    refs = resolve_references(request.references, logits, target, ctx.head.num_classes)
    spec = cam.ExplanationTarget(
        target_class=target,
        references=tuple((d, request.gamma) for d in refs),
        method=request.method,
        aggregation=request.aggregation,
    )
    h_img, w_img = image.shape[:2]
    sal = cam.explain(stack, ctx.head, spec, backend=ctx.backend, image=image, upsample_to=(h_img, w_img))
    value = metrics.relative_drop(
        ctx.backend, image, sal.grid, target, int(reference),
        fraction=request.fraction, fill=request.fill, head=ctx.head,
    )
    return {
        "rd": value,
        "fraction": request.fraction,
        "target_class": target,
        "reference_class": int(reference),
        "references_used": refs,
    }
