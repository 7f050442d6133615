"""Quantitative evaluation of saliency maps.

Deletion curves and their AUC, the relative confidence drop between the
target class and its closest competitor, the energy-based pointing game,
attribute selection, and the aggregate per-manifest evaluation loop. All
pixel-level metrics take saliency at image resolution (upsample first).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cam import (
    DEFAULT_AGGREGATION,
    DEFAULT_GAMMA,
    DEFAULT_NUM_REFERENCES,
    ExplanationTarget,
    FeatureStack,
    explain,
)
from .head import ClassifierHead, predict_logits, rank_reference_classes, softmax
from .tensor_store import DatasetManifest, SampleRecord, read_tensor

FILLS = ("zero", "mean")


@dataclass(frozen=True)
class DeletionCurve:
    """Target-class confidence as rising fractions of top pixels are
    removed; optionally the same curve for a reference class."""

    fractions: tuple[float, ...]
    confidence_target: tuple[float, ...]
    confidence_reference: tuple[float, ...] | None = None

    def __post_init__(self):
        n = len(self.fractions)
        if len(self.confidence_target) != n:
            raise ValueError("curve arrays must have equal length")
        if self.confidence_reference is not None and len(self.confidence_reference) != n:
            raise ValueError("curve arrays must have equal length")
        if any(b <= a for a, b in zip(self.fractions, self.fractions[1:])):
            raise ValueError("fractions must be strictly increasing")


@dataclass
class EvalReport:
    """Deletion AUC, relative drops at fixed fractions, and pointing-game
    score, for one image or aggregated over a split."""

    deletion_auc: float | None = None
    rd_at: dict[float, float] = field(default_factory=dict)
    pointing_game: float | None = None
    aggregate: bool = False

    def to_dict(self) -> dict:
        return {
            "deletion_auc": self.deletion_auc,
            "rd_at": {f"{frac:g}": value for frac, value in sorted(self.rd_at.items())},
            "pointing_game": self.pointing_game,
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        return cls(
            deletion_auc=obj.get("deletion_auc"),
            rd_at={float(k): v for k, v in obj.get("rd_at", {}).items()},
            pointing_game=obj.get("pointing_game"),
            aggregate=bool(obj.get("aggregate", False)),
        )


# --------------------------------------------------------------------------
# Pixel masking
# --------------------------------------------------------------------------


def top_pixel_indices(saliency: np.ndarray, fraction: float) -> np.ndarray:
    """Flat indices of the ceil(fraction * H * W) most salient pixels.

    Ties break toward the smaller row-major index, so masked sets nest as
    the fraction grows.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    flat = np.asarray(saliency, dtype=np.float64).ravel()
    count = math.ceil(fraction * flat.size)
    if count == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-flat, kind="stable")
    return order[:count]


def mask_top_pixels(image: np.ndarray, saliency: np.ndarray, fraction: float, fill: str = "zero") -> np.ndarray:
    """Replace the most salient pixels (across all channels) by the fill
    value: 0, or the per-channel mean of the image itself."""
    image = np.asarray(image)
    if saliency.shape != image.shape[:2]:
        raise ValueError(f"saliency {saliency.shape} does not match image spatial dims {image.shape[:2]}")
    if fill not in FILLS:
        raise ValueError(f"fill must be one of {FILLS}")
    idx = top_pixel_indices(saliency, fraction)
    out = image.astype(np.float32, copy=True)
    flat = out.reshape(-1, image.shape[2]) if image.ndim == 3 else out.reshape(-1, 1)
    if fill == "zero":
        flat[idx] = 0.0
    else:
        flat[idx] = flat.mean(axis=0)
    return out.reshape(image.shape)


# --------------------------------------------------------------------------
# Deletion
# --------------------------------------------------------------------------


def deletion_fractions(step: float) -> tuple[float, ...]:
    if not 0.0 < step <= 1.0:
        raise ValueError("step must lie in (0, 1]")
    fracs = []
    k = 0
    while True:
        f = k * step
        if f >= 1.0 - 1e-12:
            break
        fracs.append(f)
        k += 1
    fracs.append(1.0)
    return tuple(fracs)


def _confidences(backend, image: np.ndarray, head: ClassifierHead | None) -> np.ndarray:
    stack, logits = backend.forward(image)
    if head is not None:
        logits = predict_logits(head, stack.pooled)
    return softmax(logits)


def deletion_curve(backend, image: np.ndarray, saliency: np.ndarray, target: int,
                   reference: int | None = None, step: float = 0.02, fill: str = "zero",
                   head: ClassifierHead | None = None) -> DeletionCurve:
    """Forward the image with 0, step, 2*step, ..., 100% of its most salient
    pixels removed and record softmax confidences."""
    fractions = deletion_fractions(step)
    conf_t = []
    conf_r = [] if reference is not None else None
    for frac in fractions:
        masked = image if frac == 0.0 else mask_top_pixels(image, saliency, frac, fill)
        probs = _confidences(backend, masked, head)
        conf_t.append(float(probs[target]))
        if conf_r is not None:
            conf_r.append(float(probs[reference]))
    return DeletionCurve(
        fractions=fractions,
        confidence_target=tuple(conf_t),
        confidence_reference=tuple(conf_r) if conf_r is not None else None,
    )


def auc(curve: DeletionCurve) -> float:
    """Trapezoidal area under the target-confidence curve, normalized by the
    fraction span (a constant curve scores that constant)."""
    fr = np.asarray(curve.fractions, dtype=np.float64)
    y = np.asarray(curve.confidence_target, dtype=np.float64)
    if fr.size < 2:
        raise ValueError("need at least 2 curve points")
    area = float(((y[1:] + y[:-1]) * 0.5 * np.diff(fr)).sum())
    return area / float(fr[-1] - fr[0])


def curve_to_csv(curve: DeletionCurve) -> str:
    lines = ["fraction,p_target" + (",p_reference" if curve.confidence_reference is not None else "")]
    for i, frac in enumerate(curve.fractions):
        row = f"{float(frac)!r},{float(curve.confidence_target[i])!r}"
        if curve.confidence_reference is not None:
            row += f",{float(curve.confidence_reference[i])!r}"
        lines.append(row)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Relative confidence drop
# --------------------------------------------------------------------------


def relative_drop_from_confidences(p_target: float, p_target_masked: float,
                                   p_reference: float, p_reference_masked: float) -> float:
    """RD = (p_c - p*_c) - (p_d - p*_d)."""
    return (p_target - p_target_masked) - (p_reference - p_reference_masked)


def relative_drop(backend, image: np.ndarray, saliency: np.ndarray, target: int, reference: int,
                  fraction: float, fill: str = "zero", head: ClassifierHead | None = None) -> float:
    """Relative drop after masking the top ``fraction`` of pixels."""
    if target == reference:
        raise ValueError("target and reference classes must differ")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    before = _confidences(backend, image, head)
    masked = mask_top_pixels(image, saliency, fraction, fill)
    after = _confidences(backend, masked, head)
    return relative_drop_from_confidences(
        float(before[target]), float(after[target]),
        float(before[reference]), float(after[reference]),
    )


# --------------------------------------------------------------------------
# Localization and attributes
# --------------------------------------------------------------------------


def pointing_game(saliency: np.ndarray, bbox: tuple[int, int, int, int]) -> float:
    """Share of total saliency energy inside the box [x0, x1) x [y0, y1).

    An all-zero map scores 0.
    """
    sal = np.asarray(saliency, dtype=np.float64)
    if np.any(sal < 0):
        raise ValueError("pointing game requires a nonnegative map")
    x0, y0, x1, y1 = bbox
    h, w = sal.shape
    if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
        raise ValueError(f"bbox {bbox} outside a {w}x{h} map")
    total = float(sal.sum())
    if total == 0.0:
        return 0.0
    return float(sal[y0:y1, x0:x1].sum()) / total


@dataclass(frozen=True)
class AttributeTable:
    """Continuous per-class attribute vectors."""

    values: np.ndarray  # (C, M) float64
    attribute_names: list[str]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(self.attribute_names):
            raise ValueError("values must be (C, M) matching attribute_names")
        object.__setattr__(self, "values", vals)


def select_discriminative_attributes(table: AttributeTable, target: int, reference: int, count: int) -> list[int]:
    """Indices of the ``count`` attributes with the largest value difference
    attr_target - attr_reference; ties break toward the smaller index."""
    num_classes, num_attrs = table.values.shape
    for cls in (target, reference):
        if not 0 <= cls < num_classes:
            raise ValueError(f"class {cls} missing from attribute table")
    if count > num_attrs:
        raise ValueError("count exceeds the attribute count")
    diff = table.values[target] - table.values[reference]
    order = sorted(range(num_attrs), key=lambda i: (-diff[i], i))
    return order[:count]


def saliency_overlap(map_a: np.ndarray, map_b: np.ndarray) -> float:
    """Cosine similarity of flattened maps; 0 if either is all zeros."""
    a = np.asarray(map_a, dtype=np.float64).ravel()
    b = np.asarray(map_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("maps must share a resolution")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


# --------------------------------------------------------------------------
# Manifest-level evaluation
# --------------------------------------------------------------------------


def load_sample_arrays(manifest: DatasetManifest, rec: SampleRecord) -> tuple[FeatureStack, np.ndarray]:
    """Feature stack and float image in [0, 1] for one sample."""
    maps = read_tensor(manifest.feature_file(rec))
    image = read_tensor(manifest.image_file(rec)).astype(np.float32) / np.float32(255.0)
    return FeatureStack.from_maps(maps), image


def explanation_for_record(manifest: DatasetManifest, rec: SampleRecord, head: ClassifierHead,
                           backend, *, method: str = "grad", gamma: float = DEFAULT_GAMMA,
                           num_references: int = DEFAULT_NUM_REFERENCES,
                           aggregation: str = DEFAULT_AGGREGATION) -> tuple[np.ndarray, int, int]:
    """Image-resolution saliency for a record's true class.

    References come from the head's prediction ranking; ``num_references=0``
    runs the baseline method. Returns (saliency, target, runner_up).
    """
    stack, image = load_sample_arrays(manifest, rec)
    target = rec.class_id
    logits = predict_logits(head, stack.pooled)
    runner_up = rank_reference_classes(logits, target, 1)[0]
    refs: tuple[tuple[int, float], ...] = ()
    if num_references > 0:
        refs = tuple((d, gamma) for d in rank_reference_classes(logits, target, num_references))
    spec = ExplanationTarget(target_class=target, references=refs, method=method, aggregation=aggregation)
    h_img, w_img = image.shape[:2]
    sal = explain(stack, head, spec, backend=backend, image=image, upsample_to=(h_img, w_img))
    return sal.grid, target, runner_up


def evaluate_manifest(manifest: DatasetManifest, head: ClassifierHead, backend, *,
                      split: str = "test", method: str = "grad", gamma: float = DEFAULT_GAMMA,
                      num_references: int = DEFAULT_NUM_REFERENCES,
                      aggregation: str = DEFAULT_AGGREGATION,
                      rd_fractions: tuple[float, ...] = (0.05, 0.10),
                      fill: str = "zero", deletion_step: float | None = 0.02,
                      ) -> tuple[EvalReport, list[tuple[str, EvalReport]]]:
    """Evaluate one explanation configuration over a manifest split.

    Per image: relative drop at each fraction against the runner-up
    prediction, the deletion AUC (when ``deletion_step`` is set), and the
    pointing game where a bbox exists. Returns the mean report and the
    per-image reports.
    """
    records = manifest.split(split)
    if not records:
        raise ValueError(f"manifest has no samples in split {split!r}")
    per_image: list[tuple[str, EvalReport]] = []
    for rec in records:
        stack, image = load_sample_arrays(manifest, rec)
        saliency, target, runner_up = explanation_for_record(
            manifest, rec, head, backend,
            method=method, gamma=gamma, num_references=num_references, aggregation=aggregation,
        )
        report = EvalReport()
        before = _confidences(backend, image, head)
        for frac in rd_fractions:
            masked = mask_top_pixels(image, saliency, frac, fill)
            after = _confidences(backend, masked, head)
            report.rd_at[frac] = relative_drop_from_confidences(
                float(before[target]), float(after[target]),
                float(before[runner_up]), float(after[runner_up]),
            )
        if deletion_step is not None:
            curve = deletion_curve(backend, image, saliency, target, reference=runner_up,
                                   step=deletion_step, fill=fill, head=head)
            report.deletion_auc = auc(curve)
        if rec.bbox is not None:
            report.pointing_game = pointing_game(saliency, rec.bbox)
        per_image.append((rec.sample_id, report))

    agg = EvalReport(aggregate=True)
    aucs = [r.deletion_auc for _, r in per_image if r.deletion_auc is not None]
    if aucs:
        agg.deletion_auc = float(np.mean(aucs))
    for frac in rd_fractions:
        agg.rd_at[frac] = float(np.mean([r.rd_at[frac] for _, r in per_image]))
    points = [r.pointing_game for _, r in per_image if r.pointing_game is not None]
    if points:
        agg.pointing_game = float(np.mean(points))
    return agg, per_image


def report_document(aggregate: EvalReport, per_image: list[tuple[str, EvalReport]], config: dict) -> dict:
    return {
        "config": config,
        "aggregate": aggregate.to_dict(),
        "per_image": {sample_id: rep.to_dict() for sample_id, rep in per_image},
    }


def report_to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"
