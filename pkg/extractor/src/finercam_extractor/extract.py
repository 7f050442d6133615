"""Export images through a backbone into the manifest + FCT layout."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from finercam.head import ClassifierHead, save_head
from finercam.tensor_store import (
    DatasetManifest,
    SampleRecord,
    load_manifest,
    write_manifest,
    write_tensor,
)

from .backbones import HashTextEmbedder, load_backbone


@dataclass(frozen=True)
class ExtractionJob:
    backbone: str  # e.g. "torchvision:resnet18"
    image_dir: str
    labels_file: str  # CSV: filename,class_name[,split]
    out_dir: str
    layer: str | None = None
    image_size: int = 224
    weights_path: str | None = None
    seed: int = 0
    layer_alias: str | None = None  # manifest layer_name override


def read_labels(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "filename" not in reader.fieldnames or "class_name" not in reader.fieldnames:
            raise ValueError("labels file needs a header with filename,class_name[,split]")
        for row in reader:
            split = (row.get("split") or "train").strip()
            if split not in ("train", "test"):
                raise ValueError(f"split must be train or test, got {split!r}")
            rows.append({"filename": row["filename"].strip(),
                         "class_name": row["class_name"].strip(),
                         "split": split})
    if not rows:
        raise ValueError("labels file has no samples")
    return rows


def extract(job: ExtractionJob) -> DatasetManifest:
    """Run the backbone over every labelled image and write the dataset.

    Produces ``manifest.json``, per-sample feature/image FCT files, a
    ``preprocess.json`` sidecar recording the pixel pipeline verbatim, and a
    ``backbone.json`` descriptor stub for reproducing the extraction.
    """
    from PIL import Image

    backbone = load_backbone(job.backbone, layer=job.layer, image_size=job.image_size,
                             weights_path=job.weights_path, seed=job.seed)
    rows = read_labels(job.labels_file)
    classes = sorted({row["class_name"] for row in rows})
    class_ids = {name: i for i, name in enumerate(classes)}

    out = Path(job.out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)

    records = []
    for row in rows:
        src = Path(job.image_dir) / row["filename"]
        if not src.is_file():
            raise FileNotFoundError(f"image not found: {src}")
        pixels = backbone.prepare_pixels(Image.open(src))
        maps = backbone.features(pixels)
        pooled = maps.astype(np.float64).mean(axis=(1, 2)).astype(np.float32)
        recorded = maps.astype(np.float64).mean(axis=(1, 2))
        if np.abs(recorded - pooled.astype(np.float64)).max() > 1e-4:
            raise RuntimeError("pooled embedding drifted from the spatial mean")
        sample_id = Path(row["filename"]).stem
        write_tensor(out / "features" / f"{sample_id}.fct", maps)
        write_tensor(out / "images" / f"{sample_id}.fct", pixels)
        records.append(SampleRecord(
            sample_id=sample_id,
            class_id=class_ids[row["class_name"]],
            feature_path=f"features/{sample_id}.fct",
            image_path=f"images/{sample_id}.fct",
            split=row["split"],
        ))

    layer_name = job.layer_alias or backbone.layer
    manifest = DatasetManifest(
        version=1,
        classes=classes,
        samples=records,
        layer_name=layer_name,
        feature_shape=backbone.feature_shape,
        image_shape=backbone.input_shape,
        root=out,
    )
    write_manifest(out / "manifest.json", manifest)
    (out / "preprocess.json").write_text(
        json.dumps(backbone.preprocess.to_dict(), indent=2) + "\n", "utf-8")
    (out / "backbone.json").write_text(json.dumps({
        "backbone": job.backbone,
        "layer": backbone.layer,
        "image_size": job.image_size,
        "weights_path": job.weights_path,
        "seed": job.seed,
    }, indent=2) + "\n", "utf-8")
    return load_manifest(out / "manifest.json")


def embed_prompts(prompts: list[str], dim: int, out_path: str | Path, seed: int = 0) -> ClassifierHead:
    """Encode prompts into a unit-norm text-embedding head file.

    Class names are the prompts themselves, so a pair like
    ("red epaulets", "bird") can drive a comparative explanation directly
    with target 0 and reference 1.
    """
    if not prompts:
        raise ValueError("need at least one prompt")
    embedder = HashTextEmbedder(dim=dim, seed=seed)
    rows = np.stack([embedder.embed(p) for p in prompts])
    head = ClassifierHead(weights=rows, class_names=list(prompts), origin="text_embeddings",
                          metadata={"embedder": "hash", "seed": seed})
    save_head(out_path, head)
    return head
