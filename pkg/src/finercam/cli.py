"""Command-line entry points.

Exit codes: 0 success, 1 computation error, 2 usage or input error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import api, metrics
from .head import (
    EmbeddingSet,
    TrainConfig,
    load_head,
    save_head,
    similarity_profile_csv,
    train_head,
    weight_similarity_profile,
)
from .service import ServiceConfig, config_from_env, load_service_config, serve as run_service
from .synth import SynthSpec, generate_benchmark
from .tensor_store import ManifestError, TensorFormatError, load_manifest, read_tensor

_INPUT_ERRORS = (FileNotFoundError, NotADirectoryError, ManifestError, TensorFormatError, KeyError, ValueError)


def guarded(fn):
    """Map exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except _INPUT_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except Exception as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Comparative class activation maps and their evaluation harness."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--images", "num_images", default=200, show_default=True, type=int)
@click.option("--classes", "num_classes", default=8, show_default=True, type=int)
@click.option("--family-size", default=4, show_default=True, type=int)
@guarded
def synth(out_dir, seed, num_images, num_classes, family_size):
    """Generate the deterministic synthetic benchmark."""
    spec = SynthSpec(seed=seed, num_images=num_images, num_classes=num_classes, family_size=family_size)
    manifest, _ = generate_benchmark(out_dir, spec)
    click.echo(f"wrote {len(manifest.samples)} samples, {manifest.num_classes} classes -> {out_dir}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--epochs", default=100, show_default=True, type=int)
@click.option("--learning-rate", default=3e-4, show_default=True, type=float)
@click.option("--batch-size", default=256, show_default=True, type=int)
@click.option("--split", default="train", show_default=True)
@guarded
def train(manifest_path, out_path, seed, epochs, learning_rate, batch_size, split):
    """Train a linear head on pooled embeddings from a manifest."""
    manifest = load_manifest(manifest_path)
    records = manifest.split(split)
    if not records:
        raise ValueError(f"manifest has no samples in split {split!r}")
    embeddings = []
    labels = []
    for rec in records:
        maps = read_tensor(manifest.feature_file(rec))
        embeddings.append(maps.astype(np.float64).mean(axis=(1, 2)).astype(np.float32))
        labels.append(rec.class_id)
    data = EmbeddingSet(embeddings=np.stack(embeddings), labels=np.asarray(labels), split=split)
    config = TrainConfig(learning_rate=learning_rate, epochs=epochs, batch_size=batch_size, seed=seed)
    head = train_head(data, manifest.num_classes, config, class_names=manifest.classes)
    save_head(out_path, head)
    from .head import accuracy

    click.echo(f"trained head on {len(records)} samples; train accuracy {accuracy(head, data):.4f} -> {out_path}")


def _parse_references(refs: str | None):
    if refs is None or refs == "" or refs == "none":
        return None
    if refs.startswith("auto:"):
        return refs
    return [int(v) for v in refs.split(",")]


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--head", "head_path", required=True, type=click.Path())
@click.option("--sample", "sample_id", required=True)
@click.option("--target", "target_class", default=None, type=int)
@click.option("--refs", "references", default="auto:3", show_default=True,
              help="'auto:T', comma-separated class ids, or 'none'.")
@click.option("--gamma", default=0.6, show_default=True, type=float)
@click.option("--method", default="grad", show_default=True, type=click.Choice(["grad", "layer", "score"]))
@click.option("--aggregation", default="avg_before_act", show_default=True,
              type=click.Choice(["avg_before_act", "max_before_act", "avg_after_act"]))
@click.option("--output", default="normalized", show_default=True,
              type=click.Choice(["raw", "normalized", "overlay_png"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--backend", "backend_spec", default=None, help="Backend spec (needed for --method score).")
@guarded
def explain(manifest_path, head_path, sample_id, target_class, references, gamma, method,
            aggregation, output, out_path, backend_spec):
    """Write the saliency map (FCT) or overlay (PNG) for one sample."""
    ctx = api.load_context(manifest_path, head_path, backend_spec)
    request = api.ExplainRequest(
        sample_id=sample_id, target_class=target_class, references=_parse_references(references),
        gamma=gamma, method=method, aggregation=aggregation, output=output,
    )
    result = api.run_explain(ctx, request)
    out = Path(out_path)
    if output == "overlay_png":
        out.write_bytes(result.overlay_png)
    else:
        out.write_bytes(result.saliency_fct())
    click.echo(f"target={result.metadata['target_class']} references={result.references_used} -> {out}")


@main.command(name="eval")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--head", "head_path", required=True, type=click.Path())
@click.option("--backend", "backend_spec", required=True)
@click.option("--split", default="test", show_default=True)
@click.option("--method", default="grad", show_default=True, type=click.Choice(["grad", "layer", "score"]))
@click.option("--references", "num_references", default=3, show_default=True, type=int,
              help="Top-T predicted reference classes; 0 evaluates the baseline method.")
@click.option("--gamma", default=0.6, show_default=True, type=float)
@click.option("--aggregation", default="avg_before_act", show_default=True,
              type=click.Choice(["avg_before_act", "max_before_act", "avg_after_act"]))
@click.option("--rd-fraction", "rd_fractions", multiple=True, type=float, default=(0.05, 0.10), show_default=True)
@click.option("--deletion-step", default=0.02, show_default=True, type=float)
@click.option("--no-deletion", is_flag=True, help="Skip deletion curves (relative drop and pointing game only).")
@click.option("--fill", default="zero", show_default=True, type=click.Choice(["zero", "mean"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--curves-dir", default=None, type=click.Path(file_okay=False),
              help="Also write one deletion-curve CSV per image.")
@guarded
def eval_cmd(manifest_path, head_path, backend_spec, split, method, num_references, gamma,
             aggregation, rd_fractions, deletion_step, no_deletion, fill, out_path, curves_dir):
    """Evaluate an explanation configuration over a manifest split."""
    ctx = api.load_context(manifest_path, head_path, backend_spec)
    step = None if no_deletion else deletion_step
    aggregate, per_image = metrics.evaluate_manifest(
        ctx.manifest, ctx.head, ctx.backend, split=split, method=method, gamma=gamma,
        num_references=num_references, aggregation=aggregation,
        rd_fractions=tuple(rd_fractions), fill=fill, deletion_step=step,
    )
    config = {
        "split": split, "method": method, "num_references": num_references, "gamma": gamma,
        "aggregation": aggregation, "rd_fractions": list(rd_fractions), "fill": fill,
        "deletion_step": step,
    }
    doc = metrics.report_document(aggregate, per_image, config)
    Path(out_path).write_text(metrics.report_to_json(doc), "utf-8")
    if curves_dir and step is not None:
        curves_path = Path(curves_dir)
        curves_path.mkdir(parents=True, exist_ok=True)
        for rec in ctx.manifest.split(split):
            stack, image = metrics.load_sample_arrays(ctx.manifest, rec)
            saliency, target, runner_up = metrics.explanation_for_record(
                ctx.manifest, rec, ctx.head, ctx.backend,
                method=method, gamma=gamma, num_references=num_references, aggregation=aggregation,
            )
            curve = metrics.deletion_curve(ctx.backend, image, saliency, target, reference=runner_up,
                                           step=step, fill=fill, head=ctx.head)
            (curves_path / f"{rec.sample_id}.csv").write_text(metrics.curve_to_csv(curve), "utf-8")
    click.echo(json.dumps(doc["aggregate"], indent=2))


@main.command()
@click.option("--head", "head_path", required=True, type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path())
@guarded
def similarity(head_path, out_path):
    """Sorted weight-similarity profile of a head, as CSV."""
    head = load_head(head_path)
    text = similarity_profile_csv(weight_similarity_profile(head))
    if out_path:
        Path(out_path).write_text(text, "utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(),
              help="Service config JSON (falls back to $FINERCAM_CONFIG).")
@click.option("--manifest", "manifest_path", default=None, type=click.Path())
@click.option("--head", "head_path", default=None, type=click.Path())
@click.option("--backend", "backend_spec", default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True, type=int)
@click.option("--static-dir", default=None, type=click.Path(file_okay=False))
@guarded
def serve(config_path, manifest_path, head_path, backend_spec, host, port, static_dir):
    """Run the explorer HTTP service."""
    if config_path:
        config = load_service_config(config_path)
    elif manifest_path and head_path:
        config = ServiceConfig(
            manifest_path=manifest_path, head_path=head_path, backend_spec=backend_spec,
            host=host, port=port, static_dir=static_dir,
        )
        config.validate()
    else:
        config = config_from_env()
    run_service(config)


if __name__ == "__main__":
    main()
