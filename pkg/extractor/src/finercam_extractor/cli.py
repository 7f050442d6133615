"""Extractor command line: extract, embed, serve."""

from __future__ import annotations

import sys

import click

from .backbones import load_backbone
from .extract import ExtractionJob, embed_prompts, extract


@click.group()
def main():
    """Bridge real pretrained backbones into the finercam formats."""


@main.command(name="extract")
@click.option("--backbone", default="torchvision:resnet18", show_default=True)
@click.option("--layer", default=None, help="Feature layer (defaults per architecture).")
@click.option("--images", "image_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--labels", "labels_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--image-size", default=224, show_default=True, type=int)
@click.option("--weights", "weights_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
def extract_cmd(backbone, layer, image_dir, labels_file, out_dir, image_size, weights_path, seed):
    """Export feature maps, pooled embeddings, and input pixels."""
    job = ExtractionJob(backbone=backbone, layer=layer, image_dir=image_dir,
                        labels_file=labels_file, out_dir=out_dir, image_size=image_size,
                        weights_path=weights_path, seed=seed)
    try:
        manifest = extract(job)
    except (FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"exported {len(manifest.samples)} samples, {manifest.num_classes} classes -> {out_dir}")


@main.command()
@click.option("--prompt", "prompts", multiple=True, required=True,
              help="Repeatable; row order follows the flag order.")
@click.option("--dim", required=True, type=int, help="Embedding dimension (backbone channel count).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
def embed(prompts, dim, out_path, seed):
    """Encode text prompts into a unit-norm text-embedding head."""
    try:
        head = embed_prompts(list(prompts), dim=dim, out_path=out_path, seed=seed)
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {head.num_classes}-row text head -> {out_path}")


@main.command()
@click.option("--backbone", default="torchvision:resnet18", show_default=True)
@click.option("--layer", default=None)
@click.option("--head", "head_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image-size", default=224, show_default=True, type=int)
@click.option("--weights", "weights_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--tcp", default=None, help="host:port to listen on (default: stdio).")
def serve(backbone, layer, head_path, image_size, weights_path, seed, tcp):
    """Serve forward/masked_forward over the backend wire protocol."""
    from finercam.head import load_head

    from .serve import BackboneServer, serve_over_tcp, serve_stdio

    try:
        bb = load_backbone(backbone, layer=layer, image_size=image_size,
                           weights_path=weights_path, seed=seed)
        server = BackboneServer(bb, load_head(head_path))
    except (FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    if tcp:
        host, _, port = tcp.partition(":")
        serve_over_tcp(server, host or "127.0.0.1", int(port))
    else:
        serve_stdio(server)


if __name__ == "__main__":
    main()
