import numpy as np
import pytest

from finercam import kernels
from finercam.backend import ToyBackend
from finercam.head import EmbeddingSet, TrainConfig, train_head
from finercam.synth import SynthSpec, generate_benchmark, toy_backend_for
from finercam.tensor_store import read_tensor

# Training configuration that converges on the synthetic benchmark.
SYNTH_TRAIN = TrainConfig(seed=7, learning_rate=0.01, epochs=200, batch_size=64)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # JIT-compile the hot kernels once so timed tests measure steady state.
    kernels.warmup()


@pytest.fixture(scope="session")
def toy():
    return ToyBackend(seed=3)


def pooled_embeddings(manifest, records):
    emb = np.stack([
        read_tensor(manifest.feature_file(r)).astype(np.float64).mean(axis=(1, 2)).astype(np.float32)
        for r in records
    ])
    labels = np.asarray([r.class_id for r in records])
    return emb, labels


def train_on_manifest(manifest, config=SYNTH_TRAIN):
    emb, labels = pooled_embeddings(manifest, manifest.split("train"))
    return train_head(EmbeddingSet(embeddings=emb, labels=labels), manifest.num_classes,
                      config, class_names=manifest.classes)


@pytest.fixture(scope="session")
def synth_small(tmp_path_factory):
    """48-image benchmark with a trained head and matching eval backend."""
    out = tmp_path_factory.mktemp("synth_small")
    spec = SynthSpec(seed=0, num_images=48)
    manifest, ground_truth = generate_benchmark(out, spec)
    head = train_on_manifest(manifest)
    backend = toy_backend_for(spec).with_head(head)
    return {"dir": out, "spec": spec, "manifest": manifest, "ground_truth": ground_truth,
            "head": head, "backend": backend}
