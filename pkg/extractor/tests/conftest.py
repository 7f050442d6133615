import csv

import numpy as np
import pytest
from PIL import Image

from finercam.rng import StreamRng

# small inputs keep the CPU forward passes quick
IMAGE_SIZE = 64
BACKBONE = "torchvision:squeezenet1_0"


@pytest.fixture(scope="session")
def image_corpus(tmp_path_factory):
    """Four PNG images in two classes, with a labels CSV."""
    root = tmp_path_factory.mktemp("corpus")
    rng = StreamRng(77)
    rows = []
    for i in range(4):
        # distinct sizes exercise the resize+crop path
        w, h = 80 + 30 * i, 96 + 10 * i
        pixels = np.floor(rng.uniform((h, w, 3)) * 255).astype(np.uint8)
        name = f"img{i}.png"
        Image.fromarray(pixels).save(root / name)
        rows.append({"filename": name, "class_name": "cat" if i % 2 == 0 else "dog",
                     "split": "train" if i < 3 else "test"})
    labels = root / "labels.csv"
    with open(labels, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["filename", "class_name", "split"])
        writer.writeheader()
        writer.writerows(rows)
    return {"dir": root, "labels": labels}
