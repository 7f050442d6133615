"""Fixed 256-entry colormap and overlay composition.

The table is generated once, at import, by piecewise-linear interpolation
between five RGB anchors (positions 0, 64, 128, 192, 255):

    (13, 8, 135), (126, 3, 168), (204, 71, 120), (248, 149, 64), (240, 249, 33)

with each channel rounded as floor(value + 0.5). The resulting 768 bytes are
the contract: overlays must be reproducible bit-for-bit from this table in
any implementation, so do not regenerate it with a different interpolation.

Overlay blending uses a per-pixel alpha proportional to the saliency value:

    alpha = opacity * s
    out   = floor(image * (1 - alpha) + colormap(s) * alpha + 0.5)

where s is the normalized saliency in [0, 1] and colormap(s) indexes the
table at floor(s * 255 + 0.5). Zero saliency therefore leaves the image
untouched at any opacity, and a saturated map at opacity 1 yields pure
colormap pixels.
"""

from __future__ import annotations

import io

import numpy as np

_ANCHORS = [
    (0, (13, 8, 135)),
    (64, (126, 3, 168)),
    (128, (204, 71, 120)),
    (192, (248, 149, 64)),
    (255, (240, 249, 33)),
]


def _build_table() -> np.ndarray:
    table = np.zeros((256, 3), dtype=np.uint8)
    for (p0, c0), (p1, c1) in zip(_ANCHORS, _ANCHORS[1:]):
        for i in range(p0, p1 + 1):
            t = (i - p0) / (p1 - p0)
            for ch in range(3):
                table[i, ch] = int(np.floor(c0[ch] + t * (c1[ch] - c0[ch]) + 0.5))
    return table


COLORMAP = _build_table()
COLORMAP.setflags(write=False)


def apply_colormap(saliency: np.ndarray) -> np.ndarray:
    """Map a [0, 1] saliency grid to (H, W, 3) uint8 colormap pixels."""
    s = np.asarray(saliency, dtype=np.float64)
    idx = np.clip(np.floor(s * 255.0 + 0.5), 0, 255).astype(np.int64)
    return COLORMAP[idx]


def overlay_rgb(image: np.ndarray, saliency: np.ndarray, opacity: float = 0.5) -> np.ndarray:
    """Blend colormap(saliency) onto a uint8 RGB image with saliency-scaled
    alpha. ``saliency`` must be normalized to [0, 1] at image resolution."""
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("image must be (H, W, 3) uint8")
    s = np.asarray(saliency, dtype=np.float64)
    if s.shape != img.shape[:2]:
        raise ValueError("saliency must match the image resolution")
    if not 0.0 <= opacity <= 1.0:
        raise ValueError("opacity must lie in [0, 1]")
    alpha = (opacity * np.clip(s, 0.0, 1.0))[:, :, None]
    colored = apply_colormap(s).astype(np.float64)
    out = np.floor(img.astype(np.float64) * (1.0 - alpha) + colored * alpha + 0.5)
    return out.astype(np.uint8)


def encode_png(pixels: np.ndarray) -> bytes:
    """Deterministic PNG encoding of (H, W, 3) uint8 pixels."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
