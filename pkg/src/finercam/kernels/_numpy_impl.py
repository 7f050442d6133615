"""Pure-NumPy kernels. Reference semantics for the numba implementations.

All kernels accumulate in float64 and cast the result to float32 so that both
backends agree to float32 resolution.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def conv2d_stride(image: np.ndarray, kernels: np.ndarray, stride: int, apply_tanh: bool) -> np.ndarray:
    """Valid strided convolution, optionally followed by tanh.

    image: (H, W, Cin) float32, kernels: (K, kh, kw, Cin) float32.
    Returns (K, Hf, Wf) float32 with Hf = (H - kh)//stride + 1.
    """
    k, kh, kw, cin = kernels.shape
    windows = np.lib.stride_tricks.sliding_window_view(image, (kh, kw, cin))
    windows = windows[::stride, ::stride, 0]  # (Hf, Wf, kh, kw, Cin)
    out = np.einsum(
        "xyabc,kabc->kxy",
        windows.astype(np.float64),
        kernels.astype(np.float64),
        optimize=True,
    )
    if apply_tanh:
        out = np.tanh(out)
    return out.astype(np.float32)


def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center source coordinates, clamped to the valid range.
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a 2-D float32 map with half-pixel centers."""
    h, w = src.shape
    r_lo, r_hi, r_f = _axis_coords(h, out_h)
    c_lo, c_hi, c_f = _axis_coords(w, out_w)
    s = src.astype(np.float64)
    top = s[r_lo][:, c_lo] * (1.0 - c_f) + s[r_lo][:, c_hi] * c_f
    bot = s[r_hi][:, c_lo] * (1.0 - c_f) + s[r_hi][:, c_hi] * c_f
    out = top * (1.0 - r_f[:, None]) + bot * r_f[:, None]
    return out.astype(np.float32)


def weighted_sum(maps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Channel-weighted sum: sum_k weights[k] * maps[k]."""
    out = np.tensordot(weights.astype(np.float64), maps.astype(np.float64), axes=(0, 0))
    return out.astype(np.float32)


def relu_grad_sum(maps: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Per-location composition: sum_k max(grads[k], 0) * maps[k]."""
    g = np.maximum(grads.astype(np.float64), 0.0)
    out = (g * maps.astype(np.float64)).sum(axis=0)
    return out.astype(np.float32)
