"""Numba-compiled kernels. Same contracts as ``_numpy_impl``.

Loops accumulate in float64 and emit float32, matching the reference path to
float32 resolution. ``cache=True`` persists compiled code across processes.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

NAME = "numba"


@njit(cache=True, parallel=True)
def _conv2d_stride(image, kernels, stride, apply_tanh):
    k, kh, kw, cin = kernels.shape
    h, w, _ = image.shape
    hf = (h - kh) // stride + 1
    wf = (w - kw) // stride + 1
    out = np.empty((k, hf, wf), dtype=np.float32)
    # parallel over channels; each output element keeps a fixed sequential
    # accumulation order, so results stay deterministic
    for ch in prange(k):
        for i in range(hf):
            for j in range(wf):
                acc = 0.0
                r0 = i * stride
                c0 = j * stride
                for a in range(kh):
                    for b in range(kw):
                        for c in range(cin):
                            acc += float(image[r0 + a, c0 + b, c]) * float(kernels[ch, a, b, c])
                if apply_tanh:
                    acc = math.tanh(acc)
                out[ch, i, j] = acc
    return out


def conv2d_stride(image: np.ndarray, kernels: np.ndarray, stride: int, apply_tanh: bool) -> np.ndarray:
    return _conv2d_stride(image, kernels, stride, apply_tanh)


@njit(cache=True)
def _bilinear_resize(src, out_h, out_w):
    h, w = src.shape
    out = np.empty((out_h, out_w), dtype=np.float32)
    scale_r = h / out_h
    scale_c = w / out_w
    for i in range(out_h):
        sr = (i + 0.5) * scale_r - 0.5
        if sr < 0.0:
            sr = 0.0
        if sr > h - 1.0:
            sr = h - 1.0
        r_lo = int(math.floor(sr))
        r_hi = r_lo + 1 if r_lo + 1 < h else h - 1
        rf = sr - r_lo
        for j in range(out_w):
            sc = (j + 0.5) * scale_c - 0.5
            if sc < 0.0:
                sc = 0.0
            if sc > w - 1.0:
                sc = w - 1.0
            c_lo = int(math.floor(sc))
            c_hi = c_lo + 1 if c_lo + 1 < w else w - 1
            cf = sc - c_lo
            top = float(src[r_lo, c_lo]) * (1.0 - cf) + float(src[r_lo, c_hi]) * cf
            bot = float(src[r_hi, c_lo]) * (1.0 - cf) + float(src[r_hi, c_hi]) * cf
            out[i, j] = top * (1.0 - rf) + bot * rf
    return out


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    return _bilinear_resize(src, out_h, out_w)


@njit(cache=True)
def _weighted_sum(maps, weights):
    k, h, w = maps.shape
    out = np.empty((h, w), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for ch in range(k):
                acc += float(weights[ch]) * float(maps[ch, i, j])
            out[i, j] = acc
    return out


def weighted_sum(maps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return _weighted_sum(maps, weights)


@njit(cache=True)
def _relu_grad_sum(maps, grads):
    k, h, w = maps.shape
    out = np.empty((h, w), dtype=np.float32)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for ch in range(k):
                g = float(grads[ch, i, j])
                if g > 0.0:
                    acc += g * float(maps[ch, i, j])
            out[i, j] = acc
    return out


def relu_grad_sum(maps: np.ndarray, grads: np.ndarray) -> np.ndarray:
    return _relu_grad_sum(maps, grads)
