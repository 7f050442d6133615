"""Wire protocol for external model backends.

One message is a single-line UTF-8 JSON object terminated by ``\\n``,
optionally followed by FCT-encoded tensor payloads whose byte lengths the
message declares in order under ``"payloads"``:

    {"type": "hello"}
    {"type": "hello", "descriptor": {...}}                     <- reply
    {"type": "forward", "payloads": [N]}            + image FCT
    {"type": "forward", "payloads": [A, B]}         + features, logits
    {"type": "masked_forward", "payloads": [N, M]}  + image, mask
    {"type": "masked_forward", "payloads": [L]}     + logits
    {"type": "error", "code": "...", "message": "..."}

Image payloads may be uint8 (H, W, C) pixels or float32 in [0, 1]; masks are
float32 (H, W) in [0, 1]. Feature and logit payloads are float32. The channel
is strictly ordered request/response; servers answer every malformed message
with an ``error`` message rather than dropping it.
"""

from __future__ import annotations

import json
import socket
from typing import BinaryIO, Sequence

import numpy as np

from . import tensor_store

MAX_LINE_BYTES = 1 << 20
MAX_PAYLOADS = 8
MAX_PAYLOAD_BYTES = 1 << 30

ERR_BAD_REQUEST = "bad_request"
ERR_BAD_TENSOR = "bad_tensor"
ERR_UNSUPPORTED = "unsupported"
ERR_INTERNAL = "internal"


class ProtocolError(RuntimeError):
    """Framing failure or stream closed mid-message."""


class RemoteBackendError(RuntimeError):
    """The peer answered with an ``error`` message."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def write_message(stream: BinaryIO, obj: dict, payloads: Sequence[bytes] = ()) -> None:
    header = dict(obj)
    if payloads:
        header["payloads"] = [len(p) for p in payloads]
    stream.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
    for blob in payloads:
        stream.write(blob)
    stream.flush()


def read_message(stream: BinaryIO) -> tuple[dict, list[bytes]] | None:
    """Read one message; None at clean EOF (before any byte of a message)."""
    line = stream.readline(MAX_LINE_BYTES + 1)
    if not line:
        return None
    if not line.endswith(b"\n"):
        raise ProtocolError("unterminated or oversized control line")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"control line is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or not isinstance(obj.get("type"), str):
        raise ProtocolError("control message must be an object with a string 'type'")
    lengths = obj.get("payloads", [])
    if not isinstance(lengths, list) or len(lengths) > MAX_PAYLOADS or not all(
        isinstance(n, int) and 0 <= n <= MAX_PAYLOAD_BYTES for n in lengths
    ):
        raise ProtocolError("invalid payloads declaration")
    payloads = []
    for n in lengths:
        blob = _read_exact(stream, n)
        payloads.append(blob)
    return obj, payloads


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise ProtocolError(f"stream closed with {remaining} payload bytes pending")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def write_error(stream: BinaryIO, code: str, message: str) -> None:
    write_message(stream, {"type": "error", "code": code, "message": message})


# --------------------------------------------------------------------------
# Server side
# --------------------------------------------------------------------------


def serve_stream(backend, rfile: BinaryIO, wfile: BinaryIO) -> None:
    """Answer requests from one ordered byte stream until EOF.

    ``backend`` supplies ``descriptor() -> dict``, ``forward(image)`` and
    ``masked_forward(image, mask)``. Request-level failures produce an
    ``error`` reply and the loop continues; framing failures end the loop
    (the byte position can no longer be trusted).
    """
    while True:
        try:
            msg = read_message(rfile)
        except ProtocolError as exc:
            try:
                write_error(wfile, ERR_BAD_REQUEST, str(exc))
            except Exception:
                pass
            return
        if msg is None:
            return
        obj, payloads = msg
        try:
            _dispatch(backend, obj, payloads, wfile)
        except BrokenPipeError:
            return


def _dispatch(backend, obj: dict, payloads: list[bytes], wfile: BinaryIO) -> None:
    kind = obj["type"]
    try:
        if kind == "hello":
            write_message(wfile, {"type": "hello", "descriptor": backend.descriptor()})
        elif kind == "forward":
            if len(payloads) != 1:
                raise _Bad(ERR_BAD_REQUEST, "forward takes exactly one image payload")
            image = _decode_image(payloads[0])
            stack, logits = backend.forward(image)
            write_message(
                wfile,
                {"type": "forward"},
                [
                    tensor_store.tensor_to_bytes(np.asarray(stack.maps, dtype=np.float32)),
                    tensor_store.tensor_to_bytes(np.asarray(logits, dtype=np.float32)),
                ],
            )
        elif kind == "masked_forward":
            if len(payloads) != 2:
                raise _Bad(ERR_BAD_REQUEST, "masked_forward takes image and mask payloads")
            image = _decode_image(payloads[0])
            mask = _decode_mask(payloads[1])
            logits = backend.masked_forward(image, mask)
            write_message(
                wfile,
                {"type": "masked_forward"},
                [tensor_store.tensor_to_bytes(np.asarray(logits, dtype=np.float32))],
            )
        else:
            raise _Bad(ERR_BAD_REQUEST, f"unknown message type {kind!r}")
    except _Bad as exc:
        write_error(wfile, exc.code, exc.message)
    except tensor_store.TensorFormatError as exc:
        write_error(wfile, ERR_BAD_TENSOR, str(exc))
    except ValueError as exc:
        write_error(wfile, ERR_BAD_REQUEST, str(exc))
    except Exception as exc:  # pragma: no cover - defensive
        write_error(wfile, ERR_INTERNAL, f"{type(exc).__name__}: {exc}")


class _Bad(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message


def _decode_image(blob: bytes) -> np.ndarray:
    image = tensor_store.tensor_from_bytes(blob)
    if image.ndim != 3:
        raise _Bad(ERR_BAD_TENSOR, "image tensor must be (H, W, C)")
    if image.dtype == np.uint8:
        return (image.astype(np.float32) / np.float32(255.0))
    if image.dtype == np.float32:
        return image
    raise _Bad(ERR_BAD_TENSOR, "image tensor must be uint8 or float32")


def _decode_mask(blob: bytes) -> np.ndarray:
    mask = tensor_store.tensor_from_bytes(blob)
    if mask.ndim != 2 or mask.dtype != np.float32:
        raise _Bad(ERR_BAD_TENSOR, "mask tensor must be float32 (H, W)")
    return mask


def serve_tcp(backend, host: str = "127.0.0.1", port: int = 0, *, ready=None, once: bool = False) -> None:
    """Serve the protocol over TCP, one connection at a time.

    ``ready`` (if given) is called with the bound (host, port) before
    accepting; ``once`` stops after the first connection closes.
    """
    with socket.create_server((host, port)) as server:
        if ready is not None:
            ready(server.getsockname())
        while True:
            conn, _ = server.accept()
            with conn:
                rfile = conn.makefile("rb")
                wfile = conn.makefile("wb")
                serve_stream(backend, rfile, wfile)
            if once:
                return


# --------------------------------------------------------------------------
# Client side
# --------------------------------------------------------------------------


class ProtocolClient:
    """Single ordered request/response channel over a byte-stream pair."""

    def __init__(self, rfile: BinaryIO, wfile: BinaryIO):
        self._rfile = rfile
        self._wfile = wfile

    def request(self, obj: dict, payloads: Sequence[bytes] = ()) -> tuple[dict, list[bytes]]:
        write_message(self._wfile, obj, payloads)
        msg = read_message(self._rfile)
        if msg is None:
            raise ProtocolError("backend closed the stream")
        reply, blobs = msg
        if reply["type"] == "error":
            raise RemoteBackendError(reply.get("code", "unknown"), reply.get("message", ""))
        if reply["type"] != obj["type"]:
            raise ProtocolError(f"mismatched reply type {reply['type']!r} for {obj['type']!r}")
        return reply, blobs

    def close(self) -> None:
        for stream in (self._wfile, self._rfile):
            try:
                stream.close()
            except Exception:
                pass
