"""Bit-exact tensor container ("FCT") and dataset manifest handling.

FCT layout, little-endian:

    bytes 0-3   magic ``46 43 54 31`` ("FCT1")
    byte 4      dtype code: 0 = float32, 1 = float64, 2 = uint8
    byte 5      ndim, 1 through 4
    bytes 6-7   zero padding
    next        ndim x uint32 dimension sizes, each >= 1
    rest        row-major scalar payload, exactly prod(dims) * itemsize bytes

float64 exists for oracle/debug tensors only; pipeline math is float32.

Manifests are strict UTF-8 JSON: exactly the documented fields, unknown keys
rejected, every referenced tensor file checked for existence, dtype, and
shape against the manifest's declared ``feature_shape`` / ``image_shape``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FCT1"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODE_FOR_KIND = {("f", 4): 0, ("f", 8): 1, ("u", 1): 2}

# Declared payloads above this are rejected before any allocation.
_MAX_PAYLOAD_BYTES = 1 << 40


class TensorFormatError(ValueError):
    """Base class for FCT encode/decode failures."""


class BadMagicError(TensorFormatError):
    """File does not start with the FCT1 magic."""


class UnknownDtypeError(TensorFormatError):
    """Dtype code outside {0, 1, 2}."""


class InvalidHeaderError(TensorFormatError):
    """Structurally invalid header: bad ndim, nonzero padding, zero or
    overflowing dimensions."""


class TruncatedPayloadError(TensorFormatError):
    """Fewer payload bytes than the header declares."""


class TrailingDataError(TensorFormatError):
    """More payload bytes than the header declares."""


class ManifestError(ValueError):
    """Manifest fails schema validation or references missing/mismatched
    tensors."""


def _dtype_code(array: np.ndarray) -> int:
    key = (array.dtype.kind, array.dtype.itemsize)
    if key not in _CODE_FOR_KIND:
        raise TensorFormatError(f"unsupported dtype {array.dtype}; expected float32, float64, or uint8")
    return _CODE_FOR_KIND[key]


def tensor_to_bytes(array: np.ndarray) -> bytes:
    """Encode an array into FCT bytes.

    Raises TensorFormatError when dtype or shape violates the format
    (ndim outside 1..4, any dimension < 1).
    """
    code = _dtype_code(array)
    if not 1 <= array.ndim <= 4:
        raise InvalidHeaderError(f"ndim must be 1..4, got {array.ndim}")
    if any(d < 1 for d in array.shape):
        raise InvalidHeaderError(f"dimensions must be >= 1, got {array.shape}")
    if any(d > 0xFFFFFFFF for d in array.shape):
        raise InvalidHeaderError(f"dimension exceeds uint32 range: {array.shape}")
    header = MAGIC + struct.pack("<BBH", code, array.ndim, 0)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_DTYPE_CODES[code]).tobytes()
    return header + dims + payload


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    """Decode FCT bytes into an array. See the module docstring for the
    error taxonomy; a given byte string always fails with the same class."""
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError("missing FCT1 magic")
    if len(buf) < 8:
        raise TruncatedPayloadError("header truncated")
    code, ndim, pad = struct.unpack("<BBH", buf[4:8])
    if code not in _DTYPE_CODES:
        raise UnknownDtypeError(f"unknown dtype code {code}")
    if not 1 <= ndim <= 4:
        raise InvalidHeaderError(f"ndim must be 1..4, got {ndim}")
    if pad != 0:
        raise InvalidHeaderError("padding bytes must be zero")
    dims_end = 8 + 4 * ndim
    if len(buf) < dims_end:
        raise TruncatedPayloadError("dimension block truncated")
    shape = struct.unpack(f"<{ndim}I", buf[8:dims_end])
    if any(d == 0 for d in shape):
        raise InvalidHeaderError(f"dimensions must be >= 1, got {shape}")
    dtype = _DTYPE_CODES[code]
    expected = int(np.prod([int(d) for d in shape], dtype=object)) * dtype.itemsize
    if expected > _MAX_PAYLOAD_BYTES:
        raise InvalidHeaderError(f"dimension product overflows sane payload size ({expected} bytes)")
    actual = len(buf) - dims_end
    if actual < expected:
        raise TruncatedPayloadError(f"payload has {actual} bytes, header declares {expected}")
    if actual > expected:
        raise TrailingDataError(f"payload has {actual} bytes, header declares {expected}")
    return np.frombuffer(buf[dims_end:], dtype=dtype).reshape(shape).copy()


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write an array to *path* in FCT form."""
    data = tensor_to_bytes(array)
    Path(path).write_bytes(data)


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an FCT file back into an array."""
    return tensor_from_bytes(Path(path).read_bytes())


def read_tensor_header(path: str | Path) -> tuple[np.dtype, tuple[int, ...]]:
    """Read only dtype and shape (cheap manifest validation probe)."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 4 or head[:4] != MAGIC:
            raise BadMagicError("missing FCT1 magic")
        if len(head) < 8:
            raise TruncatedPayloadError("header truncated")
        code, ndim, pad = struct.unpack("<BBH", head[4:8])
        if code not in _DTYPE_CODES:
            raise UnknownDtypeError(f"unknown dtype code {code}")
        if not 1 <= ndim <= 4:
            raise InvalidHeaderError(f"ndim must be 1..4, got {ndim}")
        if pad != 0:
            raise InvalidHeaderError("padding bytes must be zero")
        dims = fh.read(4 * ndim)
        if len(dims) < 4 * ndim:
            raise TruncatedPayloadError("dimension block truncated")
        shape = struct.unpack(f"<{ndim}I", dims)
    if any(d == 0 for d in shape):
        raise InvalidHeaderError(f"dimensions must be >= 1, got {shape}")
    return _DTYPE_CODES[code], shape


# --------------------------------------------------------------------------
# Dataset manifests
# --------------------------------------------------------------------------

_SPLITS = ("train", "test")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    class_id: int
    feature_path: str
    image_path: str
    split: str
    bbox: tuple[int, int, int, int] | None = None


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    classes: list[str]
    samples: list[SampleRecord]
    layer_name: str
    feature_shape: tuple[int, int, int]
    image_shape: tuple[int, int, int]
    root: Path = field(default_factory=Path, compare=False)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def sample(self, sample_id: str) -> SampleRecord:
        for rec in self.samples:
            if rec.sample_id == sample_id:
                return rec
        raise KeyError(f"unknown sample_id {sample_id!r}")

    def split(self, name: str) -> list[SampleRecord]:
        return [rec for rec in self.samples if rec.split == name]

    def feature_file(self, rec: SampleRecord) -> Path:
        return self.root / rec.feature_path

    def image_file(self, rec: SampleRecord) -> Path:
        return self.root / rec.image_path


def _require_keys(obj: dict, required: set[str], optional: set[str], what: str) -> None:
    keys = set(obj)
    missing = required - keys
    if missing:
        raise ManifestError(f"{what} missing fields: {sorted(missing)}")
    unknown = keys - required - optional
    if unknown:
        raise ManifestError(f"{what} has unknown fields: {sorted(unknown)}")


def _parse_record(obj: dict, index: int) -> SampleRecord:
    what = f"samples[{index}]"
    if not isinstance(obj, dict):
        raise ManifestError(f"{what} must be an object")
    _require_keys(obj, {"sample_id", "class_id", "feature_path", "image_path", "split"}, {"bbox"}, what)
    if not isinstance(obj["sample_id"], str):
        raise ManifestError(f"{what}.sample_id must be a string")
    if not isinstance(obj["class_id"], int) or isinstance(obj["class_id"], bool):
        raise ManifestError(f"{what}.class_id must be an integer")
    if obj["split"] not in _SPLITS:
        raise ManifestError(f"{what}.split must be one of {_SPLITS}")
    bbox = None
    if obj.get("bbox") is not None:
        raw = obj["bbox"]
        if not (isinstance(raw, list) and len(raw) == 4 and all(isinstance(v, int) and not isinstance(v, bool) for v in raw)):
            raise ManifestError(f"{what}.bbox must be [x0, y0, x1, y1] integers")
        bbox = tuple(raw)
    return SampleRecord(
        sample_id=obj["sample_id"],
        class_id=obj["class_id"],
        feature_path=str(obj["feature_path"]),
        image_path=str(obj["image_path"]),
        split=obj["split"],
        bbox=bbox,
    )


def _parse_shape(value, length: int, what: str) -> tuple[int, ...]:
    if not (isinstance(value, list) and len(value) == length and all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value)):
        raise ManifestError(f"{what} must be a list of {length} positive integers")
    return tuple(value)


def load_manifest(path: str | Path, check_tensors: bool = True) -> DatasetManifest:
    """Load and fully validate a dataset manifest.

    Deterministic and side-effect free. With ``check_tensors`` every
    referenced FCT file must exist and carry the declared dtype and shape.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError("manifest root must be a JSON object")
    _require_keys(raw, {"version", "classes", "samples", "layer_name", "feature_shape", "image_shape"}, set(), "manifest")
    if not isinstance(raw["version"], int) or isinstance(raw["version"], bool):
        raise ManifestError("version must be an integer")
    if not (isinstance(raw["classes"], list) and raw["classes"] and all(isinstance(c, str) for c in raw["classes"])):
        raise ManifestError("classes must be a non-empty list of strings")
    if not isinstance(raw["layer_name"], str):
        raise ManifestError("layer_name must be a string")
    feature_shape = _parse_shape(raw["feature_shape"], 3, "feature_shape")
    image_shape = _parse_shape(raw["image_shape"], 3, "image_shape")
    if not isinstance(raw["samples"], list):
        raise ManifestError("samples must be a list")
    samples = [_parse_record(obj, i) for i, obj in enumerate(raw["samples"])]

    manifest = DatasetManifest(
        version=raw["version"],
        classes=list(raw["classes"]),
        samples=samples,
        layer_name=raw["layer_name"],
        feature_shape=feature_shape,
        image_shape=image_shape,
        root=path.parent,
    )

    h_img, w_img, _ = image_shape
    seen_ids: set[str] = set()
    for rec in samples:
        if rec.sample_id in seen_ids:
            raise ManifestError(f"duplicate sample_id {rec.sample_id!r}")
        seen_ids.add(rec.sample_id)
        if not 0 <= rec.class_id < manifest.num_classes:
            raise ManifestError(f"sample {rec.sample_id!r}: class_id {rec.class_id} out of range")
        if rec.bbox is not None:
            x0, y0, x1, y1 = rec.bbox
            if not (0 <= x0 < x1 <= w_img and 0 <= y0 < y1 <= h_img):
                raise ManifestError(f"sample {rec.sample_id!r}: bbox {rec.bbox} out of bounds for {w_img}x{h_img}")
        if check_tensors:
            _check_tensor_ref(manifest.feature_file(rec), np.dtype("<f4"), feature_shape, rec.sample_id, "feature")
            _check_tensor_ref(manifest.image_file(rec), np.dtype("u1"), image_shape, rec.sample_id, "image")
    return manifest


def _check_tensor_ref(path: Path, dtype: np.dtype, shape: tuple[int, ...], sample_id: str, kind: str) -> None:
    if not path.is_file():
        raise ManifestError(f"sample {sample_id!r}: dangling {kind} reference {path}")
    try:
        got_dtype, got_shape = read_tensor_header(path)
    except TensorFormatError as exc:
        raise ManifestError(f"sample {sample_id!r}: unreadable {kind} tensor {path}: {exc}") from exc
    if got_dtype != dtype or got_shape != shape:
        raise ManifestError(
            f"sample {sample_id!r}: {kind} tensor {path} is {got_dtype}{list(got_shape)}, "
            f"manifest declares {dtype}{list(shape)}"
        )


def manifest_to_json(manifest: DatasetManifest) -> str:
    """Serialize a manifest to its canonical JSON text."""
    obj = {
        "version": manifest.version,
        "classes": manifest.classes,
        "samples": [
            {
                "sample_id": rec.sample_id,
                "class_id": rec.class_id,
                "feature_path": rec.feature_path,
                "image_path": rec.image_path,
                "split": rec.split,
                **({"bbox": list(rec.bbox)} if rec.bbox is not None else {}),
            }
            for rec in manifest.samples
        ],
        "layer_name": manifest.layer_name,
        "feature_shape": list(manifest.feature_shape),
        "image_shape": list(manifest.image_shape),
    }
    return json.dumps(obj, indent=2) + "\n"


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    Path(path).write_text(manifest_to_json(manifest), "utf-8")
