"""Frozen visual feature extraction and the on-disk vector cache.

The cache format (``VVF1``) is little-endian::

    b"VVF1" | uint32 dim | records...
    record = uint16 len(doc_id) | utf-8 doc_id | dim x float32
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from visrank._io import atomic_write

MAGIC = b"VVF1"
INPUT_SIZE = 224
LUMA = np.array([0.299, 0.587, 0.114])
IMAGE_EXTENSIONS = (".png", ".bmp", ".tif", ".tiff", ".ppm", ".pgm")


@dataclass(frozen=True)
class RasterImage:
    """Row-major 8-bit image with 1 (heatmap) or 3 (RGB) channels."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected HxW, HxWx1 or HxWx3 pixels, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("zero-sized image")
        object.__setattr__(self, "pixels", np.ascontiguousarray(px, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @classmethod
    def open(cls, path) -> "RasterImage":
        from PIL import Image

        with Image.open(path) as im:
            mode = "L" if im.mode in ("L", "LA", "I;16", "I", "1") else "RGB"
            return cls(np.asarray(im.convert(mode)))


@dataclass(frozen=True)
class ExtractorDescriptor:
    name: str
    output_dim: int
    version: str

    def __post_init__(self):
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")


@dataclass(frozen=True)
class VisualVector:
    doc_id: str
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix of box-filter overlaps."""
    edges = np.arange(n_out + 1) * (n_in / n_out)
    lo, hi = edges[:-1, None], edges[1:, None]
    src = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, src + 1) - np.maximum(lo, src), 0.0, None)
    return overlap / (n_in / n_out)


def luminance(img: RasterImage) -> np.ndarray:
    px = img.pixels.astype(np.float64)
    if img.channels == 1:
        return px[:, :, 0]
    return px @ LUMA


def resample(plane: np.ndarray, size: int = INPUT_SIZE) -> np.ndarray:
    h, w = plane.shape
    return _area_weights(h, size) @ plane @ _area_weights(w, size).T


def grid_extract(img: RasterImage, grid: int = 4, size: int = INPUT_SIZE) -> np.ndarray:
    """Mean luminance of a ``grid`` x ``grid`` partition, scaled to [0, 1].

    The image is converted to luminance and box-resampled to ``size`` x
    ``size`` before pooling. Cells are row-major.
    """
    if grid < 1:
        raise ValueError("grid must be >= 1")
    plane = resample(luminance(img), size) / 255.0
    cuts = (np.arange(grid + 1) * size) // grid
    out = np.empty(grid * grid)
    for i in range(grid):
        for j in range(grid):
            out[i * grid + j] = plane[cuts[i]:cuts[i + 1], cuts[j]:cuts[j + 1]].mean()
    return out


class GridExtractor(TransformerMixin, BaseEstimator):
    """Deterministic stand-in for a frozen convolutional feature extractor.

    Stateless: ``fit`` only records the output dimension.

    Parameters
    ----------
    grid : int
        Cells per side; output dimension is ``grid ** 2``.
    size : int
        Side length the image is resampled to before pooling.
    """

    version = "1"

    def __init__(self, grid=4, size=INPUT_SIZE):
        self.grid = grid
        self.size = size

    @property
    def descriptor(self) -> ExtractorDescriptor:
        return ExtractorDescriptor(f"grid{self.grid}", self.grid * self.grid, self.version)

    def fit(self, images=None, y=None):
        if self.grid < 1:
            raise ValueError("grid must be >= 1")
        self.n_features_out_ = self.grid * self.grid
        return self

    def transform(self, images) -> np.ndarray:
        rows = []
        for img in images:
            if not isinstance(img, RasterImage):
                img = RasterImage.open(img) if isinstance(img, (str, os.PathLike)) else RasterImage(img)
            rows.append(grid_extract(img, self.grid, self.size))
        return np.array(rows).reshape(len(rows), self.grid * self.grid)


def input_size_reduction(dim: int, image_shape=(3, INPUT_SIZE, INPUT_SIZE)) -> float:
    """Percentage by which a cached vector of ``dim`` shrinks the model input."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return 100.0 * (1.0 - dim / float(np.prod(image_shape)))


def encode_vectors(vectors: Mapping[str, np.ndarray]) -> bytes:
    items = list(vectors.items())
    dims = {np.asarray(v).shape for _, v in items}
    if len(dims) > 1:
        raise ValueError(f"vectors have mixed dimensions: {sorted(dims)}")
    dim = dims.pop()[0] if dims else 0
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", dim))
    for doc_id, values in items:
        arr = np.asarray(values, dtype="<f4")
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ValueError(f"vector for {doc_id!r} is not a finite 1-d array")
        raw_id = doc_id.encode("utf-8")
        buf.write(struct.pack("<H", len(raw_id)))
        buf.write(raw_id)
        buf.write(arr.tobytes())
    return buf.getvalue()


def decode_vectors(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise ValueError("not a vector file")
    if len(data) < 8:
        raise ValueError("truncated vector file")
    (dim,) = struct.unpack_from("<I", data, 4)
    out = {}
    pos = 8
    while pos < len(data):
        if pos + 2 > len(data):
            raise ValueError("truncated vector file")
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        end = pos + n + 4 * dim
        if end > len(data):
            raise ValueError("truncated vector file")
        doc_id = data[pos:pos + n].decode("utf-8")
        out[doc_id] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos + n).astype(np.float32)
        pos = end
    return out


def save_vectors(vectors: Mapping[str, np.ndarray], path) -> None:
    atomic_write(path, encode_vectors(vectors))


def load_vectors(path) -> dict[str, np.ndarray]:
    return decode_vectors(Path(path).read_bytes())


def format_vectors_tsv(vectors: Mapping[str, np.ndarray]) -> str:
    """Human-readable mirror of a vector cache, for debugging."""
    return "".join(
        doc_id + "\t" + " ".join(repr(float(x)) for x in vals) + "\n"
        for doc_id, vals in vectors.items()
    )


def find_images(directory) -> dict[str, Path]:
    """Map doc ids to image files named ``<doc_id>.<ext>``, sorted by doc id."""
    found = {}
    for p in sorted(Path(directory).iterdir()):
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS:
            found.setdefault(p.stem, p)
    return found


def read_manifest(lines: Iterable[str], base=".") -> dict[str, Path]:
    out = {}
    for line in lines:
        line = line.strip()
        if line and not line.startswith("#"):
            doc_id, path = line.split("\t", 1)
            out[doc_id] = Path(base) / path
    return out


def extract_vectors(images: Mapping[str, object], grid: int = 4) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Extract float32 vectors for every readable image.

    Returns the vectors and a ``doc_id -> reason`` map of failures.
    """
    extractor = GridExtractor(grid).fit()
    vectors, failures = {}, {}
    for doc_id, source in images.items():
        try:
            vectors[doc_id] = extractor.transform([source])[0].astype(np.float32)
        except (OSError, ValueError) as exc:
            failures[doc_id] = f"{type(exc).__name__}: {exc}"
    return vectors, failures
