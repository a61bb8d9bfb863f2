"""Dataset readers and synthetic pool generators.

Parsers never shuffle: instance ids are row indices in file order. Any
malformed input raises :class:`DataFormatError` before a pool is built.

Embedding file layout (all integers little-endian)::

    b"GLEMB1\\n" | u32 N | u32 dim | u32 C | N*dim float32 | N uint8 labels
"""
from __future__ import annotations

import csv
import gzip
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from guesslearn.protocol import Pool

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
EMBEDDING_MAGIC = b"GLEMB1\n"
AGNEWS_CLASSES = 4
DEFAULT_HASH_DIM = 2**15

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


class DataFormatError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


# -- MNIST IDX ----------------------------------------------------------------

def parse_mnist_idx(image_bytes: bytes, label_bytes: bytes) -> Pool:
    """Build a pool from raw IDX image and label payloads; pixels scaled to [0, 1]."""
    if len(image_bytes) < 16:
        raise DataFormatError("image file shorter than its 16-byte header")
    if len(label_bytes) < 8:
        raise DataFormatError("label file shorter than its 8-byte header")
    magic, n_img, rows, cols = struct.unpack(">IIII", image_bytes[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    magic_l, n_lab = struct.unpack(">II", label_bytes[:8])
    if magic_l != IDX_LABELS_MAGIC:
        raise DataFormatError(f"bad label magic 0x{magic_l:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if n_img != n_lab:
        raise DataFormatError(f"image count {n_img} != label count {n_lab}")
    expected = 16 + n_img * rows * cols
    if len(image_bytes) != expected:
        raise DataFormatError(f"image payload is {len(image_bytes)} bytes, expected {expected}")
    if len(label_bytes) != 8 + n_lab:
        raise DataFormatError(f"label payload is {len(label_bytes)} bytes, expected {8 + n_lab}")
    pixels = np.frombuffer(image_bytes, dtype=np.uint8, offset=16).reshape(n_img, rows * cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"label {labels.max()} outside 0..9")
    return Pool(pixels / 255.0, labels, n_classes=10, name="mnist")


def load_mnist(images_path, labels_path) -> Pool:
    """Read an IDX image/label file pair (optionally gzipped)."""
    return parse_mnist_idx(_read_bytes(images_path), _read_bytes(labels_path))


MNIST_TEST_NAMES = (
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"),
)


def find_mnist_test(directory) -> tuple[Path, Path] | None:
    """Locate the official MNIST test pair in ``directory`` (plain or .gz)."""
    directory = Path(directory)
    for img, lab in MNIST_TEST_NAMES:
        for suffix in ("", ".gz"):
            pi, pl = directory / (img + suffix), directory / (lab + suffix)
            if pi.exists() and pl.exists():
                return pi, pl
    return None


def encode_mnist_idx(images: np.ndarray, labels: np.ndarray) -> tuple[bytes, bytes]:
    """Serialize uint8 images (n, rows, cols) and labels to IDX payloads."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    img = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + images.tobytes()
    lab = struct.pack(">II", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes()
    return img, lab


# -- AG News ------------------------------------------------------------------

def load_agnews_csv(path) -> tuple[list[str], np.ndarray]:
    """Read ``class,title,description`` rows; classes 1..4 become 0..3.

    The returned text is title and description joined by a space.
    """
    texts: list[str] = []
    labels: list[int] = []
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if len(row) != 3:
                raise DataFormatError(f"row {lineno}: expected 3 fields, got {len(row)}")
            try:
                cls = int(row[0])
            except ValueError:
                raise DataFormatError(f"row {lineno}: class {row[0]!r} is not an integer") from None
            if not 1 <= cls <= AGNEWS_CLASSES:
                raise DataFormatError(f"row {lineno}: class {cls} outside 1..{AGNEWS_CLASSES}")
            texts.append(f"{row[1]} {row[2]}")
            labels.append(cls - 1)
    return texts, np.array(labels, dtype=np.int64)


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _MASK64
    return h


class SparseVector(NamedTuple):
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        out = np.zeros(self.dim, dtype=dtype)
        out[self.indices] = self.values
        return out


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def hash_counts(text: str, dim: int = DEFAULT_HASH_DIM) -> dict[int, int]:
    """Raw token counts per bucket, before normalization."""
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"hash dimension must be a power of two, got {dim}")
    counts: dict[int, int] = {}
    for tok in tokenize(text):
        b = fnv1a_64(tok.encode("utf-8")) & (dim - 1)
        counts[b] = counts.get(b, 0) + 1
    return counts


def featurize_text_hashing(text: str, dim: int = DEFAULT_HASH_DIM) -> SparseVector:
    """Hashed bag of words, L2-normalized.

    Tokens are lowercase alphanumeric runs; bucket = FNV-1a 64-bit hash of the
    UTF-8 token masked to ``dim - 1``. Empty text gives the zero vector.
    """
    counts = hash_counts(text, dim)
    if not counts:
        return SparseVector(np.empty(0, dtype=np.int64), np.empty(0), dim)
    idx = np.array(sorted(counts), dtype=np.int64)
    val = np.array([counts[i] for i in idx], dtype=np.float64)
    return SparseVector(idx, val / np.linalg.norm(val), dim)


def agnews_pool(path, dim: int = DEFAULT_HASH_DIM) -> Pool:
    texts, labels = load_agnews_csv(path)
    X = np.zeros((len(texts), dim))
    for i, text in enumerate(texts):
        v = featurize_text_hashing(text, dim)
        X[i, v.indices] = v.values
    return Pool(X, labels, n_classes=AGNEWS_CLASSES, name="agnews")


# -- embedding files ----------------------------------------------------------

def write_embeddings(path, X: np.ndarray, y: np.ndarray, n_classes: int) -> None:
    X = np.asarray(X, dtype="<f4")
    y = np.asarray(y)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise DataFormatError("embedding matrix and labels disagree in length")
    if n_classes > 256 or (len(y) and (y.min() < 0 or y.max() >= n_classes)):
        raise DataFormatError(f"labels must lie in [0, {n_classes}) and fit in one byte")
    header = EMBEDDING_MAGIC + struct.pack("<III", X.shape[0], X.shape[1], n_classes)
    Path(path).write_bytes(header + X.tobytes() + y.astype(np.uint8).tobytes())


def parse_embeddings(data: bytes) -> Pool:
    head = len(EMBEDDING_MAGIC) + 12
    if len(data) < head or not data.startswith(EMBEDDING_MAGIC):
        raise DataFormatError("not an embedding file (bad magic)")
    N, dim, C = struct.unpack("<III", data[len(EMBEDDING_MAGIC):head])
    expected = head + 4 * N * dim + N
    if len(data) != expected:
        raise DataFormatError(
            f"header declares N={N}, dim={dim} ({expected} bytes) but file has {len(data)} bytes"
        )
    X = np.frombuffer(data, dtype="<f4", count=N * dim, offset=head).reshape(N, dim)
    y = np.frombuffer(data, dtype=np.uint8, count=N, offset=head + 4 * N * dim).astype(np.int64)
    if not np.all(np.isfinite(X)):
        raise DataFormatError("embedding payload contains non-finite values")
    if C < 1 or (N and y.max() >= C):
        raise DataFormatError(f"labels must lie in [0, {C})")
    return Pool(X.astype(np.float64), y, n_classes=C, name="embeddings")


def load_embeddings(path) -> Pool:
    return parse_embeddings(Path(path).read_bytes())


# -- synthetic pools ----------------------------------------------------------

def generate_margin_dataset(n: int, R: float, gamma: float, seed: int, dim: int = 5) -> Pool:
    """Two-class pool that is linearly separable with margin ``gamma``.

    Points are uniform in the radius-``R`` ball, rejected when closer than
    ``gamma`` to a hidden hyperplane through the origin. The hidden unit
    normal is stored on the pool as ``pool.normal``.
    """
    if not 0 < gamma < R:
        raise ValueError(f"need 0 < gamma < R, got gamma={gamma}, R={R}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(dim)
    w /= np.linalg.norm(w)
    out = np.empty((0, dim))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        dirs = rng.standard_normal((m, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = R * rng.random(m) ** (1.0 / dim)
        pts = dirs * radii[:, None]
        keep = np.abs(pts @ w) >= gamma
        out = np.concatenate([out, pts[keep]])
    X = out[:n]
    pool = Pool(X, (X @ w > 0).astype(np.int64), n_classes=2, name="margin")
    pool.normal = w
    return pool


def generate_blobs(n: int, n_classes: int, dim: int, seed: int, spread: float = 1.0,
                   separation: float = 3.0) -> Pool:
    """Balanced Gaussian class clusters; labels cycle so class counts differ by at most 1."""
    rng = np.random.default_rng(seed)
    centers = separation * rng.standard_normal((n_classes, dim))
    y = rng.permutation(np.arange(n) % n_classes)
    X = centers[y] + spread * rng.standard_normal((n, dim))
    return Pool(X, y, n_classes=n_classes, name="blobs")


@dataclass
class DatasetSpec:
    """What to load and from where. Extra keys for synthetic pools live in ``params``."""

    name: str
    paths: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def load(self) -> Pool:
        name = self.name
        p = self.paths
        if name == "mnist":
            if "images" in p and "labels" in p:
                return load_mnist(p["images"], p["labels"])
            found = find_mnist_test(p.get("dir", "."))
            if found is None:
                raise FileNotFoundError(f"no MNIST test IDX files in {p.get('dir', '.')!r}")
            return load_mnist(*found)
        if name == "agnews":
            return agnews_pool(p["csv"], int(self.params.get("hash_dim", 2**12)))
        if name == "embeddings":
            return load_embeddings(p["path"])
        if name == "synthetic":
            kind = self.params.get("kind", "blobs")
            seed = int(self.params.get("seed", 0))
            if kind == "blobs":
                return generate_blobs(
                    int(self.params.get("n", 300)),
                    int(self.params.get("classes", 10)),
                    int(self.params.get("dim", 16)),
                    seed,
                    float(self.params.get("spread", 1.0)),
                    float(self.params.get("separation", 3.0)),
                )
            if kind == "margin":
                return generate_margin_dataset(
                    int(self.params.get("n", 2000)),
                    float(self.params.get("R", 10.0)),
                    float(self.params.get("gamma", 1.0)),
                    seed,
                    int(self.params.get("dim", 5)),
                )
            raise ValueError(f"unknown synthetic kind {kind!r}")
        raise ValueError(f"unknown dataset {name!r}")
