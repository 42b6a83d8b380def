"""Descriptor ingestion and preparation.

Covers the MMDF descriptor file format, PGM raster input, the DCT-based
perceptual hash, PCA reduction of global descriptors, and fusion of a
16-dim global tag onto every local descriptor of an image.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn

MMDF_MAGIC = b"MMDF"
MMDF_VERSION = 1
_HEADER = struct.Struct("<4sIBIQQ")  # magic, version, kind, dim, image_count, record_count

KIND_LOCAL = "local"
KIND_GLOBAL = "global"
_KIND_CODES = {KIND_LOCAL: 0, KIND_GLOBAL: 1}
_KIND_NAMES = {0: KIND_LOCAL, 1: KIND_GLOBAL}


class DescriptorFormatError(ValueError):
    """Malformed MMDF header or structurally invalid descriptor set."""


class DimensionMismatchError(ValueError):
    """Record payload does not match the dimension declared in the header."""


class ImageIdRangeError(ValueError):
    """A record references an image id outside [0, image_count)."""


class NonFiniteValueError(ValueError):
    """A descriptor component is NaN or infinite."""


@dataclass
class DescriptorSet:
    """Feature vectors with image-id back-mapping.

    ``global`` sets carry exactly one vector per image id; ``local`` sets
    carry zero or more. ``ids[i]`` is the source image of ``vectors[i]``.
    """

    kind: str
    dim: int
    image_count: int
    ids: np.ndarray  # (n,) int64
    vectors: np.ndarray  # (n, dim) float32
    _rows_by_image: dict[int, np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.kind not in _KIND_CODES:
            raise DescriptorFormatError(f"unknown descriptor kind {self.kind!r}")
        if self.dim < 1 or self.image_count < 1:
            raise DescriptorFormatError("dim and image_count must be positive")
        if self.vectors.ndim != 2 or self.vectors.shape != (self.ids.shape[0], self.dim):
            raise DimensionMismatchError(
                f"vectors shape {self.vectors.shape} does not match "
                f"{self.ids.shape[0]} records of dim {self.dim}"
            )
        if self.ids.size and (self.ids.min() < 0 or self.ids.max() >= self.image_count):
            raise ImageIdRangeError(
                f"image ids must lie in [0, {self.image_count})"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise NonFiniteValueError("descriptor vectors contain NaN or Inf")
        if self.kind == KIND_GLOBAL:
            counts = np.bincount(self.ids, minlength=self.image_count)
            if not np.all(counts == 1):
                bad = int(np.flatnonzero(counts != 1)[0])
                raise DescriptorFormatError(
                    f"global set must have exactly one vector per image (image {bad} has {counts[bad]})"
                )

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def rows_for(self, image_id: int) -> np.ndarray:
        """Row indices of all vectors belonging to ``image_id`` (file order)."""
        if self._rows_by_image is None:
            by_image: dict[int, list[int]] = {}
            for row, i in enumerate(self.ids):
                by_image.setdefault(int(i), []).append(row)
            self._rows_by_image = {
                i: np.asarray(rows, dtype=np.int64) for i, rows in by_image.items()
            }
        return self._rows_by_image.get(int(image_id), np.empty(0, dtype=np.int64))

    def feature_refs(self) -> np.ndarray:
        """(n, 2) array of (image_id, per-image ordinal), in storage order."""
        refs = np.empty((len(self), 2), dtype=np.int64)
        seen: dict[int, int] = {}
        for row, i in enumerate(self.ids):
            i = int(i)
            ordinal = seen.get(i, 0)
            refs[row, 0] = i
            refs[row, 1] = ordinal
            seen[i] = ordinal + 1
        return refs


def write_descriptors(dset: DescriptorSet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MMDF_MAGIC,
                MMDF_VERSION,
                _KIND_CODES[dset.kind],
                dset.dim,
                dset.image_count,
                len(dset),
            )
        )
        rec = np.empty(
            len(dset), dtype=np.dtype([("id", "<u8"), ("v", "<f4", (dset.dim,))])
        )
        rec["id"] = dset.ids
        rec["v"] = dset.vectors
        fh.write(rec.tobytes())


def read_descriptors(path) -> DescriptorSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DescriptorFormatError(f"{path}: file shorter than MMDF header")
    magic, version, kind_code, dim, image_count, record_count = _HEADER.unpack_from(raw)
    if magic != MMDF_MAGIC:
        raise DescriptorFormatError(f"{path}: bad magic {magic!r}")
    if version != MMDF_VERSION:
        raise DescriptorFormatError(f"{path}: unsupported version {version}")
    if kind_code not in _KIND_NAMES:
        raise DescriptorFormatError(f"{path}: unknown kind code {kind_code}")
    if dim < 1:
        raise DescriptorFormatError(f"{path}: non-positive dim {dim}")
    payload = raw[_HEADER.size:]
    rec_size = 8 + 4 * dim
    if len(payload) != record_count * rec_size:
        raise DimensionMismatchError(
            f"{path}: payload is {len(payload)} bytes, expected "
            f"{record_count} records of {rec_size} bytes (dim {dim})"
        )
    rec = np.frombuffer(
        payload, dtype=np.dtype([("id", "<u8"), ("v", "<f4", (dim,))]), count=record_count
    )
    ids = rec["id"].astype(np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= image_count):
        raise ImageIdRangeError(f"{path}: image id out of range [0, {image_count})")
    vectors = rec["v"].reshape(record_count, dim)
    if not np.all(np.isfinite(vectors)):
        raise NonFiniteValueError(f"{path}: non-finite descriptor component")
    return DescriptorSet(
        kind=_KIND_NAMES[kind_code],
        dim=int(dim),
        image_count=int(image_count),
        ids=ids,
        vectors=np.array(vectors),
    )


# -- PGM raster input ---------------------------------------------------------


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5, maxval <= 255) into a (h, w) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError(f"{path}: empty image")
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).copy()


def write_pgm(image: np.ndarray, path) -> None:
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.clip(np.rint(image), 0, 255).astype(np.uint8).tobytes())


# -- perceptual hash ----------------------------------------------------------


def _bilinear_resize(image: np.ndarray, side: int) -> np.ndarray:
    """Deterministic bilinear resampling to side x side, no antialiasing.

    Uses the align-corners mapping so a same-size resize is the identity.
    """
    src = np.asarray(image, dtype=np.float64)
    h, w = src.shape
    ys = np.linspace(0.0, h - 1.0, side) if side > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, side) if side > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def phash(image: np.ndarray, side: int = 32) -> np.ndarray:
    """16-dim real perceptual hash: low-frequency DCT block, DC zeroed.

    The image is resampled to ``side`` x ``side``, transformed with an
    orthonormal 2-D DCT-II, and the 4x4 lowest-frequency block is returned
    row-major with the (0, 0) coefficient forced to 0.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("phash requires a non-empty 2-D grayscale image")
    if side < 4:
        raise ValueError("side must be >= 4")
    small = _bilinear_resize(image, side)
    coeffs = dctn(small, type=2, norm="ortho")
    block = coeffs[:4, :4].copy()
    block[0, 0] = 0.0
    return block.reshape(16)


def phash_descriptors(images: list[np.ndarray], side: int = 32) -> DescriptorSet:
    """Global descriptor set of perceptual hashes, one per image in id order."""
    if not images:
        raise ValueError("no images given")
    vecs = np.stack([phash(im, side=side) for im in images]).astype(np.float32)
    return DescriptorSet(
        kind=KIND_GLOBAL,
        dim=16,
        image_count=len(images),
        ids=np.arange(len(images), dtype=np.int64),
        vectors=vecs,
    )


# -- PCA ----------------------------------------------------------------------


@dataclass
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (out_dim, d), row-orthonormal
    explained_variance: np.ndarray  # (out_dim,), non-increasing

    @property
    def input_dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.components.shape[0])


def fit_pca(globals_set: DescriptorSet, out_dim: int = 16) -> PcaModel:
    """Fit PCA on a global descriptor set.

    Components are the top right singular vectors of the centered data,
    sign-fixed so each component's largest-magnitude entry is positive.
    Explained variances use the n-1 covariance convention.
    """
    if globals_set.kind != KIND_GLOBAL:
        raise ValueError("fit_pca expects a global descriptor set")
    x = globals_set.vectors.astype(np.float64)
    n, d = x.shape
    if n < out_dim:
        raise ValueError(f"need at least {out_dim} vectors, got {n}")
    if d < out_dim:
        raise ValueError(f"input dim {d} smaller than out_dim {out_dim}")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    components = vt[:out_dim].copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    explained = (s[:out_dim] ** 2) / max(n - 1, 1)
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def project(model: PcaModel, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.input_dim,):
        raise ValueError(f"vector length {v.shape} != model input dim {model.input_dim}")
    return model.components @ (v - model.mean)


# -- tag fusion ---------------------------------------------------------------


@dataclass
class TaggedDescriptorSet:
    base_local: DescriptorSet
    tag_dim: int
    fused: DescriptorSet  # local kind, dim = base dim + tag_dim


def _unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    return v / norm if norm > 0 else v


def fuse_tags(
    local: DescriptorSet,
    globals_set: DescriptorSet,
    model: PcaModel,
    tag_weight: float = 1.0,
    normalize: bool = True,
) -> TaggedDescriptorSet:
    """Append each image's projected global tag to all of its local vectors.

    With ``normalize`` (the default) the local prefix and the tag are
    L2-normalized independently before concatenation and the tag block is
    scaled by ``tag_weight``; raw concatenation is available with
    ``normalize=False``.
    """
    if local.kind != KIND_LOCAL:
        raise ValueError("fuse_tags expects a local descriptor set")
    if globals_set.kind != KIND_GLOBAL:
        raise ValueError("fuse_tags expects a global descriptor set for tags")
    if globals_set.image_count < local.image_count:
        raise ValueError("global set does not cover all local images")
    present = np.unique(local.ids)
    tag_dim = model.out_dim
    tags = np.zeros((local.image_count, tag_dim), dtype=np.float64)
    for i in present:
        rows = globals_set.rows_for(int(i))
        if rows.size == 0:
            raise ValueError(f"image {int(i)} has local features but no global vector")
        tag = project(model, globals_set.vectors[rows[0]].astype(np.float64))
        if normalize:
            tag = _unit(tag)
        tags[i] = tag_weight * tag

    prefix = local.vectors.astype(np.float64)
    if normalize:
        norms = np.linalg.norm(prefix, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        prefix = prefix / norms
    fused_vectors = np.hstack([prefix, tags[local.ids]]).astype(np.float32)
    fused = DescriptorSet(
        kind=KIND_LOCAL,
        dim=local.dim + tag_dim,
        image_count=local.image_count,
        ids=local.ids.copy(),
        vectors=fused_vectors,
    )
    return TaggedDescriptorSet(base_local=local, tag_dim=tag_dim, fused=fused)
