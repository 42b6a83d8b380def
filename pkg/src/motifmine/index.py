"""Inverted-file product-quantization index with optional learned rotation.

Wire format (MMIX, little-endian):
  magic "MMIX" | version u32 = 1
  | n_centroids u32 | m u32 | n_bits u32 | opq u8 (0 identity, 1 learned)
  | kmeans_iters u32 | seed i64 | dim u32
  | rotation f32[dim*dim] | centroids f32[n_centroids*dim]
  | codebooks f32[m * 2^n_bits * dim/m]
  | per list: length u64, then records (image_id u64, ordinal u32, code u8[m])
Codes are u16 instead of u8 when n_bits > 8. Arrays are snapped to f32 at
train time so queries behave identically before and after a save/load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .descriptors import DescriptorSet, TaggedDescriptorSet
from .kmeans import kmeans

MMIX_MAGIC = b"MMIX"
MMIX_VERSION = 1
_FIXED = struct.Struct("<4sIIIIBIqI")

OPQ_IDENTITY = "identity"
OPQ_LEARNED = "learned"
_OPQ_ROUNDS = 10


@dataclass(frozen=True)
class IndexConfig:
    n_centroids: int = 256
    m_subquantizers: int = 8
    n_bits: int = 8
    opq: str = OPQ_IDENTITY
    kmeans_iters: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.n_centroids < 1:
            raise ValueError("n_centroids must be >= 1")
        if self.m_subquantizers < 1:
            raise ValueError("m_subquantizers must be >= 1")
        if not 1 <= self.n_bits <= 16:
            raise ValueError("n_bits must be in [1, 16]")
        if self.opq not in (OPQ_IDENTITY, OPQ_LEARNED):
            raise ValueError(f"unknown opq mode {self.opq!r}")

    @property
    def n_codes(self) -> int:
        return 1 << self.n_bits


@dataclass
class IvfPqIndex:
    config: IndexConfig
    dim: int
    rotation: np.ndarray  # (dim, dim) float64, orthonormal
    coarse_centroids: np.ndarray  # (n_centroids, dim) float64
    codebooks: np.ndarray  # (m, n_codes, dim/m) float64
    list_ids: list = field(default_factory=list)  # per list: (l,) int64 image ids
    list_ordinals: list = field(default_factory=list)  # per list: (l,) int64
    list_codes: list = field(default_factory=list)  # per list: (l, m) uint8/uint16

    @property
    def n_features(self) -> int:
        return int(sum(ids.shape[0] for ids in self.list_ids))

    @property
    def sub_dim(self) -> int:
        return self.dim // self.config.m_subquantizers


def _snap_f32(a: np.ndarray) -> np.ndarray:
    # keep in-memory math identical to what survives f32 serialization
    return a.astype(np.float32).astype(np.float64)


def _code_dtype(n_bits: int):
    return np.uint8 if n_bits <= 8 else np.uint16


def _fit_codebooks(residuals: np.ndarray, m: int, n_codes: int, iters: int, seed: int) -> np.ndarray:
    n, dim = residuals.shape
    sub = dim // m
    books = np.empty((m, n_codes, sub))
    for j in range(m):
        block = residuals[:, j * sub:(j + 1) * sub]
        books[j] = kmeans(block, n_codes, iters=iters, seed=seed + j).centroids
    return books


def _encode(residuals: np.ndarray, codebooks: np.ndarray, n_bits: int) -> np.ndarray:
    n = residuals.shape[0]
    m, _, sub = codebooks.shape
    codes = np.empty((n, m), dtype=_code_dtype(n_bits))
    for j in range(m):
        block = residuals[:, j * sub:(j + 1) * sub]
        codes[:, j], _ = kernels.nearest_centroid(block, codebooks[j])
    return codes


def _decode(codes: np.ndarray, codebooks: np.ndarray) -> np.ndarray:
    m = codebooks.shape[0]
    parts = [codebooks[j][codes[:, j].astype(np.int64)] for j in range(m)]
    return np.hstack(parts)


def _learn_rotation(x: np.ndarray, config: IndexConfig) -> np.ndarray:
    """Alternating optimization of an orthonormal rotation against a plain PQ.

    Each round refits the per-block codebooks on the rotated sample, then
    solves the orthogonal Procrustes problem between the sample and its
    reconstruction.
    """
    dim = x.shape[1]
    rotation = np.eye(dim)
    for _ in range(_OPQ_ROUNDS):
        xr = x @ rotation
        books = _fit_codebooks(xr, config.m_subquantizers, config.n_codes,
                               config.kmeans_iters, config.seed)
        recon = _decode(_encode(xr, books, config.n_bits), books)
        u, _, vt = np.linalg.svd(x.T @ recon)
        rotation = u @ vt
    return rotation


def train(vectors: np.ndarray, config: IndexConfig) -> IvfPqIndex:
    """Train coarse centroids, codebooks, and rotation; lists start empty."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training sample must be a non-empty 2-D array")
    n, dim = x.shape
    if dim % config.m_subquantizers != 0:
        raise ValueError(
            f"dim {dim} not divisible by m_subquantizers {config.m_subquantizers}"
        )
    need = max(config.n_centroids, config.n_codes)
    if n < need:
        raise ValueError(f"training sample too small: {n} < {need}")

    if config.opq == OPQ_LEARNED:
        rotation = _snap_f32(_learn_rotation(x, config))
    else:
        rotation = np.eye(dim)
    xr = x @ rotation

    coarse = kmeans(xr, config.n_centroids, iters=config.kmeans_iters, seed=config.seed)
    centroids = _snap_f32(coarse.centroids)
    assign, _ = kernels.nearest_centroid(xr, centroids)
    residuals = xr - centroids[assign]
    codebooks = _snap_f32(
        _fit_codebooks(residuals, config.m_subquantizers, config.n_codes,
                       config.kmeans_iters, config.seed + 1000)
    )
    return IvfPqIndex(
        config=config,
        dim=dim,
        rotation=rotation,
        coarse_centroids=centroids,
        codebooks=codebooks,
        list_ids=[np.empty(0, dtype=np.int64) for _ in range(config.n_centroids)],
        list_ordinals=[np.empty(0, dtype=np.int64) for _ in range(config.n_centroids)],
        list_codes=[
            np.empty((0, config.m_subquantizers), dtype=_code_dtype(config.n_bits))
            for _ in range(config.n_centroids)
        ],
    )


def add(index: IvfPqIndex, dset: DescriptorSet | TaggedDescriptorSet) -> IvfPqIndex:
    """Encode and append every vector of the set to its nearest coarse list."""
    if isinstance(dset, TaggedDescriptorSet):
        dset = dset.fused
    if dset.dim != index.dim:
        raise ValueError(f"descriptor dim {dset.dim} != index dim {index.dim}")
    if len(dset) == 0:
        return index
    xr = dset.vectors.astype(np.float64) @ index.rotation
    assign, _ = kernels.nearest_centroid(xr, index.coarse_centroids)
    codes = _encode(xr - index.coarse_centroids[assign], index.codebooks,
                    index.config.n_bits)
    refs = dset.feature_refs()
    for c in np.unique(assign):
        rows = np.flatnonzero(assign == c)
        index.list_ids[c] = np.concatenate([index.list_ids[c], refs[rows, 0]])
        index.list_ordinals[c] = np.concatenate([index.list_ordinals[c], refs[rows, 1]])
        index.list_codes[c] = np.vstack([index.list_codes[c], codes[rows]])
    return index


@dataclass(frozen=True)
class QueryHit:
    image_id: int
    ordinal: int
    distance: float


def query(index: IvfPqIndex, q: np.ndarray, k: int, nprobe: int = 1) -> list[QueryHit]:
    """ADC scan of the nprobe nearest lists; hits ascend by distance.

    Distances are non-squared L2 between the query residual and the code
    reconstruction. Equal distances order by (image_id, ordinal).
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape} != index dim {index.dim}")
    if k < 0:
        raise ValueError("k must be >= 0")
    if not 1 <= nprobe <= index.config.n_centroids:
        raise ValueError("nprobe must be in [1, n_centroids]")
    if k == 0:
        return []
    qr = q @ index.rotation
    d2 = np.einsum("kd,kd->k", index.coarse_centroids - qr, index.coarse_centroids - qr)
    probe = np.argsort(d2, kind="stable")[:nprobe]

    m = index.config.m_subquantizers
    sub = index.sub_dim
    dists, ids, ordinals = [], [], []
    for c in probe:
        codes = index.list_codes[c]
        if codes.shape[0] == 0:
            continue
        r = (qr - index.coarse_centroids[c]).reshape(m, 1, sub)
        lut = np.einsum("mks,mks->mk", index.codebooks - r, index.codebooks - r)
        acc = kernels.accumulate_code_distances(codes, lut.astype(np.float32))
        dists.append(np.sqrt(np.clip(acc.astype(np.float64), 0.0, None)))
        ids.append(index.list_ids[c])
        ordinals.append(index.list_ordinals[c])
    if not dists:
        return []
    dist = np.concatenate(dists)
    iid = np.concatenate(ids)
    order = np.concatenate(ordinals)
    top = np.lexsort((order, iid, dist))[:k]
    return [QueryHit(int(iid[t]), int(order[t]), float(dist[t])) for t in top]


def reconstruction_error(index: IvfPqIndex, vectors: np.ndarray) -> float:
    """Mean squared error of rotate -> coarse quantize -> PQ round trip."""
    xr = np.asarray(vectors, dtype=np.float64) @ index.rotation
    assign, _ = kernels.nearest_centroid(xr, index.coarse_centroids)
    residuals = xr - index.coarse_centroids[assign]
    recon = _decode(_encode(residuals, index.codebooks, index.config.n_bits),
                    index.codebooks)
    return float(np.mean(np.sum((residuals - recon) ** 2, axis=1)))


def save_index(index: IvfPqIndex, path) -> None:
    cfg = index.config
    with open(path, "wb") as fh:
        fh.write(_FIXED.pack(
            MMIX_MAGIC, MMIX_VERSION, cfg.n_centroids, cfg.m_subquantizers,
            cfg.n_bits, 1 if cfg.opq == OPQ_LEARNED else 0,
            cfg.kmeans_iters, cfg.seed, index.dim,
        ))
        fh.write(index.rotation.astype("<f4").tobytes())
        fh.write(index.coarse_centroids.astype("<f4").tobytes())
        fh.write(index.codebooks.astype("<f4").tobytes())
        code_dt = "<u1" if cfg.n_bits <= 8 else "<u2"
        for ids, ords, codes in zip(index.list_ids, index.list_ordinals, index.list_codes):
            fh.write(struct.pack("<Q", ids.shape[0]))
            rec = np.empty(ids.shape[0], dtype=np.dtype(
                [("id", "<u8"), ("ord", "<u4"), ("code", code_dt, (cfg.m_subquantizers,))]
            ))
            rec["id"] = ids
            rec["ord"] = ords
            rec["code"] = codes
            fh.write(rec.tobytes())


def load_index(path) -> IvfPqIndex:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _FIXED.size or raw[:4] != MMIX_MAGIC:
        raise ValueError(f"{path}: not an MMIX index file")
    (_, version, n_centroids, m, n_bits, opq_code,
     kmeans_iters, seed, dim) = _FIXED.unpack_from(raw)
    if version != MMIX_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    cfg = IndexConfig(
        n_centroids=n_centroids, m_subquantizers=m, n_bits=n_bits,
        opq=OPQ_LEARNED if opq_code else OPQ_IDENTITY,
        kmeans_iters=kmeans_iters, seed=seed,
    )
    pos = _FIXED.size

    def take(count):
        nonlocal pos
        a = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos += 4 * count
        return a

    rotation = take(dim * dim).reshape(dim, dim)
    centroids = take(n_centroids * dim).reshape(n_centroids, dim)
    sub = dim // m
    codebooks = take(m * cfg.n_codes * sub).reshape(m, cfg.n_codes, sub)
    code_dt = "<u1" if n_bits <= 8 else "<u2"
    rec_dt = np.dtype([("id", "<u8"), ("ord", "<u4"), ("code", code_dt, (m,))])
    list_ids, list_ordinals, list_codes = [], [], []
    for _ in range(n_centroids):
        (length,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        rec = np.frombuffer(raw, dtype=rec_dt, count=length, offset=pos)
        pos += length * rec_dt.itemsize
        list_ids.append(rec["id"].astype(np.int64))
        list_ordinals.append(rec["ord"].astype(np.int64))
        list_codes.append(np.array(rec["code"], dtype=_code_dtype(n_bits)).reshape(length, m))
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return IvfPqIndex(
        config=cfg, dim=dim, rotation=rotation, coarse_centroids=centroids,
        codebooks=codebooks, list_ids=list_ids, list_ordinals=list_ordinals,
        list_codes=list_codes,
    )
