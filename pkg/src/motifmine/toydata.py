"""Synthetic corpus generator for pipeline tests and demos.

Produces a small image set with planted structure: ``n_modes`` visually
distinct groups, tight descriptor modes per group, and a few exact
duplicate groups that back the evaluation's control questions.

Layout written to the output directory:
  images/img_NNNN.pgm   one grayscale image per id
  manifest.tsv          id<TAB>relative path
  g1.mmdf, g2.mmdf      global descriptors (dims 32 and 16)
  l1.mmdf, l2.mmdf      local descriptors (5 x dim 32, 3 x dim 16)
  controls.json         planted duplicate groups {"groups": [[ids], ...]}
  config.sample.json    a ready-to-run pipeline configuration
"""

from __future__ import annotations

import argparse
import json
import os

import numpy as np

from .descriptors import (
    KIND_GLOBAL,
    KIND_LOCAL,
    DescriptorSet,
    write_descriptors,
    write_pgm,
)

DUP_COPIES = 3  # copies added per duplicate group (group size = 4)


def _mode_centers(rng: np.random.Generator, n_modes: int, dim: int, radius: float = 3.0) -> np.ndarray:
    # mutually orthogonal directions: cross-mode cosine ~ 0, so
    # similarity-guided connection weights stay near the weight floor
    q, _ = np.linalg.qr(rng.normal(size=(dim, n_modes)))
    return radius * q.T


def _descriptor_file(
    rng: np.random.Generator,
    kind: str,
    dim: int,
    per_image: int,
    modes: np.ndarray,
    dup_sources: list[int],
    n_base: int,
    n_modes: int,
    jitter: float = 0.25,
) -> DescriptorSet:
    centers = _mode_centers(rng, n_modes, dim)
    n_images = n_base + DUP_COPIES * len(dup_sources)
    rows_per_image: list[np.ndarray] = []
    for img in range(n_base):
        base = centers[modes[img]]
        rows_per_image.append(base + rng.normal(0.0, jitter, size=(per_image, dim)))
    for src in dup_sources:
        for _ in range(DUP_COPIES):
            rows_per_image.append(rows_per_image[src])
    ids = np.repeat(np.arange(n_images, dtype=np.int64), per_image)
    vectors = np.vstack(rows_per_image).astype(np.float32)
    return DescriptorSet(
        kind=kind, dim=dim, image_count=n_images, ids=ids, vectors=vectors
    )


def generate_corpus(
    out_dir,
    n_modes: int = 8,
    per_mode: int = 7,
    dup_groups: int = 2,
    seed: int = 0,
    image_side: int = 64,
) -> dict:
    """Write the corpus; returns a summary dict (counts and paths)."""
    if n_modes < 2 or per_mode < 4:
        raise ValueError("need >= 2 modes and >= 4 images per mode")
    if dup_groups > n_modes:
        raise ValueError("at most one duplicate group per mode")
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)

    n_base = n_modes * per_mode
    modes = np.repeat(np.arange(n_modes), per_mode)
    dup_sources = [m * per_mode for m in range(dup_groups)]  # first image of mode m
    n_images = n_base + DUP_COPIES * dup_groups

    # images: coarse 8x8 block pattern per mode; per-image variation is a
    # global brightness shift (invisible to the DC-free perceptual hash)
    # plus a one-block tweak so hash distances vary a little within a mode
    patterns = rng.integers(30, 226, size=(n_modes, 8, 8))
    pixels: list[np.ndarray] = []
    scale = image_side // 8
    for img in range(n_base):
        blocks = patterns[modes[img]].copy()
        r, c = rng.integers(0, 8, size=2)
        blocks[r, c] += int(rng.choice([-1, 1]))
        canvas = np.kron(blocks, np.ones((scale, scale)))
        offset = int(rng.integers(-3, 4))
        pixels.append(np.clip(canvas + offset, 0, 255).astype(np.uint8))
    for src in dup_sources:
        for _ in range(DUP_COPIES):
            pixels.append(pixels[src])

    manifest_lines = []
    for img, pix in enumerate(pixels):
        rel = f"images/img_{img:04d}.pgm"
        write_pgm(pix, os.path.join(out_dir, rel))
        manifest_lines.append(f"{img}\t{rel}")
    with open(os.path.join(out_dir, "manifest.tsv"), "w", encoding="ascii") as fh:
        fh.write("\n".join(manifest_lines) + "\n")

    spec = {
        "g1.mmdf": (KIND_GLOBAL, 32, 1),
        "g2.mmdf": (KIND_GLOBAL, 16, 1),
        "l1.mmdf": (KIND_LOCAL, 32, 5),
        "l2.mmdf": (KIND_LOCAL, 16, 3),
    }
    for fname, (kind, dim, per_image) in spec.items():
        dset = _descriptor_file(
            rng, kind, dim, per_image, modes, dup_sources, n_base, n_modes
        )
        write_descriptors(dset, os.path.join(out_dir, fname))

    groups = [
        [src] + [n_base + g * DUP_COPIES + t for t in range(DUP_COPIES)]
        for g, src in enumerate(dup_sources)
    ]
    with open(os.path.join(out_dir, "controls.json"), "w", encoding="ascii") as fh:
        json.dump({"groups": groups}, fh, sort_keys=True)
        fh.write("\n")

    sample_config = {
        "feature": {"type": "phash", "name": "phash"},
        "index": {
            "n_centroids": n_modes,
            "m_subquantizers": 4,
            "n_bits": 4,
            "opq": "identity",
            "kmeans_iters": 25,
            "seed": 0,
        },
        "graph": {"k": 50, "nprobe": 1, "seed": 0},
        "connection": {"strategy": "er", "c": 1.0, "seed": 0},
        "cluster": {"method": "louvain", "resolution": 1.0, "seed": 0},
        "paths": {"corpus": ".", "out": "runs"},
    }
    with open(os.path.join(out_dir, "config.sample.json"), "w", encoding="ascii") as fh:
        json.dump(sample_config, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return {
        "out_dir": str(out_dir),
        "n_images": n_images,
        "n_modes": n_modes,
        "control_groups": groups,
        "descriptor_files": sorted(spec),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="generate a synthetic motif corpus")
    ap.add_argument("out_dir")
    ap.add_argument("--modes", type=int, default=8)
    ap.add_argument("--per-mode", type=int, default=7)
    ap.add_argument("--dup-groups", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    summary = generate_corpus(
        args.out_dir,
        n_modes=args.modes,
        per_mode=args.per_mode,
        dup_groups=args.dup_groups,
        seed=args.seed,
    )
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
