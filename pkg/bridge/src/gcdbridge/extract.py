"""Walk a class-per-subdirectory image tree and emit engine-ready files.

Output follows the engine's external byte contracts exactly:

  <prefix>.dgce   magic "DGCE", u32 version=1, u32 n, u32 d, n*d float32 rows
  <prefix>.dgcl   magic "DGCL", u32 version=1, u32 n, u32 M, u32 K,
                  n int32 class ids, n mask bytes (1 = labelled)
  <prefix>.classes.json   class-name -> id sidecar for traceability

Classes map to ids in sorted-name order; the first `old_fraction` of classes
(rounded, at least one) are the known ("old") ones, and within each old class
`labelled_fraction` of the rows (rounded) get a visible label, chosen by the
seeded generator. Feature rows are l2-normalized float32.
"""

from __future__ import annotations

import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}


@dataclass
class SplitSpec:
    class_names: list
    num_old: int
    labelled_fraction: float

    def __post_init__(self):
        if not (0 < self.num_old <= len(self.class_names)):
            raise ValueError("old-class count must lie in [1, num classes]")
        if not (0 < self.labelled_fraction <= 1):
            raise ValueError("labelled fraction must lie in (0, 1]")


@dataclass
class ExtractResult:
    feature_path: Path
    label_path: Path
    classmap_path: Path
    num_rows: int
    dim: int
    num_old: int
    num_classes: int
    num_labelled: int
    skipped: int


def list_classes(images_dir: Path) -> list:
    classes = sorted(p.name for p in images_dir.iterdir() if p.is_dir())
    if not classes:
        raise ValueError(f"no class subdirectories under {images_dir}")
    return classes


def iter_image_paths(class_dir: Path):
    return sorted(p for p in class_dir.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


def extract(images_dir, out_prefix, encoder, old_fraction: float = 0.5,
            labelled_fraction: float = 0.5, seed: int = 0,
            warn_stream=None) -> ExtractResult:
    from PIL import Image, UnidentifiedImageError

    if warn_stream is None:
        warn_stream = sys.stderr
    images_dir = Path(images_dir)
    classes = list_classes(images_dir)
    num_old = max(1, round(old_fraction * len(classes)))
    spec = SplitSpec(classes, num_old, labelled_fraction)

    rows = []
    labels = []
    skipped = 0
    for class_id, name in enumerate(spec.class_names):
        class_rows = 0
        for path in iter_image_paths(images_dir / name):
            try:
                with Image.open(path) as img:
                    vec = np.asarray(encoder(img), dtype=np.float32)
            except (OSError, UnidentifiedImageError):
                skipped += 1
                print(f"warning: skipping unreadable image {path}", file=warn_stream)
                continue
            norm = float(np.linalg.norm(vec))
            if norm <= 1e-12:
                skipped += 1
                print(f"warning: skipping degenerate embedding for {path}", file=warn_stream)
                continue
            rows.append(vec / norm)
            labels.append(class_id)
            class_rows += 1
        if class_rows == 0:
            raise ValueError(f"class {name!r} has no readable images")

    feats = np.stack(rows).astype(np.float32)
    gt = np.asarray(labels, dtype=np.int32)
    n, d = feats.shape

    rng = np.random.default_rng(np.uint64(seed))
    mask = np.zeros(n, dtype=np.uint8)
    for class_id in range(spec.num_old):
        idx = np.flatnonzero(gt == class_id)
        n_lab = round(spec.labelled_fraction * idx.size)
        chosen = rng.choice(idx, size=n_lab, replace=False)
        mask[chosen] = 1

    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    feature_path = out_prefix.with_suffix(".dgce")
    label_path = out_prefix.with_suffix(".dgcl")
    classmap_path = out_prefix.with_suffix(".classes.json")

    with open(feature_path, "wb") as f:
        f.write(b"DGCE")
        f.write(struct.pack("<III", 1, n, d))
        f.write(feats.tobytes(order="C"))
    with open(label_path, "wb") as f:
        f.write(b"DGCL")
        f.write(struct.pack("<IIII", 1, n, spec.num_old, len(spec.class_names)))
        f.write(gt.astype("<i4").tobytes(order="C"))
        f.write(mask.tobytes(order="C"))
    with open(classmap_path, "w", encoding="utf-8") as f:
        json.dump({name: i for i, name in enumerate(spec.class_names)}, f,
                  indent=2, sort_keys=True)
        f.write("\n")

    return ExtractResult(
        feature_path=feature_path,
        label_path=label_path,
        classmap_path=classmap_path,
        num_rows=n,
        dim=d,
        num_old=spec.num_old,
        num_classes=len(spec.class_names),
        num_labelled=int(mask.sum()),
        skipped=skipped,
    )
