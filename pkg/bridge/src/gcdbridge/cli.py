"""Command-line entry: gcd-extract."""

from __future__ import annotations

import argparse
import sys

from gcdbridge.encoders import get_encoder
from gcdbridge.extract import extract


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gcd-extract",
        description="Export a class-per-subdirectory image tree as embedding/label "
                    "files for the discovery engine",
    )
    parser.add_argument("--images-dir", required=True)
    parser.add_argument("--out-prefix", required=True)
    parser.add_argument("--encoder", default="pixels", choices=("pixels", "vit"))
    parser.add_argument("--old-fraction", type=float, default=0.5)
    parser.add_argument("--labelled-fraction", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        encoder = get_encoder(args.encoder)
        result = extract(args.images_dir, args.out_prefix, encoder,
                         old_fraction=args.old_fraction,
                         labelled_fraction=args.labelled_fraction,
                         seed=args.seed)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.feature_path} and {result.label_path}: "
          f"{result.num_rows} rows, dim {result.dim}, "
          f"K={result.num_classes}, M={result.num_old}, "
          f"{result.num_labelled} labelled, {result.skipped} skipped")
    return 0


if __name__ == "__main__":
    sys.exit(main())
