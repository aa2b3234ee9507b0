"""Command line: export benchmark splits to probability files."""

from __future__ import annotations

import argparse
import logging
import sys

from .datasets import ExportError, REGISTRY
from .export import ExportSpec, export_probabilities


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medexport",
        description="Export pretrained-classifier softmax probabilities per split",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="export one dataset split")
    exp.add_argument("--dataset", required=True, choices=sorted(REGISTRY))
    exp.add_argument("--split", required=True, choices=("val", "validation", "test"))
    exp.add_argument("--weights", required=True, help="checkpoint file (.pth)")
    exp.add_argument("--data", required=True,
                     help="dataset npz file (e.g. dermamnist.npz)")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--device", default="cpu")
    exp.add_argument("--batch-size", type=int, default=256)
    exp.add_argument("--input-size", type=int, default=28, choices=(28, 224))
    exp.add_argument("--weights-sha256", default=None,
                     help="expected checkpoint digest; mismatch is fatal")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    spec = ExportSpec(
        dataset=args.dataset,
        split=args.split,
        weights=args.weights,
        data=args.data,
        out_dir=args.out,
        device=args.device,
        batch_size=args.batch_size,
        input_size=args.input_size,
        weights_sha256=args.weights_sha256,
    )
    try:
        out = export_probabilities(spec)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
