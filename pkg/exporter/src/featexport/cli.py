"""featexport command line: encode a description file into FEATMAT1."""

from __future__ import annotations

import argparse
import sys

from .descriptions import DescriptionSet
from .encoders import EncoderError
from .export import export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featexport",
        description="Encode blank-line-separated class descriptions into a FEATMAT1 feature file.",
    )
    parser.add_argument("input", help="description file (UTF-8; blocks separated by blank lines)")
    parser.add_argument("output", help="output feature file path")
    parser.add_argument("--encoder", default="hash:64", help="encoder id: hash:<dim> or a sentence-transformers model")
    parser.add_argument("--kind", default="hoi", choices=("hoi", "action", "object"), help="feature kind tag")
    parser.add_argument(
        "--object-template",
        action="store_true",
        help="treat each input block as an object name and encode 'a photo of <object>'",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        descriptions = DescriptionSet.load(args.input)
        if args.object_template:
            descriptions = DescriptionSet.from_object_names(descriptions.names)
        rows = export(descriptions, args.encoder, args.output, kind=args.kind)
    except FileNotFoundError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except EncoderError as exc:
        print(f"error: environment: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {rows.shape[0]} x {rows.shape[1]} features to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
