"""Command-line entry point: fetch and convert."""

from __future__ import annotations

import argparse
import sys

from .convert import convert
from .errors import ConvertError, FetchError, FormatError, IngestError
from .fetch import fetch
from .manifest import load_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icemamba-ingest",
        description="Fetch raw SIC/reanalysis archives and convert them to IMGR series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fetch = sub.add_parser("fetch", help="download manifest URLs with checksum records")
    p_fetch.add_argument("--manifest", required=True)
    p_fetch.add_argument("--dest", required=True)

    p_convert = sub.add_parser("convert", help="convert raw files to IMGR plus stats manifest")
    p_convert.add_argument("--manifest", required=True)
    p_convert.add_argument("--raw", required=True, nargs="+", help="raw files or directories")
    p_convert.add_argument("--out", required=True)
    return parser


def _expand(paths):
    from pathlib import Path

    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out += sorted(x for x in p.iterdir() if x.is_file() and not x.name.endswith(".json"))
        else:
            out.append(p)
    return out


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        manifest = load_manifest(args.manifest)
        if args.command == "fetch":
            paths = fetch(manifest, args.dest)
            print(f"fetched {len(paths)} file(s) into {args.dest}")
            return 0
        written = convert(_expand(args.raw), manifest, args.out)
        print(f"wrote {', '.join(str(p) for p in written.values())}")
        return 0
    except FetchError as exc:
        print(f"icemamba-ingest: fetch error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ConvertError) as exc:
        print(f"icemamba-ingest: data error: {exc}", file=sys.stderr)
        return 2
    except IngestError as exc:
        print(f"icemamba-ingest: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
