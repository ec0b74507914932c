"""Batch figure tool: `rwdre-plots render --spec spec.json` or
`rwdre-plots render KIND CSV OUT`. Exit 2 on schema mismatches."""

from __future__ import annotations

import argparse
import json
import sys

from .render import FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="rwdre-plots")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render")
    p.add_argument("positional", nargs="*", metavar="KIND CSV OUT")
    p.add_argument("--spec", default=None, metavar="PATH", help="JSON figure spec")
    p.add_argument("--walk-csv", default=None, help="walk overlay for trajectoryRaster")
    args = parser.parse_args(argv)

    try:
        if args.spec:
            payload = json.loads(open(args.spec).read())
            spec = FigureSpec(
                payload["input_csv"], payload["kind"], payload["output"], payload.get("options", {})
            )
        elif len(args.positional) == 3:
            kind, csv_path, out = args.positional
            options = {}
            if args.walk_csv:
                options["walk_csv"] = args.walk_csv
            spec = FigureSpec(csv_path, kind, out, options)
        else:
            parser.error("either --spec PATH or positional KIND CSV OUT")
            return 2
        result = render(spec)
    except (SchemaError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
