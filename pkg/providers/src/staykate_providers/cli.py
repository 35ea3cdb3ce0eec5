"""Command-line entry points for the two export scripts."""

from __future__ import annotations

import argparse
import logging
import sys

from .embeddings import export_embeddings
from .errors import ProviderError
from .manifest import load_provider_manifest
from .token_probs import export_token_probs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staykate-providers",
        description="Produce token-probability and embedding input files",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-token-probs", help="fine-tune an encoder and export probabilities")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--splits", required=True, help="splits.json from the selection toolkit")
    p.add_argument("--seed", required=True, type=int, help="pool seed inside the splits file")
    p.add_argument("--provider-manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dev-pseudo", default=None, help="pseudo-label file for early stopping")
    p.set_defaults(fn=_cmd_token_probs)

    p = sub.add_parser("export-embeddings", help="embed sentences through an endpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--provider-manifest", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--splits", default="train,test", help="comma-separated split names")
    p.set_defaults(fn=_cmd_embeddings)
    return parser


def _cmd_token_probs(args: argparse.Namespace) -> int:
    manifest = load_provider_manifest(args.provider_manifest)
    count = export_token_probs(
        args.corpus, args.manifest, args.splits, args.seed, manifest, args.out,
        dev_pseudo_path=args.dev_pseudo,
    )
    print(f"wrote {count} probability records to {args.out}")
    return 0


def _cmd_embeddings(args: argparse.Namespace) -> int:
    manifest = load_provider_manifest(args.provider_manifest)
    count = export_embeddings(
        args.corpus, args.manifest, manifest, args.out, endpoint=args.endpoint,
        splits=tuple(s.strip() for s in args.splits.split(",") if s.strip()),
    )
    print(f"wrote {count} embedding records to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ProviderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
