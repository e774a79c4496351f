"""Command-line entry point for the corpus-to-inputs conversion."""

from __future__ import annotations

import argparse
import logging
import sys

from .adapter import AdapterJob, embed_corpus
from .providers import ProviderError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="embed-adapter", description=__doc__)
    p.add_argument("--in", dest="corpus", required=True, help="directory of <report_id>.txt files")
    p.add_argument("--labels", required=True, help="sentence label csv")
    p.add_argument("--meta", required=True, help="report metadata csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--provider", default="hash", help="hash | http")
    p.add_argument("--model", default=None, help="provider model identifier")
    p.add_argument("--dim", type=int, default=64, help="dimension for the local provider")
    p.add_argument("--batch-size", type=int, default=16, help="reports per provider call")
    p.add_argument("--journal", default=None, help="journal path (default <out>/journal.jsonl)")
    p.add_argument("--max-attempts", type=int, default=5)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    job = AdapterJob(
        corpus_dir=args.corpus,
        labels_path=args.labels,
        meta_path=args.meta,
        out_dir=args.out,
        provider_name=args.provider,
        model=args.model,
        dim=args.dim,
        batch_size=args.batch_size,
        journal_path=args.journal,
        max_attempts=args.max_attempts,
    )
    try:
        meta = embed_corpus(job)
    except ProviderError as exc:
        print(f"provider failed; progress journaled for resume: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {meta['n_reports']} reports with groups {meta['groups']} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
